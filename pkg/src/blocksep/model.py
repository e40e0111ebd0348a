"""Local Gaussian source model: full-rank spatial covariance per frequency
combined with a hierarchical NMF spectral variance.

Each source's spectral variance is V = (Wx Ux Gx Hx) o (Wf Uf Gf Hf), the
entrywise product of an excitation part and a filter part. Individual factors
carry a fixed/free flag; fixed factors are never touched by updates or
normalization.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateModelError, ShapeError

EPS_VARIANCE = 1e-12
DIFFUSE_LAMBDA = 0.5
AZIMUTH_SPREAD = 45.0  # initialization azimuths span [-45, +45] degrees


@dataclass
class FactorMatrix:
    values: np.ndarray
    fixed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("factor must be a 2-D matrix")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ConfigError("factor entries must be nonnegative and finite")


@dataclass
class SpectralBlock:
    """Factor chain W (F x K1), U (K1 x K2), G (K2 x K3), H (K3 x N)."""

    W: FactorMatrix
    U: FactorMatrix
    G: FactorMatrix
    H: FactorMatrix

    def __post_init__(self):
        w, u, g, h = (self.W.values, self.U.values,
                      self.G.values, self.H.values)
        if w.shape[1] != u.shape[0] or u.shape[1] != g.shape[0] \
                or g.shape[1] != h.shape[0]:
            raise ShapeError(
                f"factor chain does not match: {w.shape} {u.shape} "
                f"{g.shape} {h.shape}")

    @property
    def n_bins(self):
        return self.W.values.shape[0]

    @property
    def n_frames(self):
        return self.H.values.shape[1]

    def product(self):
        w, u, g, h = (self.W.values, self.U.values,
                      self.G.values, self.H.values)
        return w @ u @ g @ h

    def factors(self):
        return (self.W, self.U, self.G, self.H)


@dataclass
class SourceModel:
    label: str
    spatial: np.ndarray            # (F, I, I) Hermitian PSD stack
    excitation: SpectralBlock
    filter: SpectralBlock
    spatial_fixed: bool = False

    def __post_init__(self):
        self.spatial = np.asarray(self.spatial, dtype=np.complex128)
        if self.spatial.ndim != 3 or self.spatial.shape[1] != self.spatial.shape[2]:
            raise ShapeError("spatial must be (F, I, I)")
        if self.spatial.shape[0] != self.excitation.n_bins:
            raise ShapeError("spatial and excitation disagree on F")
        if self.excitation.n_bins != self.filter.n_bins \
                or self.excitation.n_frames != self.filter.n_frames:
            raise ShapeError("excitation and filter blocks disagree on F or N")

    @property
    def n_channels(self):
        return self.spatial.shape[1]

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class MixtureModel:
    sources: list = field(default_factory=list)

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("a mixture model needs at least one source")
        f, n, i = (self.sources[0].excitation.n_bins,
                   self.sources[0].excitation.n_frames,
                   self.sources[0].n_channels)
        for s in self.sources[1:]:
            if (s.excitation.n_bins, s.excitation.n_frames,
                    s.n_channels) != (f, n, i):
                raise ShapeError("all sources must agree on F, N, I")

    @property
    def n_sources(self):
        return len(self.sources)

    @property
    def n_bins(self):
        return self.sources[0].excitation.n_bins

    @property
    def n_frames(self):
        return self.sources[0].excitation.n_frames

    @property
    def n_channels(self):
        return self.sources[0].n_channels

    def copy(self):
        return copy.deepcopy(self)


def spectral_variance(source):
    """V = (Wx Ux Gx Hx) o (Wf Uf Gf Hf), floored at EPS_VARIANCE."""
    v = source.excitation.product() * source.filter.product()
    return np.maximum(v, EPS_VARIANCE)


def source_covariance(source, f, n):
    """R_c(f, n) = R(f) * v(f, n) for one TF point."""
    v = spectral_variance(source)
    return source.spatial[f] * v[f, n]


def source_covariance_field(source, variance=None):
    """R_c for all (f, n) at once, shaped (F, N, I, I)."""
    if variance is None:
        variance = spectral_variance(source)
    return source.spatial[:, None, :, :] * variance[:, :, None, None]


def model_rng(seed, block=0):
    """Deterministic RNG stream shared by offline init and per-block re-init."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(block)])


# ---------------------------------------------------------------------------
# constraint builders

def _harmonic_layout(n_bins, fs, f0_min, f0_max, steps_per_semitone,
                     partials_per_pattern):
    """List of (pitch_index, f0, [partial numbers]) column descriptors."""
    if not (0.0 < f0_min < f0_max < fs / 2):
        raise ConfigError("need 0 < f0_min < f0_max < fs/2")
    step = 2.0 ** (1.0 / (12.0 * steps_per_semitone))
    n_pitches = int(np.floor(np.log(f0_max / f0_min) / np.log(step))) + 1
    layout = []
    for p in range(n_pitches):
        f0 = f0_min * step ** p
        max_partial = int(np.floor((fs / 2) / f0))
        if max_partial < 1:
            continue
        partials = np.arange(1, max_partial + 1)
        for g in range(0, len(partials), partials_per_pattern):
            layout.append((p, f0, partials[g:g + partials_per_pattern]))
    if not layout:
        raise ConfigError("empty harmonic pattern grid")
    return layout, n_pitches


def build_harmonic_patterns(n_bins, fs, f0_min, f0_max, steps_per_semitone=1,
                            partials_per_pattern=4):
    """Fixed matrix of narrowband harmonic spectral patterns.

    One column per (pitch, partial group) pair on a log-spaced f0 grid. Each
    column sums Gaussian lobes (std of one bin) centered at the group's
    harmonics and is normalized to mean 1.
    """
    layout, _ = _harmonic_layout(n_bins, fs, f0_min, f0_max,
                                 steps_per_semitone, partials_per_pattern)
    window_len = 2 * (n_bins - 1)
    bin_hz = fs / window_len
    bins = np.arange(n_bins)
    cols = np.empty((n_bins, len(layout)))
    for c, (_, f0, partials) in enumerate(layout):
        centers = partials * f0 / bin_hz
        col = np.exp(-0.5 * (bins[:, None] - centers[None, :]) ** 2).sum(axis=1)
        cols[:, c] = col / col.mean()
    return FactorMatrix(cols, fixed=True)


def harmonic_pattern_pitches(n_bins, fs, f0_min, f0_max, steps_per_semitone=1,
                             partials_per_pattern=4):
    """(pitch index per pattern column, number of pitches) for the same grid."""
    layout, n_pitches = _harmonic_layout(n_bins, fs, f0_min, f0_max,
                                         steps_per_semitone,
                                         partials_per_pattern)
    return np.array([p for p, _, _ in layout]), n_pitches


def load_dictionary(path, n_rows=None):
    """Dense nonnegative matrix from CSV: a 'rows,cols' header line followed
    by one CSV row per matrix row."""
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            rows, cols = (int(v) for v in header.split(","))
        except ValueError as exc:
            raise ConfigError(
                f"{path}: expected 'rows,cols' header, got {header!r}") from exc
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if values.shape != (rows, cols):
        raise ConfigError(
            f"{path}: header says {(rows, cols)}, data is {values.shape}")
    if n_rows is not None and rows != n_rows:
        raise ConfigError(f"{path}: expected {n_rows} rows, got {rows}")
    if np.any(values < 0):
        raise ConfigError(f"{path}: dictionary entries must be nonnegative")
    return values


def default_dictionary(n_bins, n_components, kind):
    """Built-in fixed basis spectra used when no dictionary file is given.

    Percussive components are broadband tilts with increasing high-frequency
    emphasis; bass components are low-frequency bumps.
    """
    f_norm = np.linspace(0.0, 1.0, n_bins)
    cols = np.empty((n_bins, n_components))
    for k in range(n_components):
        if kind == "bass":
            center = 0.005 + 0.03 * k / max(n_components - 1, 1)
            col = np.exp(-0.5 * ((f_norm - center) / 0.02) ** 2) + 1e-4
        else:
            tilt = -8.0 + 12.0 * k / max(n_components - 1, 1)
            col = np.exp(tilt * f_norm) + 1e-4
        cols[:, k] = col / col.mean()
    return cols


def _smooth_envelope_bumps(n_bins, n_components):
    centers = np.linspace(0.0, 1.0, n_components)
    f_norm = np.linspace(0.0, 1.0, n_bins)
    width = 0.6 / n_components
    cols = np.exp(-0.5 * ((f_norm[:, None] - centers[None, :]) / width) ** 2)
    return cols + 1e-6


# ---------------------------------------------------------------------------
# initialization

def _panning_vector(azimuth, n_channels):
    """Unit-norm panning vector; azimuth in [-45, 45] degrees maps to the
    first two channels via the constant-power law."""
    if n_channels == 1:
        return np.ones(1, dtype=np.complex128)
    theta = np.deg2rad((azimuth + 90.0) / 2.0)
    a = np.zeros(n_channels, dtype=np.complex128)
    a[0] = np.cos(theta)
    a[1] = np.sin(theta)
    return a


def init_spatial(azimuth, n_bins, n_channels):
    """Diffuse full-rank spatial covariance a a^H + lambda I, tiled over f."""
    a = _panning_vector(azimuth, n_channels)
    base = np.outer(a, a.conj()) + DIFFUSE_LAMBDA * np.eye(n_channels)
    return np.tile(base[None, :, :], (n_bins, 1, 1)).astype(np.complex128)


def _build_excitation(source_cfg, n_bins, n_frames, fs):
    kind = source_cfg.kind
    if kind == "harmonic":
        W = build_harmonic_patterns(
            n_bins, fs, source_cfg.f0_min, source_cfg.f0_max,
            source_cfg.steps_per_semitone, source_cfg.partials_per_pattern)
        pitches, n_pitches = harmonic_pattern_pitches(
            n_bins, fs, source_cfg.f0_min, source_cfg.f0_max,
            source_cfg.steps_per_semitone, source_cfg.partials_per_pattern)
        # free pitch-selector weights; zero entries keep each pattern column
        # attached to its own pitch under multiplicative updates
        u = np.zeros((W.values.shape[1], n_pitches))
        u[np.arange(len(pitches)), pitches] = 1.0
        U = FactorMatrix(u, fixed=False)
        k2 = n_pitches
    elif kind in ("percussive", "bass"):
        W = FactorMatrix(np.eye(n_bins), fixed=True)
        if source_cfg.dictionary_path:
            u = load_dictionary(source_cfg.dictionary_path, n_rows=n_bins)
        else:
            u = default_dictionary(n_bins, source_cfg.n_components, kind)
        U = FactorMatrix(u, fixed=True)
        k2 = u.shape[1]
    elif kind == "adaptive":
        W = FactorMatrix(np.eye(n_bins), fixed=True)
        U = FactorMatrix(np.ones((n_bins, source_cfg.n_components)),
                         fixed=False)
        k2 = source_cfg.n_components
    else:
        raise ConfigError(f"unknown source kind {kind!r}")
    G = FactorMatrix(np.ones((k2, n_frames)), fixed=False)
    H = FactorMatrix(np.eye(n_frames), fixed=False)
    return SpectralBlock(W, U, G, H)


def _build_filter(source_cfg, n_bins, n_frames):
    if source_cfg.filter_components > 0:
        k = source_cfg.filter_components
        W = FactorMatrix(_smooth_envelope_bumps(n_bins, k), fixed=True)
        U = FactorMatrix(np.eye(k), fixed=True)
        G = FactorMatrix(np.ones((k, 1)), fixed=False)
    else:
        W = FactorMatrix(np.ones((n_bins, 1)), fixed=True)
        U = FactorMatrix(np.ones((1, 1)), fixed=True)
        G = FactorMatrix(np.ones((1, 1)), fixed=False)
    H = FactorMatrix(np.ones((G.values.shape[1], n_frames)), fixed=True)
    return SpectralBlock(W, U, G, H)


def init_azimuths(n_sources):
    if n_sources == 1:
        return np.zeros(1)
    return np.linspace(-AZIMUTH_SPREAD, AZIMUTH_SPREAD, n_sources)


def draw_temporal_weights(rng, shape):
    """Random init for free temporal weights, bounded away from zero."""
    return rng.uniform(0.1, 0.9, size=shape)


def rescale_to_power(source, target_power):
    """Scale the excitation G so the source's mean modeled power matches
    target_power."""
    if source.excitation.G.fixed:
        return
    mean_v = float(spectral_variance(source).mean())
    if mean_v <= 0:
        raise DegenerateModelError("zero modeled power at initialization")
    source.excitation.G.values *= target_power / mean_v


def init_mixture_model(cfg, X, rng_seed):
    """Initial MixtureModel: diffuse spatial covariances at spread azimuths,
    random power-matched temporal weights, diagonal temporal patterns, fixed
    constraint factors from the config."""
    cfg.validate()
    n_bins, n_frames, n_channels = X.values.shape
    if n_channels < 1:
        raise ConfigError("need at least one channel")
    mean_power = float(np.mean(np.abs(X.values) ** 2))
    rng = model_rng(rng_seed, 0)
    azimuths = init_azimuths(cfg.n_sources)
    sources = []
    for j, scfg in enumerate(cfg.sources):
        excitation = _build_excitation(scfg, n_bins, n_frames, X.sample_rate)
        filt = _build_filter(scfg, n_bins, n_frames)
        excitation.G.values = draw_temporal_weights(
            rng, excitation.G.values.shape)
        source = SourceModel(
            label=scfg.label or f"{scfg.kind}-{j}",
            spatial=init_spatial(azimuths[j], n_bins, n_channels),
            excitation=excitation,
            filter=filt,
            spatial_fixed=scfg.spatial_fixed,
        )
        if mean_power > 0:
            rescale_to_power(source, mean_power)
        sources.append(source)
    return MixtureModel(sources)


# ---------------------------------------------------------------------------
# normalization

_NORMALIZED_FACTORS = ("W", "U", "G", "H")


def normalize(model):
    """Rescale each source so free factor means (and the spatial mean trace
    over channels) are 1, absorbing the product of all divisors into the
    filter G. The model-implied source covariances are unchanged.

    Fixed factors are left untouched; their scale is permanent and already
    accounted for by the filter G. Operates in place and returns the model.
    """
    for source in model.sources:
        if source.filter.G.fixed:
            raise DegenerateModelError(
                f"{source.label}: filter G must be free to absorb "
                "normalization factors")
        divisors = 1.0
        if not source.spatial_fixed:
            mean_tr = float(np.trace(source.spatial, axis1=1, axis2=2)
                            .real.mean()) / source.n_channels
            if mean_tr <= 0:
                raise DegenerateModelError(
                    f"{source.label}: spatial covariance has zero mean trace")
            source.spatial /= mean_tr
            divisors *= mean_tr
        for block in (source.excitation, source.filter):
            for name in _NORMALIZED_FACTORS:
                factor = getattr(block, name)
                if factor.fixed or (block is source.filter and name == "G"):
                    continue
                mean = float(factor.values.mean())
                if mean <= 0:
                    raise DegenerateModelError(
                        f"{source.label}: factor {name} has zero mean")
                factor.values /= mean
                divisors *= mean
        source.filter.G.values *= divisors
    return model
