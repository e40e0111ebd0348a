"""Separation-quality criteria (SDR, SIR, ISR, SAR) on source spatial images.

Each estimated image is decomposed by successive least-squares projections:
first onto time-shifted copies of its own reference image channels, then onto
those of all reference images. The own-source projection is further split
into a scaled true image and a spatial-distortion remainder, so a pure gain
change is not penalized.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

DB_CAP = 300.0
DEFAULT_FILTER_LEN = 32


@dataclass
class BssScores:
    """Per-source scores in dB; NaN marks an undefined entry."""

    sdr: np.ndarray
    sir: np.ndarray
    isr: np.ndarray
    sar: np.ndarray
    counts: np.ndarray = None

    def __post_init__(self):
        self.sdr = np.atleast_1d(np.asarray(self.sdr, dtype=np.float64))
        self.sir = np.atleast_1d(np.asarray(self.sir, dtype=np.float64))
        self.isr = np.atleast_1d(np.asarray(self.isr, dtype=np.float64))
        self.sar = np.atleast_1d(np.asarray(self.sar, dtype=np.float64))


def _as_image_array(buffers):
    arrays = [b.samples if hasattr(b, "samples") else np.asarray(b)
              for b in buffers]
    stacked = np.stack(arrays, axis=0).astype(np.float64)
    if stacked.ndim != 3:
        raise ShapeError("images must be (n_samples, n_channels) each")
    return stacked


def _shifted_columns(signal, filt_len):
    """Columns holding the signal delayed/advanced by up to filt_len taps."""
    n = signal.shape[0]
    cols = np.zeros((n, 2 * filt_len + 1))
    for k, shift in enumerate(range(-filt_len, filt_len + 1)):
        if shift >= 0:
            cols[shift:, k] = signal[:n - shift]
        else:
            cols[:shift, k] = signal[-shift:]
    return cols


def _safe_db(num, den):
    if den <= 0.0:
        return DB_CAP
    if num <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def bss_eval_images(est, ref, filt_len=DEFAULT_FILTER_LEN):
    """Evaluate estimated source images against references.

    est, ref: sequences of J AudioBuffers (or (T, I) arrays) of equal shape.
    filt_len: projection filters cover shifts of +-filt_len samples.
    Returns BssScores with one entry per source; sources whose reference is
    silent get NaN scores.
    """
    est = _as_image_array(est)
    ref = _as_image_array(ref)
    if est.shape != ref.shape:
        raise ShapeError(
            f"estimate shape {est.shape} != reference shape {ref.shape}")
    n_src, n_samp, n_chan = ref.shape
    if not np.any(ref):
        raise ShapeError("all reference images are silent")

    # design matrix of shifted reference channels, per source
    per_source = []
    for j in range(n_src):
        cols = [
            _shifted_columns(ref[j, :, c], filt_len) for c in range(n_chan)
        ]
        per_source.append(np.concatenate(cols, axis=1))
    basis_all = np.concatenate(per_source, axis=1)

    sdr = np.full(n_src, np.nan)
    sir = np.full(n_src, np.nan)
    isr = np.full(n_src, np.nan)
    sar = np.full(n_src, np.nan)
    for j in range(n_src):
        if not np.any(ref[j]):
            continue
        coef_own, *_ = np.linalg.lstsq(per_source[j], est[j], rcond=None)
        proj_own = per_source[j] @ coef_own
        coef_all, *_ = np.linalg.lstsq(basis_all, est[j], rcond=None)
        proj_all = basis_all @ coef_all
        ref_energy = float(np.sum(ref[j] ** 2))
        gain = float(np.sum(proj_own * ref[j])) / ref_energy
        s_img = gain * ref[j]
        e_spat = proj_own - s_img
        e_interf = proj_all - proj_own
        e_artif = est[j] - proj_all
        sdr[j] = _safe_db(np.sum(s_img ** 2), np.sum((est[j] - s_img) ** 2))
        isr[j] = _safe_db(np.sum(s_img ** 2), np.sum(e_spat ** 2))
        sir[j] = _safe_db(np.sum(proj_own ** 2), np.sum(e_interf ** 2))
        sar[j] = _safe_db(np.sum(proj_all ** 2), np.sum(e_artif ** 2))
    return BssScores(sdr, sir, isr, sar)


def average_scores(scores):
    """Arithmetic mean per criterion (in the dB domain) over a list of
    BssScores, skipping undefined (NaN) entries. Returns a single-entry
    BssScores whose counts field reports how many values each mean used."""
    if not scores:
        raise ShapeError("average_scores needs at least one BssScores")
    means = []
    counts = []
    for name in ("sdr", "sir", "isr", "sar"):
        values = np.concatenate([getattr(s, name) for s in scores])
        defined = values[np.isfinite(values)]
        counts.append(len(defined))
        means.append(float(defined.mean()) if len(defined) else np.nan)
    return BssScores(means[0], means[1], means[2], means[3],
                     counts=np.asarray(counts))
