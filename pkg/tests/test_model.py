"""Source model construction, variance, initialization, normalization."""

import numpy as np
import pytest

from blocksep import AudioBuffer, normalize, stft
from blocksep.config import SeparationConfig, SourceConfig
from blocksep.exceptions import ConfigError, DegenerateModelError, ShapeError
from blocksep.model import (EPS_VARIANCE, DIFFUSE_LAMBDA, FactorMatrix,
                            SpectralBlock, build_harmonic_patterns,
                            harmonic_pattern_pitches, init_mixture_model,
                            init_spatial, load_dictionary, model_rng,
                            source_covariance, source_covariance_field,
                            spectral_variance)
from conftest import random_source

# ---------------------------------------------------------------------------
# factors and chains


def test_factor_rejects_negative_and_nonfinite():
    with pytest.raises(ConfigError):
        FactorMatrix(np.array([[-1.0]]))
    with pytest.raises(ConfigError):
        FactorMatrix(np.array([[np.nan]]))
    with pytest.raises(ShapeError):
        FactorMatrix(np.ones(3))


def test_chain_dimension_mismatch():
    with pytest.raises(ShapeError):
        SpectralBlock(W=FactorMatrix(np.ones((4, 2))),
                      U=FactorMatrix(np.ones((3, 2))),
                      G=FactorMatrix(np.ones((2, 2))),
                      H=FactorMatrix(np.ones((2, 3))))


def test_all_ones_variance(rng):
    src = random_source(rng)
    for block in (src.excitation, src.filter):
        for f in block.factors():
            f.values = np.ones_like(f.values)
    exc = src.excitation
    expected = (exc.W.values.shape[1] * exc.U.values.shape[1]
                * exc.G.values.shape[1])
    np.testing.assert_allclose(spectral_variance(src), expected, rtol=1e-12)


def test_variance_matches_dense_product(rng):
    src = random_source(rng, n_bins=6, n_frames=4)
    expected = (src.excitation.W.values @ src.excitation.U.values
                @ src.excitation.G.values @ src.excitation.H.values) \
        * (src.filter.W.values @ src.filter.U.values
           @ src.filter.G.values @ src.filter.H.values)
    np.testing.assert_allclose(spectral_variance(src), expected, rtol=1e-12)


def test_zero_row_floored(rng):
    src = random_source(rng)
    src.excitation.W.values[1, :] = 0.0
    v = spectral_variance(src)
    np.testing.assert_allclose(v[1], EPS_VARIANCE)


def test_source_covariance_scaling(rng):
    src = random_source(rng, n_bins=2, n_frames=2)
    src.spatial[0] = np.eye(2)
    v = spectral_variance(src)
    np.testing.assert_allclose(source_covariance(src, 0, 1),
                               v[0, 1] * np.eye(2), rtol=1e-12)
    # eigenvalues of a random PSD matrix scale with the variance
    eig_r = np.linalg.eigvalsh(src.spatial[1])
    eig_c = np.linalg.eigvalsh(source_covariance(src, 1, 0))
    np.testing.assert_allclose(eig_c, eig_r * v[1, 0], rtol=1e-10)


def test_covariance_field_matches_pointwise(rng):
    src = random_source(rng, n_bins=3, n_frames=2)
    field = source_covariance_field(src)
    for f in range(3):
        for n in range(2):
            np.testing.assert_allclose(field[f, n],
                                       source_covariance(src, f, n),
                                       rtol=1e-12)


# ---------------------------------------------------------------------------
# harmonic patterns


def test_single_pitch_single_lobe():
    fs, L = 8000, 64
    n_bins = L // 2 + 1
    W = build_harmonic_patterns(n_bins, fs, f0_min=fs / 8, f0_max=fs / 7.9,
                                partials_per_pattern=1)
    col = W.values[:, 0]
    assert np.argmax(col) == L // 8
    assert W.fixed


def test_pattern_columns_mean_one():
    W = build_harmonic_patterns(129, 16000, 80, 800)
    np.testing.assert_allclose(W.values.mean(axis=0), 1.0, atol=1e-12)


def test_lobe_centers_at_harmonics():
    fs, L = 8000, 64
    f0 = fs / 8
    W = build_harmonic_patterns(L // 2 + 1, fs, f0, f0 * 1.01,
                                partials_per_pattern=4)
    col = W.values[:, 0]
    for k in (8, 16, 24):
        window = col[k - 1:k + 2]
        assert np.argmax(window) == 1  # local max at the harmonic bin


def test_pitch_index_per_column():
    pitches, n_pitches = harmonic_pattern_pitches(129, 8000, 100, 200,
                                                  steps_per_semitone=1,
                                                  partials_per_pattern=100)
    assert len(pitches) == n_pitches  # one group per pitch when groups cover all
    assert sorted(set(pitches)) == list(range(n_pitches))


def test_harmonic_grid_bounds_checked():
    with pytest.raises(ConfigError):
        build_harmonic_patterns(65, 8000, 3000, 5000)  # f0_max >= fs/2


# ---------------------------------------------------------------------------
# dictionaries


def test_load_dictionary_roundtrip(tmp_path):
    path = tmp_path / "dict.csv"
    mat = np.array([[1.0, 2.0], [0.5, 0.25], [3.0, 4.0]])
    lines = ["3,2"] + [",".join(str(v) for v in row) for row in mat]
    path.write_text("\n".join(lines) + "\n")
    np.testing.assert_allclose(load_dictionary(path), mat)
    with pytest.raises(ConfigError):
        load_dictionary(path, n_rows=4)


def test_load_dictionary_bad_header(tmp_path):
    path = tmp_path / "dict.csv"
    path.write_text("not-a-header\n1,2\n")
    with pytest.raises(ConfigError):
        load_dictionary(path)


# ---------------------------------------------------------------------------
# initialization


def _init(cfg_sources, seed=0, n_frames=10):
    cfg = SeparationConfig(sources=cfg_sources, window_len=64)
    rng = np.random.default_rng(99)
    x = rng.standard_normal((n_frames * 32, 2))
    X = stft(AudioBuffer(x, 8000), 64)
    return init_mixture_model(cfg, X, seed), X


def test_init_spatial_full_rank():
    R = init_spatial(-45.0, 4, 2)
    assert R.shape == (4, 2, 2)
    np.testing.assert_allclose(R, np.swapaxes(R, 1, 2).conj(), atol=1e-12)
    eig = np.linalg.eigvalsh(R)
    assert eig.min() >= DIFFUSE_LAMBDA * (1 - 1e-12)


def test_init_deterministic():
    m1, _ = _init([SourceConfig(kind="adaptive")] * 2, seed=5)
    m2, _ = _init([SourceConfig(kind="adaptive")] * 2, seed=5)
    for s1, s2 in zip(m1.sources, m2.sources):
        np.testing.assert_array_equal(s1.spatial, s2.spatial)
        np.testing.assert_array_equal(s1.excitation.G.values,
                                      s2.excitation.G.values)


def test_init_power_matched():
    model, X = _init([SourceConfig(kind="adaptive")] * 2)
    mean_power = float(np.mean(np.abs(X.values) ** 2))
    for src in model.sources:
        assert abs(spectral_variance(src).mean() / mean_power - 1.0) < 1e-6


def test_init_fixed_flags_by_kind(tmp_path):
    model, _ = _init([SourceConfig(kind="harmonic", f0_min=200, f0_max=900),
                      SourceConfig(kind="percussive"),
                      SourceConfig(kind="adaptive")])
    harm, perc, adap = model.sources
    assert harm.excitation.W.fixed and not harm.excitation.U.fixed
    # pitch-mask zeros in the harmonic selector
    assert np.any(harm.excitation.U.values == 0.0)
    assert perc.excitation.W.fixed and perc.excitation.U.fixed
    assert not adap.excitation.U.fixed
    np.testing.assert_array_equal(adap.excitation.W.values,
                                  np.eye(adap.excitation.n_bins))


def test_model_rng_streams_disjoint():
    a = model_rng(3, 0).uniform(size=4)
    b = model_rng(3, 1).uniform(size=4)
    c = model_rng(3, 0).uniform(size=4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, c)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_restores_means_and_covariance(rng):
    src = random_source(rng, n_bins=5, n_frames=4)
    from blocksep.model import MixtureModel
    model = MixtureModel([src])
    normalize(model)
    g_filter_before = src.filter.G.values.copy()
    src.excitation.W.values *= 10.0
    before = source_covariance_field(src).copy()
    normalize(model)
    np.testing.assert_allclose(src.excitation.W.values.mean(), 1.0,
                               rtol=1e-12)
    after = source_covariance_field(src)
    np.testing.assert_allclose(after, before, rtol=1e-10)
    np.testing.assert_allclose(src.filter.G.values, g_filter_before * 10.0,
                               rtol=1e-10)


def test_normalize_idempotent(rng):
    from blocksep.model import MixtureModel
    model = MixtureModel([random_source(rng)])
    normalize(model)
    snapshot = model.copy()
    normalize(model)
    for s1, s2 in zip(model.sources, snapshot.sources):
        np.testing.assert_allclose(s1.spatial, s2.spatial, rtol=1e-12,
                                   atol=1e-15)
        for b1, b2 in zip((s1.excitation, s1.filter),
                          (s2.excitation, s2.filter)):
            for f1, f2 in zip(b1.factors(), b2.factors()):
                np.testing.assert_allclose(f1.values, f2.values, rtol=1e-12)


def test_normalize_skips_fixed_factors(rng):
    src = random_source(rng)
    src.excitation.W.values *= 7.0
    src.excitation.W.fixed = True
    fixed_before = src.excitation.W.values.copy()
    from blocksep.model import MixtureModel
    normalize(MixtureModel([src]))
    np.testing.assert_array_equal(src.excitation.W.values, fixed_before)


def test_normalize_zero_factor_degenerate(rng):
    src = random_source(rng)
    src.excitation.G.values[:] = 0.0
    from blocksep.model import MixtureModel
    with pytest.raises(DegenerateModelError):
        normalize(MixtureModel([src]))
