"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from blocksep import (SeparationConfig, SourceConfig, SynthSourceSpec,
                      SynthSpec, generate, stft)
from blocksep.model import (FactorMatrix, MixtureModel, SourceModel,
                            SpectralBlock, init_mixture_model)

# Lines printed at the end of the run, one per acceptance criterion.
ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(
        f"acceptance {number:2d} {name}: {status} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def random_spd(rng, n, scale=1.0):
    """Random Hermitian positive-definite matrix."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T + n * np.eye(n))


def random_spatial_stack(rng, n_bins, n_channels, scale=1.0):
    return np.stack([random_spd(rng, n_channels, scale)
                     for _ in range(n_bins)])


def random_source(rng, n_bins=4, n_frames=3, n_channels=2, n_components=2,
                  label="src"):
    """Small random source model with free factors bounded away from zero."""
    exc = SpectralBlock(
        W=FactorMatrix(rng.uniform(0.5, 2.0, (n_bins, n_components))),
        U=FactorMatrix(rng.uniform(0.5, 2.0, (n_components, n_components))),
        G=FactorMatrix(rng.uniform(0.5, 2.0, (n_components, n_frames))),
        H=FactorMatrix(rng.uniform(0.5, 2.0, (n_frames, n_frames))),
    )
    filt = SpectralBlock(
        W=FactorMatrix(np.ones((n_bins, 1)), fixed=True),
        U=FactorMatrix(np.ones((1, 1)), fixed=True),
        G=FactorMatrix(rng.uniform(0.5, 2.0, (1, 1))),
        H=FactorMatrix(np.ones((1, n_frames)), fixed=True),
    )
    return SourceModel(label=label,
                       spatial=random_spatial_stack(rng, n_bins, n_channels),
                       excitation=exc, filter=filt)


def random_model(rng, n_sources=2, **kwargs):
    return MixtureModel([random_source(rng, label=f"src-{j}", **kwargs)
                         for j in range(n_sources)])


def two_source_mixture(seed, duration=2.0, sample_rate=8000,
                       azimuths=(-45.0, 45.0), silence=None):
    """Synthetic stereo mixture: harmonic tones left, percussion right."""
    silence = silence or [[], []]
    spec = SynthSpec(
        sources=[
            SynthSourceSpec("harmonic-tone-sequence", azimuth=azimuths[0],
                            silence_intervals=silence[0]),
            SynthSourceSpec("filtered-noise-percussion", azimuth=azimuths[1],
                            silence_intervals=silence[1]),
        ],
        duration=duration, sample_rate=sample_rate, seed=seed)
    return generate(spec)


def two_source_config(window_len=512, **overrides):
    cfg = SeparationConfig(
        sources=[SourceConfig(kind="adaptive"), SourceConfig(kind="adaptive")],
        window_len=window_len)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
