"""STFT analysis / synthesis with half-overlapping sine windows.

The sine window w[t] = sin(pi (t + 0.5) / L) satisfies w^2[t] + w^2[t + L/2] = 1,
so using the same window for analysis and weighted overlap-add synthesis gives
exact reconstruction away from the signal edges.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError


@dataclass
class AudioBuffer:
    """Multichannel time-domain audio, samples shaped (T, I)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.samples.ndim != 2:
            raise ShapeError("samples must be (n_samples, n_channels)")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]


@dataclass
class TFTensor:
    """One-sided STFT coefficients shaped (F, N, I) with F = window_len/2 + 1."""

    values: np.ndarray
    window_len: int
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 3:
            raise ShapeError("values must be (n_bins, n_frames, n_channels)")
        if self.values.shape[0] != self.window_len // 2 + 1:
            raise ShapeError(
                f"expected {self.window_len // 2 + 1} bins for window_len="
                f"{self.window_len}, got {self.values.shape[0]}")

    @property
    def hop(self):
        return self.window_len // 2

    @property
    def n_bins(self):
        return self.values.shape[0]

    @property
    def n_frames(self):
        return self.values.shape[1]

    @property
    def n_channels(self):
        return self.values.shape[2]


def sine_window(length):
    t = np.arange(length)
    return np.sin(np.pi * (t + 0.5) / length)


def _check_window_len(window_len):
    if window_len < 4 or window_len % 2 != 0:
        raise ConfigError(f"window_len must be even and >= 4, got {window_len}")


def stft(audio, window_len):
    """Half-overlapping sine-windowed one-sided STFT of a multichannel buffer.

    The tail is zero-padded so that N = ceil(T / hop) + 1 frames cover the
    whole signal.
    """
    _check_window_len(window_len)
    x = audio.samples
    n_samples = x.shape[0]
    if n_samples < 1:
        raise ConfigError("audio must contain at least one sample")
    hop = window_len // 2
    n_frames = int(np.ceil(n_samples / hop)) + 1
    padded_len = (n_frames - 1) * hop + window_len
    padded = np.zeros((padded_len, x.shape[1]))
    padded[:n_samples] = x

    window = sine_window(window_len)
    starts = np.arange(n_frames) * hop
    # (n_frames, window_len, I)
    frames = padded[starts[:, None] + np.arange(window_len)[None, :], :]
    spec = np.fft.rfft(frames * window[None, :, None], axis=1)
    # -> (F, N, I)
    return TFTensor(np.transpose(spec, (1, 0, 2)), window_len, audio.sample_rate)


def istft(tf, out_len):
    """Weighted overlap-add synthesis with the same sine window."""
    hop = tf.hop
    window_len = tf.window_len
    covered = (tf.n_frames - 1) * hop + window_len
    if out_len > covered:
        raise ConfigError(
            f"out_len={out_len} exceeds covered range of {covered} samples")
    window = sine_window(window_len)
    # (N, window_len, I)
    frames = np.fft.irfft(np.transpose(tf.values, (1, 0, 2)),
                          n=window_len, axis=1)
    frames *= window[None, :, None]
    out = np.zeros((covered, tf.n_channels))
    for m in range(tf.n_frames):
        out[m * hop:m * hop + window_len] += frames[m]
    return AudioBuffer(out[:out_len], tf.sample_rate)
