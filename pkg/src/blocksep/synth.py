"""Synthetic stereo corpus generator with ground-truth source images.

Stands in for commercial recordings in tests and sweeps: each source is
rendered (harmonic tone sequence, filtered-noise percussion, or bass line),
panned with constant-power stereo gains, optionally silenced on intervals,
and the mixture is the exact sum of the images.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .audio_io import write_wav
from .exceptions import ConfigError
from .timefreq import AudioBuffer

KINDS = ("harmonic-tone-sequence", "filtered-noise-percussion", "bass-line")


@dataclass
class SynthSourceSpec:
    kind: str = "harmonic-tone-sequence"
    azimuth: float = 0.0                    # degrees in [-45, 45]
    silence_intervals: list = field(default_factory=list)  # (start, end) s
    level: float = 0.1                      # RMS before panning


@dataclass
class SynthSpec:
    sources: list
    duration: float = 10.0
    sample_rate: int = 16000
    channels: int = 2
    seed: int = 0
    convolutive: bool = False               # short random FIR per channel
    allow_colliding_azimuths: bool = False

    def __post_init__(self):
        self.sources = [
            s if isinstance(s, SynthSourceSpec) else SynthSourceSpec(**s)
            for s in self.sources
        ]

    def validate(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.channels not in (1, 2):
            raise ConfigError("synthetic corpus supports 1 or 2 channels")
        if not self.sources:
            raise ConfigError("at least one source required")
        azimuths = [s.azimuth for s in self.sources]
        if (len(set(azimuths)) != len(azimuths)
                and not self.allow_colliding_azimuths):
            raise ConfigError(
                "azimuths collide; set allow_colliding_azimuths to permit")
        for s in self.sources:
            if s.kind not in KINDS:
                raise ConfigError(f"unknown synth kind {s.kind!r}")
        return self


def pan_gains(azimuth, channels=2):
    """Constant-power stereo gains; azimuth -45 is hard left, +45 hard right,
    so gain vectors 90 degrees of azimuth apart are orthogonal."""
    if channels == 1:
        return np.ones(1)
    phi = np.deg2rad(azimuth + 45.0)
    return np.array([np.cos(phi), np.sin(phi)])


def _note_env(n, fs, attack=0.01, release=0.05):
    env = np.ones(n)
    a = min(int(attack * fs), n // 2)
    r = min(int(release * fs), n // 2)
    if a:
        env[:a] = np.linspace(0.0, 1.0, a)
    if r:
        env[-r:] *= np.linspace(1.0, 0.0, r)
    return env


def _render_harmonic(n_samples, fs, rng):
    scale = 220.0 * 2.0 ** (np.array([0, 2, 4, 7, 9]) / 12.0)
    out = np.zeros(n_samples)
    pos = 0
    while pos < n_samples:
        note_len = int(rng.uniform(0.25, 0.5) * fs)
        note_len = min(note_len, n_samples - pos)
        if note_len < 8:
            break
        f0 = float(rng.choice(scale)) * 2.0 ** rng.integers(-1, 2)
        t = np.arange(note_len) / fs
        phase = rng.uniform(0, 2 * np.pi)
        tone = sum((1.0 / k) * np.sin(2 * np.pi * k * f0 * t + k * phase)
                   for k in range(1, 7) if k * f0 < fs / 2)
        out[pos:pos + note_len] = tone * _note_env(note_len, fs)
        pos += note_len
    return out


def _render_percussion(n_samples, fs, rng):
    out = np.zeros(n_samples)
    pos = int(rng.uniform(0, 0.1) * fs)
    while pos < n_samples:
        burst_len = min(int(0.12 * fs), n_samples - pos)
        if burst_len < 8:
            break
        noise = rng.standard_normal(burst_len)
        noise = np.diff(noise, prepend=noise[0])   # high-pass tilt
        env = np.exp(-np.arange(burst_len) / (0.02 * fs))
        out[pos:pos + burst_len] += noise * env
        pos += int(rng.uniform(0.25, 0.5) * fs)
    return out


def _render_bass(n_samples, fs, rng):
    roots = 55.0 * 2.0 ** (np.array([0, 3, 5, 7]) / 12.0)
    out = np.zeros(n_samples)
    pos = 0
    while pos < n_samples:
        note_len = int(rng.uniform(0.4, 0.8) * fs)
        note_len = min(note_len, n_samples - pos)
        if note_len < 8:
            break
        f0 = float(rng.choice(roots))
        t = np.arange(note_len) / fs
        tone = np.sin(2 * np.pi * f0 * t) + 0.3 * np.sin(4 * np.pi * f0 * t)
        out[pos:pos + note_len] = tone * _note_env(note_len, fs, release=0.1)
        pos += note_len
    return out


_RENDERERS = {
    "harmonic-tone-sequence": _render_harmonic,
    "filtered-noise-percussion": _render_percussion,
    "bass-line": _render_bass,
}


def generate(spec):
    """Render all sources of a SynthSpec.

    Returns (mixture, images): the mixture AudioBuffer and one ground-truth
    image AudioBuffer per source, with mixture == sum(images) exactly.
    """
    spec.validate()
    fs = spec.sample_rate
    n_samples = int(round(spec.duration * fs))
    images = []
    for idx, src in enumerate(spec.sources):
        rng = np.random.default_rng([spec.seed & 0xFFFFFFFF, idx])
        signal = _RENDERERS[src.kind](n_samples, fs, rng)
        rms = np.sqrt(np.mean(signal ** 2))
        if rms > 0:
            signal *= src.level / rms
        for start, end in src.silence_intervals:
            a = max(int(round(start * fs)), 0)
            b = min(int(round(end * fs)), n_samples)
            signal[a:b] = 0.0
        gains = pan_gains(src.azimuth, spec.channels)
        image = signal[:, None] * gains[None, :]
        if spec.convolutive:
            fir = np.concatenate(
                [np.ones((spec.channels, 1)),
                 0.2 * rng.standard_normal((spec.channels, 7))], axis=1)
            filtered = np.empty_like(image)
            for c in range(spec.channels):
                filtered[:, c] = np.convolve(image[:, c], fir[c])[:n_samples]
            image = filtered
        images.append(AudioBuffer(image, fs))
    mixture = AudioBuffer(sum(img.samples for img in images), fs)
    return mixture, images


def write_corpus(specs, out_dir, fmt="float32"):
    """Render a list of SynthSpecs into out_dir as WAV files plus a manifest
    CSV (path,role,mixture,source with paths relative to out_dir)."""
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    rows = []
    for m, spec in enumerate(specs):
        mixture, images = generate(spec)
        mix_name = f"mix_{m:03d}.wav"
        write_wav(os.path.join(out_dir, mix_name), mixture, fmt=fmt)
        rows.append((mix_name, "mixture", m, ""))
        for j, image in enumerate(images):
            img_name = f"mix_{m:03d}_src{j}.wav"
            write_wav(os.path.join(out_dir, img_name), image, fmt=fmt)
            rows.append((img_name, "image", m, j))
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "role", "mixture", "source"])
        writer.writerows(rows)
    os.replace(tmp, manifest_path)
    return manifest_path
