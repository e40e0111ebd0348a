"""RIFF WAV reading/writing. Internal processing is always float64; files are
16-bit PCM or 32-bit float, mono through 8 channels. Writes are atomic
(temp file + rename)."""

import os

import numpy as np
from scipy.io import wavfile

from .exceptions import ConfigError
from .timefreq import AudioBuffer

MAX_CHANNELS = 8


def read_wav(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] > MAX_CHANNELS:
        raise ConfigError(f"{path}: more than {MAX_CHANNELS} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ConfigError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))


def write_wav(path, buffer, fmt="float32"):
    if buffer.n_channels > MAX_CHANNELS:
        raise ConfigError(f"more than {MAX_CHANNELS} channels")
    if fmt == "float32":
        data = buffer.samples.astype(np.float32)
    elif fmt == "pcm16":
        clipped = np.clip(buffer.samples, -1.0, 32767.0 / 32768.0)
        data = np.round(clipped * 32768.0).astype(np.int16)
    else:
        raise ConfigError(f"unsupported wav format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    tmp = f"{path}.tmp{os.getpid()}"
    wavfile.write(tmp, buffer.sample_rate, data)
    os.replace(tmp, path)
