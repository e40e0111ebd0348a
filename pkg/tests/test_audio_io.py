"""WAV file round-trips."""

import numpy as np
import pytest

from blocksep import AudioBuffer, read_wav, write_wav
from blocksep.exceptions import ConfigError


def _stereo_buffer(seed=0, n=1000):
    rng = np.random.default_rng(seed)
    return AudioBuffer(0.5 * rng.uniform(-1, 1, (n, 2)), 16000)


def test_float32_roundtrip(tmp_path):
    buf = _stereo_buffer()
    path = tmp_path / "a.wav"
    write_wav(path, buf)
    out = read_wav(path)
    assert out.sample_rate == 16000
    assert out.samples.shape == buf.samples.shape
    np.testing.assert_allclose(out.samples, buf.samples, atol=1e-7)


def test_pcm16_roundtrip(tmp_path):
    buf = _stereo_buffer(1)
    path = tmp_path / "a.wav"
    write_wav(path, buf, fmt="pcm16")
    out = read_wav(path)
    np.testing.assert_allclose(out.samples, buf.samples, atol=1.0 / 32768.0)


def test_mono_reads_back_as_one_column(tmp_path):
    buf = AudioBuffer(np.linspace(-0.5, 0.5, 64), 8000)
    path = tmp_path / "m.wav"
    write_wav(path, buf)
    out = read_wav(path)
    assert out.samples.shape == (64, 1)
    np.testing.assert_allclose(out.samples, buf.samples, atol=1e-7)


def test_pcm16_clips_out_of_range(tmp_path):
    buf = AudioBuffer(np.array([[-2.0], [2.0]]), 8000)
    path = tmp_path / "c.wav"
    write_wav(path, buf, fmt="pcm16")
    out = read_wav(path)
    assert out.samples[0, 0] == -1.0
    assert abs(out.samples[1, 0] - 1.0) <= 1.0 / 32768.0


def test_unsupported_format_rejected(tmp_path):
    with pytest.raises(ConfigError):
        write_wav(tmp_path / "x.wav", _stereo_buffer(), fmt="mp3")


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        read_wav("/nonexistent/path.wav")
