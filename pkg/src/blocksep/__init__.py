"""Online and offline multichannel audio source separation with a local
Gaussian spatial model and hierarchical NMF spectral constraints."""

from .audio_io import read_wav, write_wav
from .config import SeparationConfig, SourceConfig
from .metrics import BssScores, average_scores, bss_eval_images
from .model import (FactorMatrix, MixtureModel, SourceModel, SpectralBlock,
                    build_harmonic_patterns, init_mixture_model, normalize,
                    source_covariance, spectral_variance)
from .offline import (e_step, empirical_covariance, log_likelihood,
                      m_step_spatial, m_step_spectral, mixture_covariance,
                      offline_fit, xi_field)
from .online import (OnlineState, online_init, online_separate, online_step,
                     process_block, push_frame)
from .separate import wiener_separate
from .synth import SynthSourceSpec, SynthSpec, generate, write_corpus
from .timefreq import AudioBuffer, TFTensor, istft, stft

__all__ = [
    "AudioBuffer", "TFTensor", "stft", "istft", "read_wav", "write_wav",
    "FactorMatrix", "SpectralBlock", "SourceModel", "MixtureModel",
    "build_harmonic_patterns", "init_mixture_model", "normalize",
    "source_covariance", "spectral_variance",
    "empirical_covariance", "mixture_covariance", "log_likelihood",
    "e_step", "xi_field", "m_step_spatial", "m_step_spectral", "offline_fit",
    "OnlineState", "online_init", "push_frame", "process_block",
    "online_step", "online_separate",
    "wiener_separate",
    "BssScores", "bss_eval_images", "average_scores",
    "SynthSpec", "SynthSourceSpec", "generate", "write_corpus",
    "SeparationConfig", "SourceConfig",
]
