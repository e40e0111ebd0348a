"""Separation configuration: per-source constraints and estimation settings.

Configs are plain dataclasses serializable to/from JSON so that every run is
reproducible from a single file. CLI flags override file values.
"""

import json
from dataclasses import dataclass, field, asdict

from .exceptions import ConfigError

SOURCE_KINDS = ("harmonic", "percussive", "bass", "adaptive")
MODES = ("offline", "online")


@dataclass
class SourceConfig:
    """Constraint specification for one modeled source.

    kind:
      * "harmonic"   -- narrowband spectral patterns fixed to harmonic combs,
                        free envelope weights restricted to the pattern's pitch.
      * "percussive" -- fixed diagonal narrowband patterns and a fixed
                        dictionary of basis spectra (loaded from CSV or a
                        built-in broadband fallback).
      * "bass"       -- like "percussive" with a low-frequency fallback
                        dictionary.
      * "adaptive"   -- fixed diagonal narrowband patterns, free envelope
                        weights (shallow NMF spectra learned during EM).
    """

    kind: str = "adaptive"
    label: str = ""
    n_components: int = 4          # envelope-weight columns (K2) where free
    f0_min: float = 80.0           # harmonic pattern grid
    f0_max: float = 800.0
    steps_per_semitone: int = 1
    partials_per_pattern: int = 4
    dictionary_path: str = ""      # CSV of fixed basis spectra (percussive/bass)
    spatial_fixed: bool = False
    filter_components: int = 0     # >0 enables a free smooth-envelope filter part

    def validate(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}")
        if self.kind == "harmonic":
            if not (0.0 < self.f0_min < self.f0_max):
                raise ConfigError("need 0 < f0_min < f0_max")
            if self.steps_per_semitone < 1 or self.partials_per_pattern < 1:
                raise ConfigError(
                    "steps_per_semitone and partials_per_pattern must be >= 1")
        if self.n_components < 1:
            raise ConfigError("n_components must be >= 1")
        if self.filter_components < 0:
            raise ConfigError("filter_components must be >= 0")


@dataclass
class SeparationConfig:
    sources: list = field(default_factory=lambda: [SourceConfig(), SourceConfig()])
    window_len: int = 2048
    mode: str = "offline"
    iterations: int = 30           # offline EM iterations
    iters_per_block: int = 4       # online EM iterations per block
    block: int = 50                # online block length M
    alpha: float = 1.0             # online step size, in ]0, 1]
    seed: int = 0
    smoothing_frames: int = 1      # empirical covariance moving average (odd)
    divergence_guard: bool = False
    guard_threshold: float = 0.05  # fraction of mixture mean power

    def __post_init__(self):
        self.sources = [
            s if isinstance(s, SourceConfig) else SourceConfig(**s)
            for s in self.sources
        ]

    @property
    def n_sources(self):
        return len(self.sources)

    def validate(self):
        if self.n_sources < 1:
            raise ConfigError("at least one source is required")
        if self.window_len < 4 or self.window_len % 2 != 0:
            raise ConfigError("window_len must be even and >= 4")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.iterations < 1 or self.iters_per_block < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.block < 1:
            raise ConfigError("block length must be >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError("alpha must lie in ]0, 1]")
        if self.smoothing_frames < 1 or self.smoothing_frames % 2 == 0:
            raise ConfigError("smoothing_frames must be odd and >= 1")
        if self.guard_threshold <= 0:
            raise ConfigError("guard_threshold must be positive")
        for s in self.sources:
            s.validate()
        return self

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from exc
        return cfg
