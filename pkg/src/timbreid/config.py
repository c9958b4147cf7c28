"""One TOML file that governs a full run.

Every section is optional; missing keys take the defaults below and
unknown keys are an error. ``max_depth`` has no TOML null: leave it out
for unlimited depth.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dsp import DspConfig
from .errors import ConfigError, IoError
from .forest import ForestConfig, dump_canonical
from .framing import FramingConfig

__all__ = ["ExperimentConfig", "PipelineConfig", "load_config", "DEFAULT_CONFIG_TOML"]


@dataclass(frozen=True)
class ExperimentConfig:
    split: float = 0.7
    seeds: tuple = (0, 1, 2)
    populations: tuple = (2, 4, 6, 8, 10)
    threshold: float = 0.5
    score_mode: str = "binary"

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.score_mode not in ("binary", "ovr"):
            raise ValueError("score_mode must be 'binary' or 'ovr'")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "populations", tuple(int(k) for k in self.populations))


# With only two input features the d/3 rule leaves one candidate feature
# per split; the timbre regressors search both.
TIMBRE_FOREST = ForestConfig(n_trees=100, features_per_split="all", rng_seed=0)
SPEAKER_FOREST = ForestConfig(n_trees=100, features_per_split="sqrt", rng_seed=0)


@dataclass(frozen=True)
class PipelineConfig:
    framing: FramingConfig = field(default_factory=FramingConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    timbre_forest: ForestConfig = TIMBRE_FOREST
    speaker_forest: ForestConfig = SPEAKER_FOREST
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["experiment"]["seeds"] = list(self.experiment.seeds)
        d["experiment"]["populations"] = list(self.experiment.populations)
        return d

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(dump_canonical(self.to_dict())).hexdigest()

    def override(self, section: str, **values) -> "PipelineConfig":
        """Copy with some keys of one section replaced (``None`` values are ignored)."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return replace(self, **{section: _build(type(getattr(self, section)), section, values, getattr(self, section))})


def _build(cls, section, values: dict, base=None):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {unknown}")
    try:
        return replace(base, **values) if base is not None else cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


_SECTIONS = {
    "framing": FramingConfig,
    "dsp": DspConfig,
    "timbre_forest": ForestConfig,
    "speaker_forest": ForestConfig,
    "experiment": ExperimentConfig,
}


def config_from_dict(raw: dict) -> PipelineConfig:
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}")
    base = PipelineConfig()
    parts = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        parts[name] = _build(cls, name, section, getattr(base, name))
    return PipelineConfig(**parts)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


DEFAULT_CONFIG_TOML = """\
# timbreid pipeline configuration. Command-line flags override these values.

[framing]
frame_seconds = 0.3        # frame length in seconds
silence_threshold = 0.05   # frames with mean |amplitude| below this are dropped

[dsp]
fft_size = 512
hop_size = 128
mel_filters = 40
mfcc_coeffs = 13
window = "hann"            # hann | hamming | blackman | boxcar

[timbre_forest]            # the seven timbral-property regressors
n_trees = 100
min_samples_split = 2
features_per_split = "all" # all | sqrt | third | <count>
bootstrap = true
rng_seed = 0
# max_depth = 12           # omit for unlimited depth

[speaker_forest]           # identification / verification classifiers
n_trees = 100
min_samples_split = 2
features_per_split = "sqrt"
bootstrap = true
rng_seed = 0

[experiment]
split = 0.7                # fraction of each speaker's streams used for training
seeds = [0, 1, 2]
populations = [2, 4, 6, 8, 10]
threshold = 0.5            # verification accept threshold
score_mode = "binary"      # binary (per-target forest) | ovr (one-vs-rest from identifier)
"""
