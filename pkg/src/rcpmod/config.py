"""Experiment configuration: a flat key = value text format with presets and overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

# encoder widths and (mu1, mu2) per named setup
PRESETS = {
    "synthetic": {"widths": (128, 32), "mu1": 0.02, "mu2": 0.2},
    "bdgp": {"widths": (1024, 64), "mu1": 0.01, "mu2": 0.2},
    "landuse21": {"widths": (1024, 1024, 64), "mu1": 0.02, "mu2": 0.2},
    "scene15": {"widths": (1024, 1024, 64), "mu1": 0.02, "mu2": 0.4},
    "fashion": {"widths": (1024, 256), "mu1": 0.05, "mu2": 0.4},
}

# outlier ratio settings 1..6 (attribute, class, class-attribute)
RATIO_SETTINGS = {
    1: (0.02, 0.05, 0.08),
    2: (0.02, 0.08, 0.05),
    3: (0.05, 0.02, 0.08),
    4: (0.05, 0.08, 0.02),
    5: (0.08, 0.02, 0.05),
    6: (0.08, 0.05, 0.02),
}


@dataclass
class TrainConfig:
    # data
    dataset: str = "synth"  # "synth" or a dataset directory
    preset: str = "synthetic"
    synth_n: int = 1000
    synth_clusters: int = 5
    synth_dims: tuple = (50, 50)
    synth_noise: float = 0.05
    rho1: float = 0.05
    rho2: float = 0.05
    rho3: float = 0.05
    missing_rate: float = 0.3
    # model
    widths: tuple = (128, 32)
    tau: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 1.0
    eta: float = 0.05
    k: int = 6
    k_pos: int = 4
    k_neg: int = 6
    mu1: float = 0.02
    mu2: float = 0.2
    warm_epochs: int = 100
    total_epochs: int = 200
    impute_start_epoch: int = 50
    knn_switch_epoch: int = 50
    knn_refresh_interval: int = 5
    batch_size: int = 256
    learning_rate: float = 1e-3
    bank_window: int = 8
    rank_sign: str = "printed"
    na_temperature: bool = False
    # ablations
    use_oa: bool = True
    use_na: bool = True
    use_sr: bool = True
    # run
    seed: int = 0
    eval_every: int = 10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        counts = ("synth_n", "synth_clusters", "k", "k_pos", "k_neg", "warm_epochs", "total_epochs",
                  "knn_refresh_interval", "batch_size", "bank_window", "eval_every")
        for name in counts:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("eta must lie in (0, 1)")
        if self.tau <= 0 or self.learning_rate <= 0:
            raise ConfigError("tau and learning_rate must be positive")
        if not 0 <= self.impute_start_epoch <= self.total_epochs:
            raise ConfigError("impute_start_epoch must lie in [0, total_epochs]")
        if self.knn_switch_epoch < 0:
            raise ConfigError("knn_switch_epoch must be nonnegative")
        if self.warm_epochs >= self.total_epochs:
            raise ConfigError("warm_epochs must be smaller than total_epochs")
        if not 0 <= self.mu1 <= self.mu2:
            raise ConfigError("need 0 <= mu1 <= mu2")
        if not self.k_pos <= self.k_neg <= self.k:
            raise ConfigError("need k_pos <= k_neg <= k")
        if self.rank_sign not in ("printed", "triplet"):
            raise ConfigError("rank_sign must be 'printed' or 'triplet'")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if not self.widths or min(self.widths) <= 0:
            raise ConfigError("widths must be positive integers")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")

    @property
    def bank_capacity(self) -> int:
        from .objectives import ratio_count

        return ratio_count(self.eta, self.batch_size) * self.bank_window

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = _FIELDS[name].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_assignments(lines) -> dict:
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        out[key] = _coerce(key, value)
    return out


def build_config(path=None, overrides=(), **kwargs) -> TrainConfig:
    """Assemble a config from preset defaults, an optional file, ``--set`` strings and kwargs.

    Preset values (widths, mu1, mu2) apply unless given explicitly.
    """
    values = {}
    if path is not None:
        values.update(parse_assignments(Path(path).read_text().splitlines()))
    values.update(parse_assignments(overrides))
    values.update(kwargs)
    preset = values.get("preset", "synthetic")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    merged = {**PRESETS[preset], **values}
    for key in merged:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return TrainConfig(**merged)
