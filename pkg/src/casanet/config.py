"""JSON run configuration with strict keys and full defaults.

Top-level keys: ``seed``, ``split`` (train fraction), ``synth``, ``model``,
``train``, ``refine`` and ``postproc``. Each section accepts exactly the
fields of the matching dataclass; anything else is rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .fusion import CasaConfig
from .refine import RefineConfig
from .synth import SynthConfig
from .train import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass
class PostprocConfig:
    median_window: int = 11
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValueError(f"median_window must be odd and >= 1, got {self.median_window}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


@dataclass
class RunConfig:
    seed: int = 0
    split: float = 0.8
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: CasaConfig = field(default_factory=CasaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    postproc: PostprocConfig = field(default_factory=PostprocConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"].pop("seed")
        d["train"].pop("seed")
        return d


_SECTIONS = {
    "synth": SynthConfig,
    "model": CasaConfig,
    "train": TrainConfig,
    "refine": RefineConfig,
    "postproc": PostprocConfig,
}
_SEEDED = ("synth", "train")


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    top = {"seed", "split", *_SECTIONS}
    for key in raw:
        if key not in top:
            raise ConfigError(f"unknown config key {key!r}", key)
    seed = int(raw.get("seed", 0))
    split = float(raw.get("split", 0.8))
    if not 0.0 <= split <= 1.0:
        raise ConfigError(f"split must lie in [0, 1], got {split}", "split")
    built = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be an object", name)
        allowed = {f.name for f in fields(cls)} - ({"seed"} if name in _SEEDED else set())
        for key in section:
            if key not in allowed:
                raise ConfigError(f"unknown config key {name}.{key!r}", f"{name}.{key}")
        kwargs = dict(section)
        if name in _SEEDED:
            kwargs["seed"] = seed
        try:
            built[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {name} section: {exc}", name) from exc
    return RunConfig(seed=seed, split=split, **built)


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return from_dict({})
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return from_dict(raw)


def with_overrides(cfg: RunConfig, **train_overrides) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, **train_overrides))
