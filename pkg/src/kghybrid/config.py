"""Plain-text ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from .harness import NetworkSelectorConfig
from .pruner import PrunerConfig
from .teacher import QConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    difficulties: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    n_train: int = 10
    n_test: int = 10
    episodes: int = 5
    n_demos: int = 20000
    demo_epsilon: float = 0.2
    tau: float = 0.3
    teacher: str = "oracle"
    noise_add: list[float] = field(default_factory=lambda: [0.2, 0.4, 0.6])
    noise_drop: list[float] = field(default_factory=lambda: [0.0, 0.03, 0.06])
    baseline_q: bool = True
    baseline_network: bool = True
    teacher_ablation: bool = True
    ablation_difficulties: list[int] = field(default_factory=lambda: [1])
    pruner: PrunerConfig = field(default_factory=PrunerConfig)
    q: QConfig = field(default_factory=QConfig)
    network: NetworkSelectorConfig = field(default_factory=NetworkSelectorConfig)

    def validate(self) -> "ExperimentConfig":
        def need(ok: bool, path: str, msg: str) -> None:
            if not ok:
                raise ConfigError(path, msg)

        need(bool(self.difficulties), "difficulties", "must list at least one level")
        for d in self.difficulties + self.ablation_difficulties:
            need(d in (1, 2, 3, 4), "difficulties", f"unknown level {d}")
        need(self.n_train >= 1, "n_train", "must be >= 1")
        need(self.n_test >= 1, "n_test", "must be >= 1")
        need(self.episodes >= 1, "episodes", "must be >= 1")
        need(self.n_demos >= 1, "n_demos", "must be >= 1")
        need(0.0 <= self.demo_epsilon <= 1.0, "demo_epsilon", "must lie in [0, 1]")
        need(self.tau >= 0.0, "tau", "must be >= 0")
        need(self.teacher in ("oracle", "q", "random"), "teacher", "expected oracle, q or random")
        need(all(k >= 0 for k in self.noise_add), "noise_add", "fractions must be >= 0")
        need(all(0 <= p <= 1 for p in self.noise_drop), "noise_drop", "fractions must lie in [0, 1]")
        need(self.pruner.epochs >= 1, "pruner.epochs", "must be >= 1")
        need(self.pruner.batch_size >= 1, "pruner.batch_size", "must be >= 1")
        need(0.0 <= self.pruner.holdout < 1.0, "pruner.holdout", "must lie in [0, 1)")
        need(self.q.episodes >= 1, "q.episodes", "must be >= 1")
        need(0.0 < self.q.gamma <= 1.0, "q.gamma", "must lie in (0, 1]")
        need(self.q.hash_dim >= 2, "q.hash_dim", "must be >= 2")
        need(self.network.epochs >= 1, "network.epochs", "must be >= 1")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _convert(path: str, raw: str, tp) -> object:
    origin = typing.get_origin(tp)
    if origin is list:
        (inner,) = typing.get_args(tp)
        items = [x.strip() for x in raw.split(",") if x.strip()]
        return [_convert(path, x, inner) for x in items]
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError:
        raise ConfigError(path, f"expected {tp.__name__}, got {raw!r}") from None
    raise ConfigError(path, f"unsupported field type {tp}")


def _set(target, path: list[str], raw: str, full: str) -> None:
    hints = typing.get_type_hints(type(target))
    name = path[0]
    if name not in hints:
        raise ConfigError(full, "unknown field")
    if len(path) > 1:
        child = getattr(target, name)
        if not dataclasses.is_dataclass(child):
            raise ConfigError(full, f"{name!r} has no sub-fields")
        _set(child, path[1:], raw, full)
        return
    if dataclasses.is_dataclass(hints[name]):
        raise ConfigError(full, "is a section; set one of its sub-fields")
    setattr(target, name, _convert(full, raw, hints[name]))


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, raw = (x.strip() for x in line.split("=", 1))
        _set(cfg, key.split("."), raw, key)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []

    def walk(obj, prefix: str) -> None:
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, prefix + f.name + ".")
            elif isinstance(v, list):
                lines.append(f"{prefix}{f.name} = {', '.join(str(x) for x in v)}")
            else:
                lines.append(f"{prefix}{f.name} = {v}")

    walk(cfg, "")
    return "\n".join(lines) + "\n"
