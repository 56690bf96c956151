"""Run configuration: a JSON document validated into frozen dataclasses.

Every field has a default (see the README table), so ``{}`` is a valid
document.  :func:`parse_config` collects every violated constraint before
raising, and ``parse_config(serialize(cfg)) == cfg`` holds for any valid
``cfg``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from typing import Any

from seqaudit.marking import MODES, MarkingConfig
from seqaudit.sim.experiment import ORACLES, ExperimentConfig
from seqaudit.sim.task import TaskConfig
from seqaudit.sim.toy import TrainConfig
from seqaudit.sim.unlearning import METHODS


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class UnlearningConfig:
    method: str = "gradient_based"
    taus: tuple[float, ...] = (0.0, 0.3, 1.0, 3.0)
    batch_size: int | None = 1
    include_exact: bool = True


@dataclass(frozen=True)
class RunConfig:
    q: int = 1
    n: int = 100
    p: float = 0.05
    alpha: float = 0.001
    epsilon: float = 10.0
    k: int = 4
    seed: int = 0
    trials: int = 500
    workers: int = 1
    oracle: str = "toy"
    mu: float = 0.0
    noise: float = 1.0
    score_noise: float = 0.0
    extractor: str = "mlp"
    feature_dim: int = 64
    sampling: str = "uniform"
    intersect: bool = True
    output_dir: str | None = None
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    marking: MarkingConfig = field(default_factory=lambda: MarkingConfig(dispersion_iterations=100))
    unlearning: UnlearningConfig = field(default_factory=UnlearningConfig)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            q=self.q,
            n=self.n,
            p=self.p,
            alpha=self.alpha,
            epsilon=self.epsilon,
            k=self.k,
            oracle=self.oracle,
            mu=self.mu,
            noise=self.noise,
            score_noise=self.score_noise,
            extractor=self.extractor,
            feature_dim=self.feature_dim,
            sampling=self.sampling,
            intersect=self.intersect,
            seed=self.seed,
            task=self.task,
            train=self.train,
            marking=self.marking,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {"task": TaskConfig, "train": TrainConfig, "marking": MarkingConfig, "unlearning": UnlearningConfig}
_TUPLE_FIELDS = {("task", "image_shape"), ("unlearning", "taus")}


def _type_ok(value, default) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    return True


def _build(cls, doc: dict, prefix: str, errors: list[str]):
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if key not in known:
            errors.append(f"{name}: unknown field")
            continue
        if key in _SECTIONS and cls is RunConfig:
            if not isinstance(value, dict):
                errors.append(f"{name}: must be an object")
                continue
            kwargs[key] = _build(_SECTIONS[key], value, f"{name}.", errors)
            continue
        default = getattr(defaults, key)
        if (prefix.rstrip("."), key) in _TUPLE_FIELDS:
            if not isinstance(value, list) or not all(_type_ok(v, 0.0) for v in value):
                errors.append(f"{name}: must be a list of numbers")
                continue
            value = tuple(int(v) if key == "image_shape" else float(v) for v in value)
        elif default is None or value is None:
            if value is not None and not isinstance(value, (int, float, str)):
                errors.append(f"{name}: wrong type")
                continue
        elif not _type_ok(value, default):
            errors.append(f"{name}: expected {type(default).__name__}, got {type(value).__name__}")
            continue
        elif isinstance(default, float):
            value = float(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{prefix.rstrip('.') or 'config'}: {exc}")
        return cls()


def validate(cfg: RunConfig) -> list[str]:
    errors = []
    if cfg.q < 1:
        errors.append("q must be >= 1")
    if cfg.n < 2:
        errors.append("n must be >= 2")
    if not 0 < cfg.p <= 1:
        errors.append("p must be in (0, 1]")
    if cfg.alpha <= 0:
        errors.append("alpha must be > 0")
    if cfg.alpha >= cfg.p:
        errors.append("alpha must be < p")
    if cfg.epsilon <= 0:
        errors.append("epsilon must be > 0")
    if cfg.k < 1:
        errors.append("k must be >= 1")
    if cfg.seed < 0:
        errors.append("seed must be >= 0")
    if cfg.trials < 1:
        errors.append("trials must be >= 1")
    if cfg.workers < 1:
        errors.append("workers must be >= 1")
    if cfg.oracle not in ORACLES:
        errors.append(f"oracle must be one of {ORACLES}")
    if cfg.mu < 0:
        errors.append("mu must be >= 0")
    if cfg.noise <= 0:
        errors.append("noise must be > 0")
    if cfg.score_noise < 0:
        errors.append("score_noise must be >= 0")
    if cfg.extractor not in ("mlp", "linear"):
        errors.append("extractor must be 'mlp' or 'linear'")
    if cfg.feature_dim < 1:
        errors.append("feature_dim must be >= 1")
    if cfg.sampling not in ("uniform", "round_robin"):
        errors.append("sampling must be 'uniform' or 'round_robin'")
    if cfg.marking.mode not in MODES:
        errors.append(f"marking.mode must be one of {MODES}")
    t = cfg.task
    if t.num_classes < 2:
        errors.append("task.num_classes must be >= 2")
    if len(t.image_shape) != 3 or min(t.image_shape) < 1:
        errors.append("task.image_shape must be three positive sizes")
    if t.z < 1 or t.test_size < 1:
        errors.append("task.z and task.test_size must be >= 1")
    tr = cfg.train
    if tr.epochs < 1 or tr.lr <= 0:
        errors.append("train.epochs must be >= 1 and train.lr > 0")
    if tr.batch_size is not None and tr.batch_size < 1:
        errors.append("train.batch_size must be >= 1")
    u = cfg.unlearning
    if u.method not in METHODS:
        errors.append(f"unlearning.method must be one of {METHODS}")
    if any(tau < 0 for tau in u.taus):
        errors.append("unlearning.taus: tau must be >= 0")
    if not u.taus:
        errors.append("unlearning.taus must not be empty")
    if u.batch_size is not None and u.batch_size < 1:
        errors.append("unlearning.batch_size must be >= 1")
    return errors


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be an object"])
    errors: list[str] = []
    cfg = _build(RunConfig, doc, "", errors)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def serialize(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"
