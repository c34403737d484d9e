"""Run configuration: one YAML document mapping onto nested dataclasses."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from ..expert import ExpertConfig
from ..guardian import GuardianConfig, GuardianMode
from ..learner.agent import LearnerConfig
from ..sim.env import EnvConfig
from ..sim.scene import SceneConfig

METHODS = ("egpo", "sac", "sac_rs", "sac_lag", "bc", "cql_offline")
ABLATIONS = ("rule_switch", "no_intervention_min", "no_pid", "no_cql", "zero_env_reward")


@dataclass(frozen=True)
class SceneSet:
    start: int
    count: int

    @property
    def seeds(self) -> list[int]:
        return list(range(self.start, self.start + self.count))


@dataclass(frozen=True)
class BCConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-4
    validation_fraction: float = 0.1


@dataclass(frozen=True)
class OfflineConfig:
    dataset_steps: int = 50_000
    dataset_path: str | None = None
    gradient_steps: int = 50_000
    beta: float = 5.0


@dataclass(frozen=True)
class RunConfig:
    method: str = "egpo"
    seed: int = 0
    total_env_steps: int = 100_000
    eval_every: int = 5_000
    eval_episodes: int = 20
    final_eval_episodes: int = 50
    workers: int = 1
    train_scenes: SceneSet = SceneSet(0, 100)
    test_scenes: SceneSet = SceneSet(1000, 50)
    scene: SceneConfig = SceneConfig()
    env: EnvConfig = EnvConfig()
    expert: ExpertConfig = ExpertConfig()
    guardian: GuardianConfig = GuardianConfig()
    learner: LearnerConfig = LearnerConfig()
    ablations: tuple[str, ...] = ()
    cost_weight: float = 2.0
    cost_limit: float = 1.0
    bc: BCConfig = BCConfig()
    offline: OfflineConfig = OfflineConfig()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        for ab in self.ablations:
            if ab not in ABLATIONS:
                raise ValueError(f"unknown ablation {ab!r}; choose from {ABLATIONS}")
            if self.method != "egpo" and not (ab == "no_pid" and self.method == "sac_lag"):
                raise ValueError(f"ablation {ab!r} is only valid for egpo")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, GuardianMode):
        return obj.value
    return obj


def _build(cls, data: dict | None, defaults=None):
    defaults = defaults if defaults is not None else cls()
    if data is None:
        return defaults
    if not isinstance(data, dict):
        raise TypeError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        cur = getattr(defaults, k)
        if is_dataclass(cur):
            kwargs[k] = _build(type(cur), v, cur)
        elif isinstance(cur, tuple) and isinstance(v, list):
            kwargs[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        else:
            kwargs[k] = v
    return replace(defaults, **kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data)


def load_config(path: str | Path | None, **overrides) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    cfg = config_from_dict(data)
    return apply_overrides(cfg, **overrides)


def apply_overrides(cfg: RunConfig, seed: int | None = None, method: str | None = None,
                    ablations: list[str] | None = None, eta: float | None = None,
                    quality: float | None = None, total_env_steps: int | None = None) -> RunConfig:
    kw: dict[str, Any] = {}
    if seed is not None:
        kw["seed"] = seed
    if method is not None:
        kw["method"] = method
    if ablations:
        kw["ablations"] = tuple(cfg.ablations) + tuple(a for a in ablations if a not in cfg.ablations)
    if eta is not None:
        kw["guardian"] = replace(cfg.guardian, eta=eta)
    if quality is not None:
        kw["expert"] = replace(cfg.expert, quality=quality)
    if total_env_steps is not None:
        kw["total_env_steps"] = total_env_steps
    return replace(cfg, **kw) if kw else cfg


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def env_digest(cfg: RunConfig) -> str:
    blob = json.dumps({"env": _plain(asdict(cfg.env)), "scene": _plain(asdict(cfg.scene))},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_method(cfg: RunConfig) -> tuple[LearnerConfig, GuardianConfig]:
    """Derive the learner and guardian settings a method and its ablations imply."""
    lc, gc = cfg.learner, cfg.guardian
    ab = set(cfg.ablations)
    if cfg.method == "egpo":
        lc = replace(lc, constraint="intervention")
        if "no_intervention_min" in ab:
            lc = replace(lc, lambda_mode="frozen", lambda_init=0.0)
        if "no_pid" in ab:
            lc = replace(lc, lambda_mode="integral")
        if "no_cql" in ab:
            lc = replace(lc, beta=0.0)
        if "rule_switch" in ab:
            gc = replace(gc, mode=GuardianMode.RULE_BASED)
    elif cfg.method in ("sac", "sac_rs"):
        lc = replace(lc, constraint="none", beta=0.0)
        gc = replace(gc, mode=GuardianMode.OFF)
    elif cfg.method == "sac_lag":
        lc = replace(lc, constraint="cost", beta=0.0, limit=cfg.cost_limit,
                     lambda_mode="integral" if "no_pid" in ab else lc.lambda_mode)
        gc = replace(gc, mode=GuardianMode.OFF)
    elif cfg.method == "cql_offline":
        lc = replace(lc, constraint="none", beta=cfg.offline.beta)
        gc = replace(gc, mode=GuardianMode.OFF)
    elif cfg.method == "bc":
        gc = replace(gc, mode=GuardianMode.OFF)
    return lc, gc
