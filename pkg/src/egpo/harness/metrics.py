"""Line-delimited JSON metrics stream."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class EpisodeStats:
    ret: float = 0.0
    env_return: float = 0.0
    cost: float = 0.0
    interventions: int = 0
    steps: int = 0
    speed_sum: float = 0.0
    success: bool = False

    @property
    def mean_speed(self) -> float:
        return self.speed_sum / self.steps if self.steps else 0.0


@dataclass
class MetricsRecord:
    step: int
    split: str
    episodes: int
    episodic_return: float
    episodic_cost: float
    success_rate: float
    intervention_frequency: float
    mean_velocity: float
    lam: float = 0.0
    delta: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success_rate outside [0, 1]")

    @classmethod
    def from_episodes(cls, step: int, split: str, eps: list[EpisodeStats], **kw) -> "MetricsRecord":
        n = len(eps)

        def mean(xs):
            return float(sum(xs) / n) if n else float("nan")

        return cls(
            step=step,
            split=split,
            episodes=n,
            episodic_return=mean([e.env_return for e in eps]),
            episodic_cost=mean([e.cost for e in eps]),
            success_rate=mean([float(e.success) for e in eps]) if n else 0.0,
            intervention_frequency=mean([e.interventions for e in eps]),
            mean_velocity=mean([e.mean_speed for e in eps]),
            **kw,
        )

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return json.dumps(_finite_or_none(d), sort_keys=True)


def _finite_or_none(obj):
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class MetricsWriter:
    """Append-only writer enforcing one record per (step, split), monotone in step."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._last: dict[str, int] = {}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def write(self, rec: MetricsRecord) -> None:
        last = self._last.get(rec.split)
        if last is not None and rec.step <= last:
            raise ValueError(f"{rec.split} step {rec.step} not after {last}")
        self._last[rec.split] = rec.step
        with open(self.path, "a") as fh:
            fh.write(rec.to_json() + "\n")


def read_metrics(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
