"""The guardian switch: accept the agent action or hand control to the expert."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .expert import ActionDistribution, ExpertPolicy
from .sim.env import EgoState, EnvConfig, scene_discs
from .sim.scene import SceneSpec


class GuardianMode(str, Enum):
    EXPERT_DENSITY = "expert_density"
    RULE_BASED = "rule_based"
    OFF = "off"


@dataclass(frozen=True)
class GuardianConfig:
    eta: float = 0.05
    mode: GuardianMode = GuardianMode.EXPERT_DENSITY
    rule_thresholds: tuple[float, float] = (2.0, 1.0)  # (obstacle gap m, road margin m)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        object.__setattr__(self, "mode", GuardianMode(self.mode))


@dataclass(frozen=True)
class SwitchOutcome:
    applied_action: np.ndarray
    intervention: int
    expert_sample_used: bool


def in_confident_set(dist: ActionDistribution, action, eta: float) -> bool:
    """``E(a|s) >= eta`` with E the pre-squash density evaluated at ``atanh(a)``."""
    if eta <= 0:
        return True
    return bool(dist.presquash_density(action) >= eta)


def switch_from_distribution(dist: ActionDistribution, agent_action, eta: float,
                             rng: np.random.Generator) -> SwitchOutcome:
    a = np.asarray(agent_action, dtype=np.float64)
    if in_confident_set(dist, a, eta):
        return SwitchOutcome(a, 0, False)
    return SwitchOutcome(dist.sample(rng), 1, True)


def switch(state: EgoState, scene: SceneSpec, agent_action, expert: ExpertPolicy,
           cfg: GuardianConfig, rng: np.random.Generator, time: float = 0.0) -> SwitchOutcome:
    """Per-step takeover decision.

    One expert sample is drawn unconditionally on takeover; it is not
    re-checked against the confident set.
    """
    a = np.asarray(agent_action, dtype=np.float64)
    if cfg.mode is GuardianMode.OFF:
        return SwitchOutcome(a, 0, False)
    if cfg.mode is GuardianMode.RULE_BASED:
        return rule_switch(state, scene, a, expert, cfg.rule_thresholds, rng, time)
    return switch_from_distribution(expert.distribution(state, scene, time), a, cfg.eta, rng)


def rule_margins(state: EgoState, scene: SceneSpec, env_config: EnvConfig,
                 time: float = 0.0) -> tuple[float, float]:
    """(gap to nearest obstacle or vehicle surface, distance to the road edge)."""
    centers, radii = scene_discs(scene, time)
    if len(centers):
        gaps = np.hypot(centers[:, 0] - state.position[0], centers[:, 1] - state.position[1])
        gap = float(np.min(gaps - radii - env_config.ego_radius))
    else:
        gap = float("inf")
    edge = scene.lane_half_width + env_config.road_margin - abs(state.frenet_d)
    return gap, float(edge)


def rule_switch(state: EgoState, scene: SceneSpec, agent_action, expert: ExpertPolicy,
                thresholds: tuple[float, float], rng: np.random.Generator,
                time: float = 0.0) -> SwitchOutcome:
    """Intervene iff the obstacle gap or road margin is strictly below its threshold."""
    gap, edge = rule_margins(state, scene, expert.env_config, time)
    a = np.asarray(agent_action, dtype=np.float64)
    if gap < thresholds[0] or edge < thresholds[1]:
        return SwitchOutcome(expert.distribution(state, scene, time).sample(rng), 1, True)
    return SwitchOutcome(a, 0, False)


def behavior_density(actions: np.ndarray, agent_density: Callable[[np.ndarray], np.ndarray],
                     dist: ActionDistribution, eta: float, grid: int = 400) -> np.ndarray:
    """Density of the executed action under the switch, at each row of ``actions``.

    ``pi_hat(a) = pi(a) [a in A_eta] + E(a) F`` where ``F`` is the agent
    mass outside the confident set, integrated with the midpoint rule on a
    ``grid x grid`` partition of ``(-1, 1)^2``.
    """
    F = rejected_mass(agent_density, dist, eta, grid)
    actions = np.asarray(actions, dtype=np.float64)
    accept = dist.presquash_density(actions) >= eta if eta > 0 else np.ones(actions.shape[:-1], bool)
    return agent_density(actions) * accept + dist.density(actions) * F


def midpoint_grid(n: int) -> tuple[np.ndarray, float]:
    """Cell centers of an ``n x n`` partition of (-1, 1)^2 and the cell area."""
    c = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    xx, yy = np.meshgrid(c, c, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1), (2.0 / n) ** 2


def rejected_mass(agent_density, dist: ActionDistribution, eta: float, grid: int = 400,
                  tol: float = 1e-3) -> float:
    pts, area = midpoint_grid(grid)
    p = agent_density(pts)
    total = float(p.sum() * area)
    if abs(total - 1.0) > tol:
        raise ValueError(f"agent density integrates to {total:.5f} on a {grid}x{grid} grid; refine it")
    if eta <= 0:
        return 0.0
    reject = dist.presquash_density(pts) < eta
    return float((p * reject).sum() * area)
