"""Scripted stochastic expert: pure pursuit plus potential-field obstacle avoidance.

The controller produces a deterministic command ``u`` in ``(-1, 1)^2``.
Actions are ``tanh(atanh(u) + noise * xi)``, so the expert is a squashed
Gaussian whose density is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .sim.env import DrivingEnv, EgoState, EnvConfig, Termination
from .sim.geometry import wrap_angle
from .sim.scene import SceneSpec

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ActionDistribution:
    """Squashed diagonal Gaussian over ``(-1, 1)^2``."""

    mean: np.ndarray  # pre-squash
    std: np.ndarray  # pre-squash

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = self.mean.shape if size is None else (size, *self.mean.shape)
        return np.tanh(self.mean + self.std * rng.standard_normal(shape))

    def presquash_log_density(self, action) -> np.ndarray:
        """Gaussian log-density at ``atanh(action)``; ``-inf`` outside the open box."""
        a = np.asarray(action, dtype=np.float64)
        inside = np.all(np.abs(a) < 1.0, axis=-1)
        u = np.arctanh(np.clip(a, -1 + 1e-15, 1 - 1e-15))
        z = (u - self.mean) / self.std
        logp = np.sum(-0.5 * z * z - np.log(self.std) - 0.5 * _LOG_2PI, axis=-1)
        return np.where(inside, logp, -np.inf)

    def presquash_density(self, action) -> np.ndarray:
        return np.exp(self.presquash_log_density(action))

    def log_density(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64)
        inside = np.all(np.abs(a) < 1.0, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = np.sum(np.log1p(-np.clip(a * a, 0.0, 1.0)), axis=-1)
            return np.where(inside, self.presquash_log_density(a) - jac, -np.inf)

    def density(self, action) -> np.ndarray:
        return np.exp(self.log_density(action))

    @property
    def center(self) -> np.ndarray:
        """``tanh(mean)``: the argmax of the pre-squash density."""
        return np.tanh(self.mean)

    def mode(self) -> np.ndarray:
        """Argmax of the squashed density, found per dimension."""
        out = np.empty_like(self.mean)
        for i, (m, s) in enumerate(zip(self.mean, self.std)):
            # log density in u: log N(u; m, s) - log(1 - tanh(u)^2); stationary points solve
            # u = m + 2 s^2 tanh(u), so every root lies within 2 s^2 of m.
            g = lambda u: -(u - m) / (s * s) + 2.0 * math.tanh(u)
            logp = lambda u: -0.5 * ((u - m) / s) ** 2 + 2.0 * math.log(math.cosh(u))
            width = 2.0 * s * s
            grid = np.linspace(m - width - 1e-9, m + width + 1e-9, 2001)
            vals = np.array([g(u) for u in grid])
            roots = [brentq(g, a, b, xtol=1e-14) for a, b, va, vb in
                     zip(grid[:-1], grid[1:], vals[:-1], vals[1:]) if va == 0 or va * vb < 0]
            best = max(roots, key=logp) if roots else m
            out[i] = math.tanh(best)
        return out


@dataclass(frozen=True)
class ExpertConfig:
    steer_gain: float = 1.0
    avoid_gain: float = 1.0
    speed_gain: float = 0.5
    target_speed: float = 8.0
    lookahead_base: float = 4.0
    lookahead_per_speed: float = 0.6
    avoid_horizon: float = 28.0
    avoid_behind: float = 3.0
    avoid_clearance: float = 0.9
    lane_keep_weight: float = 0.15
    smooth_weight: float = 0.3
    road_inset: float = 1.3
    n_candidates: int = 33
    noise_scale: tuple[float, float] = (0.15, 0.15)
    quality: float = 1.0
    avoidance: bool = True
    command_clip: float = 0.97

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError("quality must lie in [0, 1]")
        if min(self.noise_scale) <= 0:
            raise ValueError("noise_scale must be positive")


class ExpertPolicy:
    """Immutable scripted expert; all randomness comes from the caller's generator."""

    def __init__(self, config: ExpertConfig | None = None, env_config: EnvConfig | None = None):
        self.config = config or ExpertConfig()
        self.env_config = env_config or EnvConfig()
        q = self.config.quality
        self.steer_gain = self.config.steer_gain * q
        self.avoid_gain = self.config.avoid_gain * q
        self.noise = np.asarray(self.config.noise_scale, dtype=np.float64) * (2.0 - q)
        self._frenet_cache: dict[int, np.ndarray] = {}

    def with_quality(self, quality: float) -> "ExpertPolicy":
        return ExpertPolicy(replace(self.config, quality=quality), self.env_config)

    # -- controller ----------------------------------------------------------

    def _static_frenet(self, scene: SceneSpec) -> np.ndarray:
        key = id(scene)
        hit = self._frenet_cache.get(key)
        if hit is None or hit[0] is not scene:
            line = scene.polyline
            rows = [(*line.project(o.center), o.radius, 0.0) for o in scene.obstacles]
            hit = (scene, np.array(rows, dtype=np.float64).reshape(-1, 4))
            if len(self._frenet_cache) > 512:
                self._frenet_cache.clear()
            self._frenet_cache[key] = hit
        return hit[1]

    def _discs_frenet(self, scene: SceneSpec, time: float) -> np.ndarray:
        """Rows of (s, d, radius, speed) for obstacles and traffic at ``time``."""
        rows = self._static_frenet(scene)
        if scene.traffic:
            line = scene.polyline
            tr = [(*line.project(v.position(time)), v.radius, v.speed) for v in scene.traffic]
            rows = np.vstack([rows, np.array(tr)])
        return rows

    def command(self, state: EgoState, scene: SceneSpec, time: float = 0.0) -> np.ndarray:
        """Deterministic controller output in ``[-clip, clip]^2``."""
        cfg = self.config
        ecfg = self.env_config
        line = scene.polyline
        s, d, v = state.frenet_s, state.frenet_d, state.speed
        half = scene.lane_half_width - cfg.road_inset
        cands = np.linspace(-half, half, cfg.n_candidates)
        scale2 = scene.lane_half_width ** 2
        potential = cfg.lane_keep_weight * cands ** 2 / scale2
        potential += cfg.smooth_weight * (cands - np.clip(d, -half, half)) ** 2 / scale2
        target_speed = cfg.target_speed
        if cfg.avoidance:
            discs = self._discs_frenet(scene, time)
            for ds_i, dd_i, r_i, v_i in zip(discs[:, 0] - s, discs[:, 1], discs[:, 2], discs[:, 3]):
                if not -cfg.avoid_behind < ds_i < cfg.avoid_horizon:
                    continue
                width = r_i + ecfg.ego_radius + cfg.avoid_clearance
                near = 1.0 - max(ds_i, 0.0) / cfg.avoid_horizon
                potential += self.avoid_gain * 4.0 * near * np.exp(-((cands - dd_i) / width) ** 2)
                if v_i > 0 and 0 < ds_i < 12.0 and abs(dd_i - d) < width:
                    target_speed = min(target_speed, v_i)
        d_target = float(cands[np.argmin(potential)])

        look = cfg.lookahead_base + cfg.lookahead_per_speed * v
        goal = line.frenet_to_xy(min(s + look, line.length), d_target)
        dx, dy = goal[0] - state.position[0], goal[1] - state.position[1]
        alpha = float(wrap_angle(math.atan2(dy, dx) - state.heading))
        dist = max(math.hypot(dx, dy), 1e-6)
        delta = math.atan2(2.0 * ecfg.wheelbase * math.sin(alpha), dist)
        steer = self.steer_gain * delta / ecfg.max_steer
        throttle = cfg.speed_gain * (target_speed - v)
        c = cfg.command_clip
        return np.clip(np.array([steer, throttle]), -c, c)

    def distribution(self, state: EgoState, scene: SceneSpec, time: float = 0.0) -> ActionDistribution:
        u = self.command(state, scene, time)
        return ActionDistribution(np.arctanh(u), self.noise.copy())

    def dist_for(self, env: DrivingEnv) -> ActionDistribution:
        return self.distribution(env.state, env.scene, env.time)


def expert_action(expert: ExpertPolicy, state: EgoState, scene: SceneSpec,
                  rng: np.random.Generator, time: float = 0.0) -> np.ndarray:
    return expert.distribution(state, scene, time).sample(rng)


def expert_density(expert: ExpertPolicy, state: EgoState, scene: SceneSpec, action,
                   time: float = 0.0) -> float:
    """Squashed density ``E(a|s)``; zero on or outside the box boundary."""
    return float(expert.distribution(state, scene, time).density(action))


@dataclass
class FailureEstimate:
    rate: float
    low: float
    high: float
    cost_steps: int
    steps: int
    episodes: int
    successes: int = 0
    episode_costs: list[int] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def estimate_failure_rate(expert: ExpertPolicy, scenes: list[SceneSpec], n_episodes: int,
                          rng: np.random.Generator, env_config: EnvConfig | None = None,
                          deterministic: bool = False) -> FailureEstimate:
    """Fraction of expert steps that incur cost, with a 95% Wilson interval.

    Episodes cycle through ``scenes`` in order.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if not scenes:
        raise ValueError("need at least one scene")
    env = DrivingEnv(env_config or expert.env_config)
    cost_steps = steps = successes = 0
    ep_costs = []
    for ep in range(n_episodes):
        env.reset(scenes[ep % len(scenes)])
        ep_cost = 0
        while not env.done:
            dist = expert.dist_for(env)
            a = dist.center if deterministic else dist.sample(rng)
            res = env.step(a)
            steps += 1
            cost_steps += res.cost > 0
            ep_cost += res.cost
        successes += res.termination_kind is Termination.DESTINATION
        ep_costs.append(ep_cost)
    lo, hi = wilson_interval(cost_steps, steps)
    return FailureEstimate(cost_steps / steps, lo, hi, cost_steps, steps, n_episodes,
                           successes, ep_costs)
