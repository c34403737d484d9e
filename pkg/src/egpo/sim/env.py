"""Top-down driving environment with a kinematic bicycle ego vehicle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import Polyline, ray_disc_distances, wrap_angle
from .scene import SceneSpec

DESTINATION_BONUS = 20.0


class Termination(str, Enum):
    NONE = "none"
    DESTINATION = "destination"
    CRASH_TERMINAL = "crash_terminal"
    OUT_OF_ROAD = "out_of_road"
    HORIZON = "horizon"


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    wheelbase: float = 2.5
    max_steer: float = 0.5
    max_accel: float = 3.0
    max_brake: float = 6.0
    max_speed: float = 12.0
    ego_radius: float = 1.0
    road_margin: float = 0.5
    n_rays: int = 24
    max_range: float = 20.0
    horizon: int = 1500
    nav_lookahead: tuple[float, ...] = (5.0, 10.0, 20.0, 30.0)
    # heading error and checkpoint bearings are divided by this and clipped to [-1, 1]
    angle_scale: float = math.pi / 4
    crash_terminates: bool = False

    @property
    def obs_dim(self) -> int:
        return 5 + 2 * len(self.nav_lookahead) + self.n_rays


@dataclass(frozen=True)
class EgoState:
    position: tuple[float, float]
    heading: float
    speed: float
    frenet_s: float
    frenet_d: float


@dataclass
class Observation:
    ego_block: np.ndarray
    nav_block: np.ndarray
    lidar_block: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.ego_block, self.nav_block, self.lidar_block])


@dataclass
class StepResult:
    observation: Observation
    reward: float
    cost: int
    done: bool
    termination_kind: Termination
    info: dict = field(default_factory=dict)


def lidar_scan(state: EgoState, scene: SceneSpec, n_rays: int, max_range: float,
               time: float = 0.0) -> np.ndarray:
    """Normalized distances along ``n_rays`` rays spread evenly around the ego heading."""
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    centers, radii = scene_discs(scene, time)
    angles = state.heading + 2.0 * np.pi * np.arange(n_rays) / n_rays
    dist = ray_disc_distances(state.position, angles, centers, radii, max_range)
    return dist / max_range


def scene_discs(scene: SceneSpec, time: float) -> tuple[np.ndarray, np.ndarray]:
    """Centers and radii of every obstacle and traffic vehicle at ``time``."""
    centers = [o.center for o in scene.obstacles]
    radii = [o.radius for o in scene.obstacles]
    for v in scene.traffic:
        centers.append(tuple(v.position(time)))
        radii.append(v.radius)
    if not centers:
        return np.zeros((0, 2)), np.zeros(0)
    return np.asarray(centers, dtype=np.float64), np.asarray(radii, dtype=np.float64)


class _TrafficTrack:
    """Precomputed arclength table for one traffic path."""

    def __init__(self, waypoints: np.ndarray, speed: float):
        self.wp = waypoints
        self.speed = speed
        seg = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
        self.seg = seg
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    def position(self, t: float) -> np.ndarray:
        dist = self.speed * t
        if dist >= self.cum[-1]:
            return self.wp[-1]
        i = int(np.searchsorted(self.cum, dist, side="right") - 1)
        return self.wp[i] + (dist - self.cum[i]) / self.seg[i] * (self.wp[i + 1] - self.wp[i])


class DrivingEnv:
    """Single-scene episodic environment.

    ``reset(scene)`` places the ego at the scene's spawn pose. Actions are
    ``(steer, throttle_or_brake)`` in ``[-1, 1]^2``. Reward is the progress
    along the centerline (capped at the destination) plus a bonus on
    arrival; cost counts collision onsets and leaving the road.
    """

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.scene: SceneSpec | None = None
        self._done = True

    # -- episode control ---------------------------------------------------

    def reset(self, scene: SceneSpec) -> Observation:
        cfg = self.config
        self.scene = scene
        self.line: Polyline = scene.polyline
        self._tracks = [_TrafficTrack(v.waypoints, v.speed) for v in scene.traffic]
        self._obs_centers = np.array([o.center for o in scene.obstacles], dtype=np.float64).reshape(-1, 2)
        self._obs_radii = np.array([o.radius for o in scene.obstacles], dtype=np.float64)
        self._tr_radii = np.array([v.radius for v in scene.traffic], dtype=np.float64)
        x, y, h = scene.spawn_pose
        self._x, self._y, self._h, self._v = float(x), float(y), float(h), 0.0
        self._s, self._d = self.line.project((x, y))
        self.t = 0
        self._last_action = np.zeros(2)
        self._contacts = self._contact_mask()
        self._done = False
        self.episode_cost = 0
        self.episode_return = 0.0
        return self.observe()

    @property
    def done(self) -> bool:
        return self._done

    @property
    def time(self) -> float:
        return self.t * self.config.dt

    @property
    def state(self) -> EgoState:
        return EgoState((self._x, self._y), self._h, self._v, self._s, self._d)

    def discs(self) -> tuple[np.ndarray, np.ndarray]:
        if self._tracks:
            tr = np.array([trk.position(self.time) for trk in self._tracks])
            return (np.concatenate([self._obs_centers, tr]),
                    np.concatenate([self._obs_radii, self._tr_radii]))
        return self._obs_centers, self._obs_radii

    def _contact_mask(self) -> np.ndarray:
        centers, radii = self.discs()
        if len(centers) == 0:
            return np.zeros(0, dtype=bool)
        dist = np.hypot(centers[:, 0] - self._x, centers[:, 1] - self._y)
        return dist < radii + self.config.ego_radius

    # -- dynamics ----------------------------------------------------------

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeFinishedError("step() called on a finished episode; call reset()")
        cfg = self.config
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        steer = a[0] * cfg.max_steer
        accel = a[1] * (cfg.max_accel if a[1] >= 0 else cfg.max_brake)
        v = min(max(self._v + accel * cfg.dt, 0.0), cfg.max_speed)
        self._x += v * math.cos(self._h) * cfg.dt
        self._y += v * math.sin(self._h) * cfg.dt
        self._h = float(wrap_angle(self._h + v / cfg.wheelbase * math.tan(steer) * cfg.dt))
        self._v = v
        self.t += 1
        self._last_action = a

        prev_prog = min(self._s, self.scene.destination_s)
        self._s, self._d = self.line.project((self._x, self._y))
        prog = min(self._s, self.scene.destination_s)
        reward = prog - prev_prog

        contacts = self._contact_mask()
        cost = int(np.count_nonzero(contacts & ~self._contacts))
        self._contacts = contacts

        kind = Termination.NONE
        if self._s >= self.scene.destination_s:
            reward += DESTINATION_BONUS
            kind = Termination.DESTINATION
        elif abs(self._d) > self.scene.lane_half_width + cfg.road_margin:
            cost += 1
            kind = Termination.OUT_OF_ROAD
        elif cfg.crash_terminates and cost > 0:
            kind = Termination.CRASH_TERMINAL
        elif self.t >= cfg.horizon:
            kind = Termination.HORIZON
        self._done = kind is not Termination.NONE
        self.episode_cost += cost
        self.episode_return += reward
        info = {
            "speed": v,
            "frenet_s": self._s,
            "frenet_d": self._d,
            "step": self.t,
            "success": kind is Termination.DESTINATION,
        }
        return StepResult(self.observe(), float(reward), cost, self._done, kind, info)

    # -- observation -------------------------------------------------------

    def observe(self) -> Observation:
        cfg = self.config
        line = self.line
        track_h = float(line.heading_at(self._s))
        head_err = float(wrap_angle(self._h - track_h))
        ego = np.array([
            2.0 * self._v / cfg.max_speed - 1.0,
            head_err / cfg.angle_scale,
            self._d / (self.scene.lane_half_width + cfg.road_margin),
            self._last_action[0],
            self._last_action[1],
        ])
        look = np.asarray(cfg.nav_lookahead)
        pts = line.point_at(self._s + look)
        dx = pts[:, 0] - self._x
        dy = pts[:, 1] - self._y
        bearing = wrap_angle(np.arctan2(dy, dx) - self._h) / cfg.angle_scale
        dist = np.hypot(dx, dy) / look.max()
        nav = np.stack([bearing, dist], axis=1).ravel()
        centers, radii = self.discs()
        angles = self._h + 2.0 * np.pi * np.arange(cfg.n_rays) / cfg.n_rays
        lidar = ray_disc_distances((self._x, self._y), angles, centers, radii, cfg.max_range) / cfg.max_range
        return Observation(np.clip(ego, -1.0, 1.0), np.clip(nav, -1.0, 1.0), lidar)
