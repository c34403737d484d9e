"""Seeded procedural driving scenes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polyline

OBSTACLE_RADII = {"cone": 0.4, "triangle": 0.8}


@dataclass(frozen=True)
class SceneConfig:
    """Ranges the generator draws from. Counts are inclusive integer ranges."""

    track_length: tuple[float, float] = (160.0, 200.0)
    lane_half_width: float = 4.0
    straight_length: tuple[float, float] = (15.0, 40.0)
    arc_radius: tuple[float, float] = (30.0, 70.0)
    arc_angle_deg: tuple[float, float] = (20.0, 60.0)
    max_heading_deg: float = 70.0
    clear_start: float = 25.0
    n_obstacles: tuple[int, int] = (3, 6)
    obstacle_gap: float = 14.0
    obstacle_lateral: float = 2.8
    n_traffic: tuple[int, int] = (0, 2)
    traffic_speed: tuple[float, float] = (3.0, 6.0)
    traffic_radius: float = 1.0
    traffic_start: tuple[float, float] = (30.0, 90.0)


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float
    kind: str


@dataclass(frozen=True)
class TrafficVehicle:
    waypoints: np.ndarray = field(compare=False)
    speed: float
    radius: float

    def __eq__(self, other):
        return (
            isinstance(other, TrafficVehicle)
            and self.speed == other.speed
            and self.radius == other.radius
            and np.array_equal(self.waypoints, other.waypoints)
        )

    def position(self, t: float) -> np.ndarray:
        """Constant-speed travel along the waypoint path; parks at the last waypoint."""
        return _path_point(self.waypoints, self.speed * t)


def _path_point(wp: np.ndarray, dist: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if dist >= cum[-1]:
        return wp[-1].copy()
    i = int(np.searchsorted(cum, dist, side="right") - 1)
    frac = (dist - cum[i]) / seg[i]
    return wp[i] + frac * (wp[i + 1] - wp[i])


@dataclass(frozen=True, eq=False)
class SceneSpec:
    seed: int
    centerline: np.ndarray
    lane_half_width: float
    obstacles: tuple[Obstacle, ...]
    traffic: tuple[TrafficVehicle, ...]
    spawn_pose: tuple[float, float, float]
    destination_s: float

    def __eq__(self, other):
        if not isinstance(other, SceneSpec):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.centerline, other.centerline)
            and self.lane_half_width == other.lane_half_width
            and self.obstacles == other.obstacles
            and self.traffic == other.traffic
            and self.spawn_pose == other.spawn_pose
            and self.destination_s == other.destination_s
        )

    __hash__ = None

    @property
    def polyline(self) -> Polyline:
        line = self.__dict__.get("_polyline")
        if line is None:
            line = Polyline(self.centerline)
            object.__setattr__(self, "_polyline", line)
        return line

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "lane_half_width": self.lane_half_width,
            "destination_s": self.destination_s,
            "spawn_pose": list(self.spawn_pose),
            "centerline": self.centerline.round(6).tolist(),
            "obstacles": [
                {"center": list(o.center), "radius": o.radius, "kind": o.kind}
                for o in self.obstacles
            ],
            "traffic": [
                {"speed": v.speed, "radius": v.radius, "waypoints": v.waypoints.round(6).tolist()}
                for v in self.traffic
            ],
        }


def _build_centerline(rng: np.random.Generator, cfg: SceneConfig, length: float) -> np.ndarray:
    pts = [np.zeros(2)]
    heading = 0.0
    max_h = math.radians(cfg.max_heading_deg)

    def extend_straight(dist: float):
        n = max(1, int(math.ceil(dist)))
        step = dist / n
        d = np.array([math.cos(heading), math.sin(heading)])
        for _ in range(n):
            pts.append(pts[-1] + step * d)

    extend_straight(cfg.clear_start)
    total = cfg.clear_start
    straight_next = False
    while total < length:
        if straight_next:
            dist = rng.uniform(*cfg.straight_length)
            extend_straight(dist)
            total += dist
        else:
            radius = rng.uniform(*cfg.arc_radius)
            angle = math.radians(rng.uniform(*cfg.arc_angle_deg))
            sign = 1.0 if rng.random() < 0.5 else -1.0
            if abs(heading + sign * angle) > max_h:
                sign = -sign
            arc = radius * angle
            n = max(2, int(math.ceil(arc)))
            dpsi = sign * angle / n
            chord = 2 * radius * math.sin(angle / (2 * n))
            for _ in range(n):
                mid = heading + dpsi / 2
                pts.append(pts[-1] + chord * np.array([math.cos(mid), math.sin(mid)]))
                heading += dpsi
            total += arc
        straight_next = not straight_next
    return np.array(pts)


def generate_scene(seed: int, difficulty: SceneConfig | None = None) -> SceneSpec:
    """Deterministically build a scene from ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    cfg = difficulty or SceneConfig()
    rng = np.random.default_rng([seed, 0x5CE])
    dest = float(rng.uniform(*cfg.track_length))
    centerline = _build_centerline(rng, cfg, dest + 10.0)
    line = Polyline(centerline)
    dest = min(dest, line.length)

    n_obs = int(rng.integers(cfg.n_obstacles[0], cfg.n_obstacles[1] + 1))
    lo, hi = cfg.clear_start, dest - 10.0
    s_vals: list[float] = []
    for _ in range(50 * max(n_obs, 1)):
        if len(s_vals) >= n_obs:
            break
        s = float(rng.uniform(lo, hi))
        if all(abs(s - o) >= cfg.obstacle_gap for o in s_vals):
            s_vals.append(s)
    obstacles = []
    for s in sorted(s_vals):
        kind = "cone" if rng.random() < 0.5 else "triangle"
        d = float(rng.uniform(-cfg.obstacle_lateral, cfg.obstacle_lateral))
        xy = line.frenet_to_xy(s, d)
        obstacles.append(Obstacle((float(xy[0]), float(xy[1])), OBSTACLE_RADII[kind], kind))

    n_tr = int(rng.integers(cfg.n_traffic[0], cfg.n_traffic[1] + 1))
    traffic = []
    half_lane = cfg.lane_half_width / 2
    for _ in range(n_tr):
        s0 = float(rng.uniform(*cfg.traffic_start))
        d = half_lane if rng.random() < 0.5 else -half_lane
        speed = float(rng.uniform(*cfg.traffic_speed))
        ss = np.arange(s0, line.length, 2.0)
        wp = line.frenet_to_xy(ss, np.full_like(ss, d))
        traffic.append(TrafficVehicle(wp, speed, cfg.traffic_radius))

    start_heading = float(line.heading_at(0.0))
    return SceneSpec(
        seed=int(seed),
        centerline=centerline,
        lane_half_width=cfg.lane_half_width,
        obstacles=tuple(obstacles),
        traffic=tuple(traffic),
        spawn_pose=(float(centerline[0, 0]), float(centerline[0, 1]), start_heading),
        destination_s=float(dest),
    )


def scene_seeds(start: int, count: int) -> list[int]:
    return list(range(start, start + count))
