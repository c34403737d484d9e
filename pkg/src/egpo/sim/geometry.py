"""Planar geometry: polyline Frenet projection and disc ray casting."""

from __future__ import annotations

import numpy as np


class Polyline:
    """Centerline with cached segment data for fast Frenet queries."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("a polyline needs at least two 2D points")
        self.points = pts
        self.seg_start = pts[:-1]
        self.seg_vec = pts[1:] - pts[:-1]
        self.seg_len = np.linalg.norm(self.seg_vec, axis=1)
        if np.any(self.seg_len <= 0):
            raise ValueError("polyline has repeated points")
        self.seg_dir = self.seg_vec / self.seg_len[:, None]
        self.cum_s = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum_s[-1])

    def project(self, p) -> tuple[float, float]:
        """Arclength of the nearest centerline point and signed lateral offset (left positive)."""
        p = np.asarray(p, dtype=np.float64)
        rel = p - self.seg_start
        t = np.clip(np.einsum("ij,ij->i", rel, self.seg_dir), 0.0, self.seg_len)
        foot = self.seg_start + t[:, None] * self.seg_dir
        dist2 = np.sum((p - foot) ** 2, axis=1)
        i = int(np.argmin(dist2))
        s = self.cum_s[i] + t[i]
        cross = self.seg_dir[i, 0] * rel[i, 1] - self.seg_dir[i, 1] * rel[i, 0]
        d = float(np.sqrt(dist2[i]))
        return float(s), d if cross >= 0 else -d

    def point_at(self, s) -> np.ndarray:
        """Centerline position(s) at arclength ``s`` (clamped to the ends)."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        i = np.clip(np.searchsorted(self.cum_s, s, side="right") - 1, 0, len(self.seg_len) - 1)
        t = s - self.cum_s[i]
        return self.seg_start[i] + t[..., None] * self.seg_dir[i]

    def heading_at(self, s) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        i = np.clip(np.searchsorted(self.cum_s, s, side="right") - 1, 0, len(self.seg_len) - 1)
        d = self.seg_dir[i]
        return np.arctan2(d[..., 1], d[..., 0])

    def frenet_to_xy(self, s, d) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        base = self.point_at(s)
        h = self.heading_at(s)
        normal = np.stack([-np.sin(h), np.cos(h)], axis=-1)
        return base + np.asarray(d, dtype=np.float64)[..., None] * normal


def frenet_project(position, centerline) -> tuple[float, float]:
    """Project a point onto a centerline given as a Polyline or an (n, 2) array."""
    line = centerline if isinstance(centerline, Polyline) else Polyline(centerline)
    return line.project(position)


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def ray_disc_distances(origin, angles, centers, radii, max_range: float) -> np.ndarray:
    """Distance along each ray to the first disc boundary, capped at ``max_range``.

    A ray whose origin lies inside a disc reports 0.
    """
    angles = np.asarray(angles, dtype=np.float64)
    out = np.full(angles.shape, float(max_range))
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if len(centers) == 0:
        return out
    radii = np.asarray(radii, dtype=np.float64).reshape(-1)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # (n, 2)
    f = np.asarray(origin, dtype=np.float64) - centers  # (m, 2)
    # |f + t d|^2 = r^2 with |d| = 1  =>  t^2 + 2 (f.d) t + |f|^2 - r^2 = 0
    b = dirs @ f.T  # (n, m)
    c = np.sum(f * f, axis=1) - radii ** 2  # (m,)
    disc = b * b - c[None, :]
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    inside = c[None, :] <= 0
    t = np.where(inside, 0.0, np.where(t_near >= 0, t_near, np.inf))
    t = np.where(hit & (t_far >= 0), t, np.inf)
    t = np.where(inside, 0.0, t)
    return np.minimum(out, t.min(axis=1))
