"""2D geometric primitives: segments, polygons, closest points, crossings."""

from __future__ import annotations

import numpy as np

Vec2 = np.ndarray  # shape (2,), metres (or m/s, N by context)


def vec(x: float, y: float) -> Vec2:
    return np.array([x, y], dtype=float)


def norm(v: np.ndarray) -> float:
    return float(np.hypot(v[0], v[1]))


def unit(v: np.ndarray, eps: float = 1e-12) -> Vec2:
    """Unit vector of v; zero vector maps to (0, 0)."""
    n = np.hypot(v[0], v[1])
    if n < eps:
        return np.zeros(2)
    return v / n


def perp(v: np.ndarray) -> Vec2:
    """v rotated +90 degrees."""
    return np.array([-v[1], v[0]])


def closest_point_on_segment(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Closest points on segment [a, b] for each row of points (n, 2)."""
    points = np.atleast_2d(points)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return np.broadcast_to(a, points.shape).copy()
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    return a + t[:, None] * ab


def distance_to_segment(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from each row of points (n, 2) to segment [a, b]."""
    points = np.atleast_2d(points)
    cp = closest_point_on_segment(points, a, b)
    d = points - cp
    return np.hypot(d[:, 0], d[:, 1])


def _orient(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> bool:
    # q collinear with [p, r]: does q lie within the bounding box of [p, r]?
    return (
        min(p[0], r[0]) - 1e-12 <= q[0] <= max(p[0], r[0]) + 1e-12
        and min(p[1], r[1]) - 1e-12 <= q[1] <= max(p[1], r[1]) + 1e-12
    )


def segments_cross(p0, p1, q0, q1) -> bool:
    """True if segments [p0, p1] and [q0, q1] intersect (touching counts)."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if abs(d1) < 1e-12 and _on_segment(q0, p0, q1):
        return True
    if abs(d2) < 1e-12 and _on_segment(q0, p1, q1):
        return True
    if abs(d3) < 1e-12 and _on_segment(p0, q0, p1):
        return True
    if abs(d4) < 1e-12 and _on_segment(p0, q1, p1):
        return True
    return False


def polygon_contains(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Ray-cast containment test; poly (k, 2), points (n, 2) -> bool (n,)."""
    poly = np.asarray(poly, dtype=float)
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < np.where(crosses, xint, np.inf))
    return inside


def polygon_edges(poly: np.ndarray) -> np.ndarray:
    """Edges of a polygon as an array of segments (k, 2, 2)."""
    poly = np.asarray(poly, dtype=float)
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def segment_length(seg: np.ndarray) -> float:
    return norm(np.asarray(seg[1], dtype=float) - np.asarray(seg[0], dtype=float))


def stable_hash_u64(*values: int) -> int:
    """Deterministic 64-bit mix of integers (splitmix64 chain).

    Used to derive per-agent / per-locale random material from the run seed
    without any dependence on call ordering or thread scheduling.
    """
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = (h + (int(v) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 30
        h = (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 31
    return h


def hash_direction(*values: int) -> Vec2:
    """Deterministic pseudo-random unit vector derived from integer inputs."""
    h = stable_hash_u64(*values)
    angle = (h / 2**64) * 2.0 * np.pi
    return np.array([np.cos(angle), np.sin(angle)])
