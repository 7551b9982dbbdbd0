"""Planar rigid-body math, oriented-box collision, and polyline/polygon queries.

All angles are radians (counter-clockwise positive), all distances meters.
Everything here is a pure value type; nothing mutates after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

TAU = 2.0 * math.pi

# Two consecutive polyline points closer than this are considered duplicates.
DUPLICATE_POINT_EPS = 1e-9


class EmptyOverlap(Exception):
    """Two timed paths share no timestamps."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = math.remainder(theta, TAU)
    if t <= -math.pi:
        t += TAU
    return t


def quintic_ease(u: float) -> float:
    """Smoothstep blend 6u^5 - 15u^4 + 10u^3, clamped to [0, 1].

    C2 at both ends and symmetric about u = 0.5, so the midpoint of any
    eased transition sits exactly halfway between the endpoints.
    """
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position plus heading, heading kept in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def rotation(self) -> np.ndarray:
        """2x2 counter-clockwise rotation matrix for this heading."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


def compose(parent: Pose2, local: Pose2) -> Pose2:
    """Express a pose given in `parent`'s frame in the frame `parent` lives in."""
    c, s = math.cos(parent.theta), math.sin(parent.theta)
    return Pose2(
        parent.x + c * local.x - s * local.y,
        parent.y + s * local.x + c * local.y,
        normalize_angle(parent.theta + local.theta),
    )


def inverse(pose: Pose2) -> Pose2:
    """Pose q such that compose(pose, q) is the identity."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose2(-(c * pose.x + s * pose.y), -(-s * pose.x + c * pose.y), -pose.theta)


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle footprint: center pose plus half extents."""

    center: Pose2
    half_length: float
    half_width: float

    def __post_init__(self) -> None:
        if self.half_length <= 0.0 or self.half_width <= 0.0:
            raise ValueError("box half extents must be positive")

    def corners(self) -> np.ndarray:
        """World-frame corners, shape (4, 2), counter-clockwise."""
        hl, hw = self.half_length, self.half_width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])


def transform_box(pose: Pose2, box: OrientedBox) -> OrientedBox:
    """Re-express a box whose center is given in `pose`'s local frame."""
    return OrientedBox(compose(pose, box.center), box.half_length, box.half_width)


def _project_interval(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    dots = corners @ axis
    return float(dots.min()), float(dots.max())


def boxes_collide(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis overlap test; touching edges count as collision."""
    # Cheap circle rejection before the exact test.
    ra = math.hypot(a.half_length, a.half_width)
    rb = math.hypot(b.half_length, b.half_width)
    if math.hypot(b.center.x - a.center.x, b.center.y - a.center.y) > ra + rb:
        return False
    ca, cb = a.corners(), b.corners()
    for theta in (a.center.theta, b.center.theta):
        c, s = math.cos(theta), math.sin(theta)
        for axis in (np.array([c, s]), np.array([-s, c])):
            lo_a, hi_a = _project_interval(ca, axis)
            lo_b, hi_b = _project_interval(cb, axis)
            if hi_a < lo_b or hi_b < lo_a:
                return False
    return True


def separating_axis(a: OrientedBox, b: OrientedBox) -> np.ndarray | None:
    """A unit axis on which the boxes' projections are disjoint, or None.

    Acts as the certificate for a negative boxes_collide answer.
    """
    ca, cb = a.corners(), b.corners()
    for theta in (a.center.theta, b.center.theta):
        c, s = math.cos(theta), math.sin(theta)
        for axis in (np.array([c, s]), np.array([-s, c])):
            lo_a, hi_a = _project_interval(ca, axis)
            lo_b, hi_b = _project_interval(cb, axis)
            if hi_a < lo_b or hi_b < lo_a:
                return axis
    return None


class Polyline:
    """Ordered chain of 2D points with arc-length queries."""

    def __init__(self, points: Iterable[Sequence[float]]):
        pts = np.asarray(list(points), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs at least two (x, y) points")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg < DUPLICATE_POINT_EPS):
            raise ValueError("polyline has duplicate consecutive points")
        self.points = pts
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length s, clamped to the chain's ends."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(i, len(self.points) - 2)
        seg_len = self._cum[i + 1] - self._cum[i]
        w = 0.0 if seg_len == 0.0 else (s - self._cum[i]) / seg_len
        return self.points[i] * (1.0 - w) + self.points[i + 1] * w

    def tangent_at(self, s: float) -> np.ndarray:
        """Unit tangent of the segment containing arc length s."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return d / np.linalg.norm(d)

    def heading_at(self, s: float) -> float:
        t = self.tangent_at(s)
        return math.atan2(float(t[1]), float(t[0]))

    def project(self, point: Sequence[float]) -> tuple[float, float]:
        """Project a point onto the chain.

        Returns (s, d): arc length of the foot point and signed lateral
        offset, positive to the left of the travel direction.
        """
        p = np.asarray(point, dtype=float)
        best_s, best_d, best_dist = 0.0, 0.0, math.inf
        for i in range(len(self.points) - 1):
            a, b = self.points[i], self.points[i + 1]
            ab = b - a
            seg_len = float(np.linalg.norm(ab))
            w = float(np.dot(p - a, ab) / (seg_len * seg_len))
            w = min(max(w, 0.0), 1.0)
            foot = a + w * ab
            dist = float(np.linalg.norm(p - foot))
            if dist < best_dist:
                cross = float(ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0]))
                best_dist = dist
                best_s = float(self._cum[i]) + w * seg_len
                best_d = math.copysign(dist, cross) if cross != 0.0 else 0.0
        return best_s, best_d

    def offset(self, d: float) -> "Polyline":
        """Parallel chain at signed lateral offset d (positive left)."""
        out = []
        n = len(self.points)
        for i in range(n):
            j = min(i, n - 2)
            seg = self.points[j + 1] - self.points[j]
            seg = seg / np.linalg.norm(seg)
            normal = np.array([-seg[1], seg[0]])
            out.append(self.points[i] + d * normal)
        return Polyline(out)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    __hash__ = None  # type: ignore[assignment]


class Polygon:
    """Simple polygon with counter-clockwise winding."""

    def __init__(self, vertices: Iterable[Sequence[float]]):
        vs = np.asarray(list(vertices), dtype=float)
        if vs.ndim != 2 or vs.shape[1] != 2 or vs.shape[0] < 3:
            raise ValueError("polygon needs at least three vertices")
        area = _signed_area(vs)
        if area <= 0.0:
            raise ValueError("polygon must wind counter-clockwise (signed area > 0)")
        if not _is_simple(vs):
            raise ValueError("polygon must be simple (no self-intersection)")
        self.vertices = vs

    @cached_property
    def signed_area(self) -> float:
        return _signed_area(self.vertices)

    @cached_property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        cross = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        area = cross.sum() / 2.0
        cx = ((v[:, 0] + nxt[:, 0]) * cross).sum() / (6.0 * area)
        cy = ((v[:, 1] + nxt[:, 1]) * cross).sum() / (6.0 * area)
        return np.array([cx, cy])

    def contains(self, point: Sequence[float]) -> bool:
        return point_in_polygon(point, self)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    __hash__ = None  # type: ignore[assignment]


def _signed_area(vs: np.ndarray) -> float:
    nxt = np.roll(vs, -1, axis=0)
    return float((vs[:, 0] * nxt[:, 1] - nxt[:, 0] * vs[:, 1]).sum() / 2.0)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return False


def _is_simple(vs: np.ndarray) -> bool:
    n = len(vs)
    for i in range(n):
        a1, a2 = vs[i], vs[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, vs[j], vs[(j + 1) % n]):
                return False
    return True


def _point_on_segment(p, a, b, eps: float = 1e-12) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > eps * max(1.0, abs(b[0] - a[0]) + abs(b[1] - a[1])):
        return False
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    if dot < -eps:
        return False
    sq = (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
    return dot <= sq + eps


def point_in_polygon(point: Sequence[float], poly: Polygon) -> bool:
    """Ray-casting containment test; boundary points are inside."""
    x, y = float(point[0]), float(point[1])
    vs = poly.vertices
    n = len(vs)
    for i in range(n):
        if _point_on_segment((x, y), vs[i], vs[(i + 1) % n]):
            return True
    inside = False
    for i in range(n):
        x1, y1 = vs[i]
        x2, y2 = vs[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def min_clearance(path_a: Sequence[Sequence[float]], path_b: Sequence[Sequence[float]]) -> float:
    """Minimum center distance between two timed paths over shared timestamps.

    Each path is a sequence of (t, x, y) samples on a common grid; timestamps
    match when within 1e-9 s. Raises EmptyOverlap when no timestamp is shared.
    """
    a = np.asarray(path_a, dtype=float)
    b = np.asarray(path_b, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or b.ndim != 2 or b.shape[1] != 3:
        raise ValueError("timed paths must be (t, x, y) rows")
    ta, tb = a[:, 0], b[:, 0]
    jb = np.searchsorted(tb, ta)
    best = math.inf
    for i, j in enumerate(jb):
        for k in (j - 1, j):
            if 0 <= k < len(tb) and abs(tb[k] - ta[i]) <= 1e-9:
                d = math.hypot(a[i, 1] - b[k, 1], a[i, 2] - b[k, 2])
                if d < best:
                    best = d
    if best is math.inf:
        raise EmptyOverlap("timed paths share no timestamps")
    return best
