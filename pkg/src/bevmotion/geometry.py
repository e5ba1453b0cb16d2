"""Planar oriented-box geometry shared by rasterization, losses, and metrics.

Conventions used throughout the package:
  * x is forward, y is left, angles are counter-clockwise radians in (-pi, pi].
  * An oriented box is a rectangle of size length x width centered at (cx, cy),
    with the length axis pointing along the heading.
  * Cross-track sign: positive means left of the reference heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Vertices closer than this are merged when clipping intersection polygons,
# which avoids sliver polygons in degenerate contact cases.
_VERTEX_MERGE_EPS = 1e-9


def normalize_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi].

    Args:
        theta: Angle in radians. Must be finite.

    Returns:
        The equivalent angle in (-pi, pi].

    Raises:
        ValueError: If ``theta`` is NaN or infinite.
    """
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    wrapped = math.remainder(theta, TWO_PI)
    # math.remainder returns values in [-pi, pi]; fold -pi onto +pi.
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def heading_to_sincos(theta: float) -> tuple[float, float]:
    """Encode a heading as its (sin, cos) pair."""
    if not math.isfinite(theta):
        raise ValueError(f"heading must be finite, got {theta!r}")
    return math.sin(theta), math.cos(theta)


def sincos_to_heading(sin_theta: float, cos_theta: float) -> float:
    """Recover a heading in (-pi, pi] from an (unnormalized) sin/cos pair.

    Raises:
        ValueError: If both components are zero, which carries no direction.
    """
    if sin_theta == 0.0 and cos_theta == 0.0:
        raise ValueError("(0, 0) sin/cos pair has no defined heading")
    return normalize_angle(math.atan2(sin_theta, cos_theta))


@dataclass
class OrientedBox:
    """Rectangle with center (cx, cy), extents, and heading in (-pi, pi]."""

    cx: float
    cy: float
    length: float
    width: float
    heading: float

    def __post_init__(self) -> None:
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError(
                f"box extents must be positive, got length={self.length} width={self.width}"
            )
        self.heading = normalize_angle(self.heading)

    @property
    def area(self) -> float:
        return self.length * self.width

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (N, 2) array of points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx = pts[:, 0] - self.cx
        dy = pts[:, 1] - self.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= self.length / 2.0) & (np.abs(v) <= self.width / 2.0)


@dataclass
class Waypoint:
    """A future box center with its heading."""

    cx: float
    cy: float
    heading: float

    def __post_init__(self) -> None:
        self.heading = normalize_angle(self.heading)


@dataclass
class Trajectory:
    """An ordered sequence of H future waypoints, spaced ``horizon_dt`` apart."""

    waypoints: tuple[Waypoint, ...]
    horizon_dt: float

    def __post_init__(self) -> None:
        self.waypoints = tuple(self.waypoints)
        if len(self.waypoints) < 1:
            raise ValueError("a trajectory needs at least one waypoint")
        if not self.horizon_dt > 0.0:
            raise ValueError(f"horizon_dt must be positive, got {self.horizon_dt}")

    def __len__(self) -> int:
        return len(self.waypoints)

    def centers(self) -> np.ndarray:
        """Waypoint centers as an (H, 2) array."""
        return np.array([[w.cx, w.cy] for w in self.waypoints], dtype=float)

    def headings(self) -> np.ndarray:
        return np.array([w.heading for w in self.waypoints], dtype=float)


@dataclass
class AtCtError:
    """Signed along-track / cross-track decomposition of a waypoint error."""

    at: float
    ct: float

    @property
    def norm(self) -> float:
        return math.hypot(self.at, self.ct)


def box_corners(box: OrientedBox) -> np.ndarray:
    """Corners of the box, counter-clockwise starting from front-left.

    Front-left means (+length/2, +width/2) in the box frame before rotation.

    Returns:
        (4, 2) float array of corner coordinates.
    """
    hl, hw = box.length / 2.0, box.width / 2.0
    local = np.array(
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]], dtype=float
    )
    c, s = math.cos(box.heading), math.sin(box.heading)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.cx, box.cy])


def _clip_polygon(subject: list[tuple[float, float]], a: tuple[float, float],
                  b: tuple[float, float]) -> list[tuple[float, float]]:
    """Clip ``subject`` by the half-plane left of the directed edge a->b."""
    ex, ey = b[0] - a[0], b[1] - a[1]

    def side(p: tuple[float, float]) -> float:
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    out: list[tuple[float, float]] = []
    n = len(subject)
    for i in range(n):
        p, q = subject[i], subject[(i + 1) % n]
        sp, sq = side(p), side(q)
        if sp >= 0.0:
            out.append(p)
            if sq < 0.0:
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif sq >= 0.0:
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _merge_close_vertices(poly: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not poly:
        return poly
    merged: list[tuple[float, float]] = []
    for p in poly:
        if merged and abs(p[0] - merged[-1][0]) <= _VERTEX_MERGE_EPS \
                and abs(p[1] - merged[-1][1]) <= _VERTEX_MERGE_EPS:
            continue
        merged.append(p)
    while len(merged) > 1 and abs(merged[0][0] - merged[-1][0]) <= _VERTEX_MERGE_EPS \
            and abs(merged[0][1] - merged[-1][1]) <= _VERTEX_MERGE_EPS:
        merged.pop()
    return merged


def _shoelace_area(poly: list[tuple[float, float]]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    """Area of the intersection of two oriented boxes via convex clipping."""
    subject = [tuple(p) for p in box_corners(a)]
    clipper = [tuple(p) for p in box_corners(b)]
    poly = subject
    for i in range(4):
        poly = _clip_polygon(poly, clipper[i], clipper[(i + 1) % 4])
        if not poly:
            return 0.0
    return _shoelace_area(_merge_close_vertices(poly))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of two oriented boxes, in [0, 1].

    The boxes are treated as point sets, so a heading flipped by pi yields
    the same value. Degenerate (near-zero-area) intersections resolve to 0.
    Exactly symmetric in its arguments, and exactly 1.0 for identical boxes:
    arguments are ordered canonically before clipping, and the union uses
    the same shoelace representation as the intersection.
    """
    key_a = (a.cx, a.cy, a.length, a.width, a.heading)
    key_b = (b.cx, b.cy, b.length, b.width, b.heading)
    if key_b < key_a:
        a, b = b, a
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    area_a = _shoelace_area([tuple(p) for p in box_corners(a)])
    area_b = _shoelace_area([tuple(p) for p in box_corners(b)])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def decompose_at_ct(predicted: Waypoint, truth: Waypoint) -> AtCtError:
    """Project a waypoint displacement onto the truth-heading frame.

    at is the component along the ground-truth heading, ct the component to
    its left; the pair preserves the Euclidean displacement norm.
    """
    dx = predicted.cx - truth.cx
    dy = predicted.cy - truth.cy
    c, s = math.cos(truth.heading), math.sin(truth.heading)
    return AtCtError(at=dx * c + dy * s, ct=-dx * s + dy * c)


def monte_carlo_iou(a: OrientedBox, b: OrientedBox, num_samples: int,
                    rng: np.random.Generator) -> float:
    """Estimate IoU by uniform sampling over the joint corner bounding box.

    Test oracle for :func:`rotated_iou`; intentionally independent of the
    polygon-clipping path.
    """
    corners = np.vstack([box_corners(a), box_corners(b)])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    pts = rng.uniform(lo, hi, size=(num_samples, 2))
    in_a = a.contains(pts)
    in_b = b.contains(pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union
