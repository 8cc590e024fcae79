"""ROI rectangles, quadrilaterals, homographies and the rasterized Jaccard index.

Coordinates follow the image convention: origin at the left-top corner of the
frame, x to the right, y pointing down. A pixel ``(i, j)`` (column, row) is
considered inside a shape when its center ``(i + 0.5, j + 0.5)`` is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

_DET_EPS = 1e-12
_INF_EPS = 1e-12


@dataclass(frozen=True)
class Roi:
    """Axis-parallel rectangle ``(x, y, w, h)`` with an integer label.

    A lost ROI has all four geometry fields set to NaN.
    """

    id: int
    x: float
    y: float
    w: float
    h: float

    @classmethod
    def lost_roi(cls, id: int) -> "Roi":
        return cls(id, math.nan, math.nan, math.nan, math.nan)

    @property
    def lost(self) -> bool:
        return any(math.isnan(v) for v in (self.x, self.y, self.w, self.h))

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def corners(self) -> np.ndarray:
        """Corners left-top, right-top, right-bottom, left-bottom as a (4, 2) array."""
        x0, y0, x1, y1 = self.x, self.y, self.x + self.w, self.y + self.h
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)

    def as_quad(self) -> "Quad":
        return Quad(self.corners())


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    # collinear touching counts as intersecting
    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


@dataclass(frozen=True, eq=False)
class Quad:
    """Quadrilateral given by four corners in order.

    For the image of a rectangle the order is left-top, right-top,
    right-bottom, left-bottom. The polygon must be simple and have non-zero
    area; anything else raises ``ValueError``.
    """

    corners: np.ndarray

    def __post_init__(self):
        c = np.array(self.corners, dtype=float).reshape(4, 2)
        if not np.all(np.isfinite(c)):
            raise ValueError("quad corners must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "corners", c)
        # the two pairs of opposite edges must not cross
        if _segments_intersect(c[0], c[1], c[2], c[3]) or _segments_intersect(
            c[1], c[2], c[3], c[0]
        ):
            raise ValueError("quad is self-intersecting")
        if abs(self.signed_area()) < 1e-9:
            raise ValueError("quad is degenerate (zero area)")

    def __eq__(self, other):
        return isinstance(other, Quad) and np.array_equal(self.corners, other.corners)

    def signed_area(self) -> float:
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        c = self.corners
        return (c[:, 0].min(), c[:, 1].min(), c[:, 0].max(), c[:, 1].max())


class Homography:
    """3x3 projective transform, normalized so that ``H[2, 2] == 1`` when possible."""

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float).reshape(3, 3)
        if m[2, 2] != 0:
            m = m / m[2, 2]
        if not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) <= _DET_EPS:
            raise ValueError("homography is singular")
        m.setflags(write=False)
        self._m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1, 0, tx], [0, 1, ty], [0, 0, 1]])

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "Homography":
        sy = sx if sy is None else sy
        return cls([[sx, 0, 0], [0, sy, 0], [0, 0, 1]])

    @classmethod
    def rotation(cls, degrees: float, center=(0.0, 0.0)) -> "Homography":
        t = math.radians(degrees)
        c, s = math.cos(t), math.sin(t)
        cx, cy = center
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        return cls(_translate(cx, cy) @ rot @ _translate(-cx, -cy))

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self._m))

    def __matmul__(self, other: "Homography") -> "Homography":
        """``H2 @ H1`` applies ``H1`` first."""
        return Homography(self._m @ other._m)

    def __repr__(self):
        return f"Homography({self._m.tolist()!r})"

    def apply(self, points) -> np.ndarray:
        """Map an (N, 2) array of points. Raises if any point maps to infinity."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        m = self._m
        s = m[2, 0] * flat[:, 0] + m[2, 1] * flat[:, 1] + m[2, 2]
        if np.any(np.abs(s) < _INF_EPS):
            raise ValueError("point maps to infinity")
        x = (m[0, 0] * flat[:, 0] + m[0, 1] * flat[:, 1] + m[0, 2]) / s
        y = (m[1, 0] * flat[:, 0] + m[1, 1] * flat[:, 1] + m[1, 2]) / s
        return np.stack([x, y], axis=-1).reshape(pts.shape)


def _translate(tx, ty):
    return np.array([[1.0, 0, tx], [0, 1.0, ty], [0, 0, 1.0]])


def apply_homography(H: Homography, p) -> tuple[float, float]:
    x, y = H.apply(np.asarray(p, dtype=float).reshape(1, 2))[0]
    return float(x), float(y)


def transform_quad(H: Homography, q: Quad) -> Quad:
    return Quad(H.apply(q.corners))


def roi_visible_fraction(r: Roi, frame_w: int, frame_h: int) -> float:
    """Fraction of the ROI area lying inside ``[0, frame_w) x [0, frame_h)``."""
    ix = max(0.0, min(r.x + r.w, frame_w) - max(r.x, 0.0))
    iy = max(0.0, min(r.y + r.h, frame_h) - max(r.y, 0.0))
    return (ix * iy) / (r.w * r.h)


# -- rasterization ---------------------------------------------------------


def rect_pixel_range(x: float, w: float) -> tuple[int, int]:
    """Half-open integer range ``[lo, hi)`` of pixel indices whose centers lie in ``[x, x + w)``."""
    return math.ceil(x - 0.5), math.ceil(x + w - 0.5)


def rect_mask(r: Roi, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """Boolean mask of ``r`` over the window of pixels ``[x0, x0+width) x [y0, y0+height)``."""
    cx = np.arange(x0, x0 + width) + 0.5
    cy = np.arange(y0, y0 + height) + 0.5
    in_x = (cx >= r.x) & (cx < r.x + r.w)
    in_y = (cy >= r.y) & (cy < r.y + r.h)
    return in_y[:, None] & in_x[None, :]


def quad_mask(q: Quad, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """Even-odd point-in-polygon mask of ``q`` over a pixel window."""
    px = (np.arange(x0, x0 + width) + 0.5)[None, :]
    py = (np.arange(y0, y0 + height) + 0.5)[:, None]
    inside = np.zeros((height, width), dtype=bool)
    c = q.corners
    for k in range(4):
        xa, ya = c[k]
        xb, yb = c[(k + 1) % 4]
        if ya == yb:
            continue
        straddle = (ya > py) != (yb > py)
        # x where the edge crosses the horizontal line through py
        xcross = xa + (py - ya) * (xb - xa) / (yb - ya)
        inside ^= straddle & (px < xcross)
    return inside


def jaccard(truth: Quad, estimate: Roi) -> float:
    """Rasterized intersection-over-union of a ground-truth quad and an ROI.

    Returns NaN when the estimate is lost.
    """
    if estimate.lost:
        return math.nan
    qx0, qy0, qx1, qy1 = truth.bounds()
    x0 = min(math.floor(qx0), math.floor(estimate.x))
    y0 = min(math.floor(qy0), math.floor(estimate.y))
    x1 = max(math.ceil(qx1), math.ceil(estimate.x + estimate.w))
    y1 = max(math.ceil(qy1), math.ceil(estimate.y + estimate.h))
    a = quad_mask(truth, x0, y0, x1 - x0, y1 - y0)
    b = rect_mask(estimate, x0, y0, x1 - x0, y1 - y0)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def rect_quad(x: float, y: float, w: float, h: float) -> Quad:
    return Roi(0, x, y, w, h).as_quad()


def collinearity_residual(points: Iterable) -> float:
    """Cross-product residual of three points (0 when exactly collinear)."""
    (ax, ay), (bx, by), (cx, cy) = points
    return abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
