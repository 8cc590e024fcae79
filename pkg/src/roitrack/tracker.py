"""Region tracking by aggregating a dense flow field inside each ROI.

Two aggregations are available. ``median`` moves each ROI by the
component-wise median of the flow inside it and never changes its size.
``affine`` fits ``u = tau_x + sigma_x * x`` and ``v = tau_y + sigma_y * y`` by
least squares, which adds per-axis scaling about the frame origin.

A ROI that is lost becomes NaN for good; there is no re-acquisition.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .flow import FlowConfig, estimate_flow, estimate_flow_pyramids, flow_pyramid, sample_flow, warmup
from .geometry import Roi, roi_visible_fraction

METHODS = ("median", "affine")
_SPREAD_EPS = 1e-9


class NoSamplesError(ValueError):
    """Raised when a ROI has no flow samples to aggregate."""


@dataclass(frozen=True)
class Displacement:
    du: float
    dv: float


@dataclass(frozen=True)
class AffineFlowParams:
    """Per-axis translation (pixels) and scale increment of an affine flow fit.

    ``fallback_x``/``fallback_y`` are set when the coordinate spread along that
    axis was too small to fit a slope; the axis is then translation only.
    """

    tau_x: float
    sigma_x: float
    tau_y: float
    sigma_y: float
    fallback_x: bool = False
    fallback_y: bool = False


@dataclass(frozen=True)
class TrackerConfig:
    method: str = "median"
    min_visible_frac: float = 0.5
    min_samples: int = 9
    min_roi_side: float = 4.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.min_visible_frac <= 1.0:
            raise ValueError("min_visible_frac must be in (0, 1]")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if not self.min_roi_side > 0:
            raise ValueError("min_roi_side must be positive")


@dataclass
class Trajectory:
    """ROI estimates for every frame.

    ``boxes[t, i]`` holds ``(x, y, w, h)`` of ROI ``ids[i]`` at frame ``t``,
    NaN once lost. ``step_seconds[t - 1]`` is the wall-clock time spent
    producing frame ``t`` (flow plus aggregation).
    """

    ids: tuple[int, ...]
    boxes: np.ndarray
    step_seconds: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=float).reshape(-1, len(self.ids), 4)

    def __len__(self):
        return self.boxes.shape[0]

    @property
    def n_rois(self) -> int:
        return len(self.ids)

    def rois(self, t: int) -> list[Roi]:
        return [Roi(i, *map(float, b)) for i, b in zip(self.ids, self.boxes[t])]

    def lost_mask(self) -> np.ndarray:
        """``(T, N)`` boolean array, True where the ROI is lost."""
        return np.isnan(self.boxes).any(axis=2)

    def tracking_seconds(self) -> float:
        return float(sum(self.step_seconds))

    def fps(self) -> float:
        """Processed frame pairs per second of tracking time (NaN if no timing)."""
        total = self.tracking_seconds()
        if not self.step_seconds or total <= 0:
            return math.nan
        return len(self.step_seconds) / total

    @classmethod
    def from_rois(cls, per_frame: Sequence[Sequence[Roi]], step_seconds=None) -> "Trajectory":
        ids = tuple(r.id for r in per_frame[0])
        boxes = np.array([[r.box for r in rois] for rois in per_frame], dtype=float)
        return cls(ids, boxes, list(step_seconds or []))


# -- aggregation -----------------------------------------------------------


def median_aggregate(u_samples, v_samples) -> Displacement:
    u = np.asarray(u_samples, dtype=float)
    v = np.asarray(v_samples, dtype=float)
    if u.size == 0 or v.size == 0:
        raise NoSamplesError("no samples")
    if u.shape != v.shape:
        raise ValueError("u and v sample counts differ")
    # np.median averages the two middle order statistics for even counts
    return Displacement(float(np.median(u)), float(np.median(v)))


def _fit_line(values: np.ndarray, coord: np.ndarray):
    c_mean = coord.mean()
    dc = coord - c_mean
    spread = float(np.dot(dc, dc)) / coord.size
    if spread < _SPREAD_EPS:
        return float(np.median(values)), 0.0, True
    slope = float(np.dot(dc, values - values.mean()) / np.dot(dc, dc))
    return float(values.mean() - slope * c_mean), slope, False


def affine_fit(u_samples, v_samples, coords) -> AffineFlowParams:
    """Least-squares fit of ``u ~ tau_x + sigma_x x`` and ``v ~ tau_y + sigma_y y``.

    The two axes are independent 1-D regressions over the same sample set.
    An axis whose coordinates barely vary (variance below 1e-9) falls back to
    ``sigma = 0`` and ``tau = median``.
    """
    u = np.asarray(u_samples, dtype=float)
    v = np.asarray(v_samples, dtype=float)
    xy = np.asarray(coords, dtype=float).reshape(-1, 2)
    if u.size == 0:
        raise NoSamplesError("no samples")
    if not (u.size == v.size == xy.shape[0]):
        raise ValueError("sample and coordinate counts differ")
    tau_x, sigma_x, fb_x = _fit_line(u, xy[:, 0])
    tau_y, sigma_y, fb_y = _fit_line(v, xy[:, 1])
    return AffineFlowParams(tau_x, sigma_x, tau_y, sigma_y, fb_x, fb_y)


def update_median(r: Roi, d: Displacement) -> Roi:
    return Roi(r.id, r.x + d.du, r.y + d.dv, r.w, r.h)


def update_affine(r: Roi, p: AffineFlowParams, min_roi_side: float = 0.0) -> Roi:
    """Scale about the frame origin by ``1 + sigma`` per axis, then translate by ``tau``.

    Returns a lost ROI if a side ends up below ``min_roi_side`` or the
    scale factor is not positive.
    """
    sx = 1.0 + p.sigma_x
    sy = 1.0 + p.sigma_y
    if not (sx > 0 and sy > 0):
        return Roi.lost_roi(r.id)
    out = Roi(r.id, r.x + p.sigma_x * r.x + p.tau_x, r.y + p.sigma_y * r.y + p.tau_y, sx * r.w, sy * r.h)
    if out.w < min_roi_side or out.h < min_roi_side:
        return Roi.lost_roi(r.id)
    return out


# -- tracking loop ---------------------------------------------------------


def _is_alive(r: Roi, frame_w: int, frame_h: int, cfg: TrackerConfig) -> bool:
    if r.lost or r.w < cfg.min_roi_side or r.h < cfg.min_roi_side:
        return False
    return roi_visible_fraction(r, frame_w, frame_h) >= cfg.min_visible_frac


def update_rois(flow: np.ndarray, rois: Iterable[Roi], cfg: TrackerConfig) -> list[Roi]:
    """Move every live ROI with an already computed flow field and apply the loss rule."""
    h, w = flow.shape[:2]
    out = []
    for r in rois:
        if r.lost:
            out.append(r)
            continue
        u, v, coords = sample_flow(flow, r, w, h)
        if u.size < cfg.min_samples:
            out.append(Roi.lost_roi(r.id))
            continue
        if cfg.method == "median":
            new = update_median(r, median_aggregate(u, v))
        else:
            new = update_affine(r, affine_fit(u, v, coords), cfg.min_roi_side)
        out.append(new if _is_alive(new, w, h, cfg) else Roi.lost_roi(r.id))
    return out


def step(
    prev: np.ndarray,
    next: np.ndarray,
    rois: Sequence[Roi],
    cfg: TrackerConfig | None = None,
    flow_cfg: FlowConfig | None = None,
) -> list[Roi]:
    """Advance ROIs from ``prev`` to ``next``. Lost ROIs pass through unchanged."""
    cfg = cfg or TrackerConfig()
    flow = estimate_flow(prev, next, flow_cfg)
    return update_rois(flow, rois, cfg)


def validate_initial(rois: Sequence[Roi], frame_w: int, frame_h: int) -> None:
    """Reject initial ROIs that are not live rectangles inside the frame."""
    seen = set()
    for k, r in enumerate(rois):
        if r.id in seen:
            raise ValueError(f"ROI {r.id} (index {k}): duplicate id")
        seen.add(r.id)
        if r.lost or not (r.w > 0 and r.h > 0):
            raise ValueError(f"ROI {r.id} (index {k}): needs finite positive width and height")
        if r.x < 0 or r.y < 0 or r.x + r.w > frame_w or r.y + r.h > frame_h:
            raise ValueError(
                f"ROI {r.id} (index {k}): ({r.x}, {r.y}, {r.w}, {r.h}) is outside "
                f"the {frame_w}x{frame_h} frame"
            )


class RegionTracker:
    """Incremental tracker: feed frames one at a time.

    >>> trk = RegionTracker(first_frame, rois)          # doctest: +SKIP
    >>> for frame in rest: current = trk.update(frame)  # doctest: +SKIP
    """

    def __init__(self, frame, rois: Sequence[Roi], cfg: TrackerConfig | None = None,
                 flow_cfg: FlowConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.flow_cfg = flow_cfg or FlowConfig()
        frame = np.asarray(frame)
        validate_initial(rois, frame.shape[1], frame.shape[0])
        self.frame = frame
        self._pyramid = None
        self.rois = list(rois)
        self.history = [list(rois)]
        self.step_seconds: list[float] = []
        warmup()

    def update(self, frame) -> list[Roi]:
        frame = np.asarray(frame)
        if frame.shape[:2] != self.frame.shape[:2]:
            raise ValueError(f"frame size mismatch: {self.frame.shape[:2]} vs {frame.shape[:2]}")
        t0 = time.perf_counter()
        # each frame's pyramid is built once and reused as the next step's "prev"
        if self._pyramid is None:
            self._pyramid = flow_pyramid(self.frame, self.flow_cfg)
        pyramid = flow_pyramid(frame, self.flow_cfg)
        flow = estimate_flow_pyramids(self._pyramid, pyramid, self.flow_cfg)
        self.rois = update_rois(flow, self.rois, self.cfg)
        self.step_seconds.append(time.perf_counter() - t0)
        self.frame = frame
        self._pyramid = pyramid
        self.history.append(self.rois)
        return self.rois

    def trajectory(self) -> Trajectory:
        return Trajectory.from_rois(self.history, self.step_seconds)


def track(
    frames: Iterable[np.ndarray],
    initial: Sequence[Roi],
    cfg: TrackerConfig | None = None,
    flow_cfg: FlowConfig | None = None,
) -> Trajectory:
    """Track ``initial`` ROIs (given in the first frame) through ``frames``."""
    it = iter(frames)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("empty frame sequence") from None
    if not initial:
        raise ValueError("no ROIs to track")
    trk = RegionTracker(first, initial, cfg, flow_cfg)
    for frame in it:
        trk.update(frame)
    return trk.trajectory()
