"""Synthetic tracking benchmark: random projective motion of a still image.

A scenario takes one source image, places random ROIs on it and moves it
through a sequence of projective poses. A pose composes, about the frame
center and in this order: elation, shear, anisotropic scale, rotation,
translation. Rotation, scale, shear and elation stay within fixed bounds
relative to the first frame; translation drifts with a bounded per-frame
step. Saturated elliptical "reflections" are painted on the frames
handed to the tracker; ground truth is unaffected by them.

All randomness comes from one seed, split into independent streams for ROI
placement, motion and reflections. Motion draws are the same uniforms
whatever the bounds, so two scenarios with the same seed that differ only
in, say, the rotation bound share every other motion component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import Homography, Quad, Roi, jaccard, transform_quad
from .tracker import Trajectory

ROI_SIDE_RANGE = (24, 80)
REFLECTION_RADIUS_RANGE = (2.0, 12.0)
PLACEMENT_ATTEMPTS = 1000
N_BOUNDED = 7
WALK_STEP = 0.25
JACCARD_GOOD = 0.85


@dataclass(frozen=True)
class MotionBounds:
    max_shear: float = 3.0
    scale_range: tuple[float, float] = (0.95, 1.05)
    max_translation_step: float = 3.0
    max_rotation_deg: float = 0.0
    n_reflections: int = 0
    n_frames: int = 50
    n_rois: int = 10

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= 1 <= hi:
            raise ValueError("scale_range must be positive and contain 1")
        for name in ("max_shear", "max_translation_step", "max_rotation_deg", "n_reflections"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n_frames < 1 or self.n_rois < 0:
            raise ValueError("n_frames must be >= 1 and n_rois >= 0")

    @classmethod
    def still(cls, **kw) -> "MotionBounds":
        """No motion at all."""
        base = dict(max_shear=0.0, scale_range=(1.0, 1.0), max_translation_step=0.0,
                    max_rotation_deg=0.0)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class Motion:
    """Components of a projective transform about ``center``.

    Applied in the order elation, shear, scale, rotation, translation.
    """

    rotation_deg: float
    scale: tuple[float, float]
    shear: tuple[float, float]
    translation: tuple[float, float]
    elation: tuple[float, float]
    center: tuple[float, float]

    def matrix(self) -> np.ndarray:
        cx, cy = self.center
        t = math.radians(self.rotation_deg)
        c, s = math.cos(t), math.sin(t)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        scale = np.diag([self.scale[0], self.scale[1], 1.0])
        shear = np.array([[1.0, self.shear[0], 0.0], [self.shear[1], 1.0, 0.0], [0.0, 0.0, 1.0]])
        elation = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [self.elation[0], self.elation[1], 1.0]])
        shift = np.array([[1.0, 0.0, cx + self.translation[0]], [0.0, 1.0, cy + self.translation[1]],
                          [0.0, 0.0, 1.0]])
        uncenter = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
        return shift @ rot @ scale @ shear @ elation @ uncenter

    def homography(self) -> Homography:
        return Homography(self.matrix())


def centered_corners(width, height) -> np.ndarray:
    hw, hh = width / 2.0, height / 2.0
    return np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])


def _motion(unit: np.ndarray, translation, bounds: MotionBounds, width, height) -> Motion:
    """Map normalized components in [-1, 1] onto ``bounds``.

    ``unit`` holds rotation, scale x, scale y, shear x, shear y, elation x,
    elation y.
    """
    lo, hi = bounds.scale_range
    scale = tuple(float(1.0 + z * ((hi - 1.0) if z > 0 else (1.0 - lo))) for z in unit[1:3])
    # shear k moves the frame border (half an extent from the center) by k * half-extent
    kx = unit[3] * bounds.max_shear / (height / 2.0)
    ky = unit[4] * bounds.max_shear / (width / 2.0)
    # elation p -> p / (1 + e.p) moves a corner p by |p| |e.p| / |1 + e.p|, which is
    # at most max_shear whenever |e.p| <= max_shear / (|p| + max_shear)
    m = bounds.max_shear
    hw, hh = width / 2.0, height / 2.0
    limit = m / (math.hypot(hw, hh) + m)
    elation = (float(unit[5] * limit / (2 * hw)), float(unit[6] * limit / (2 * hh)))
    return Motion(
        rotation_deg=float(unit[0] * bounds.max_rotation_deg),
        scale=scale,
        shear=(float(kx), float(ky)),
        translation=(float(translation[0]), float(translation[1])),
        elation=elation,
        center=(width / 2.0, height / 2.0),
    )


def _disk_step(radius: float, rng: np.random.Generator):
    r_u, a_u = rng.uniform(0.0, 1.0, size=2)
    r = radius * math.sqrt(r_u)
    phi = 2.0 * math.pi * a_u
    return np.array([r * math.cos(phi), r * math.sin(phi)])


def sample_motion(bounds: MotionBounds, rng: np.random.Generator, width: int, height: int) -> Motion:
    """One random transform with every component drawn uniformly within ``bounds``."""
    unit = rng.uniform(-1.0, 1.0, size=N_BOUNDED)
    return _motion(unit, _disk_step(bounds.max_translation_step, rng), bounds, width, height)


def sample_transform(bounds: MotionBounds, rng: np.random.Generator, width: int = 480,
                     height: int = 360) -> Homography:
    return sample_motion(bounds, rng, width, height).homography()


def _reflect(z: np.ndarray) -> np.ndarray:
    z = np.where(z > 1.0, 2.0 - z, z)
    return np.where(z < -1.0, -2.0 - z, z)


def motion_walk(bounds: MotionBounds, rng: np.random.Generator, width: int, height: int,
                n_frames: int | None = None) -> list[Motion]:
    """Poses ``H_{0->t}`` of a scenario, starting at the identity.

    Rotation, scale, shear and elation wander inside their bounds (each step
    moves at most ``WALK_STEP`` of the half-range, reflecting at the limits);
    translation accumulates disk-uniform steps of at most
    ``max_translation_step`` pixels.
    """
    n = bounds.n_frames if n_frames is None else n_frames
    unit = np.zeros(N_BOUNDED)
    shift = np.zeros(2)
    poses = [_motion(unit, shift, bounds, width, height)]
    for _ in range(1, n):
        unit = _reflect(unit + WALK_STEP * rng.uniform(-1.0, 1.0, size=N_BOUNDED))
        shift = shift + _disk_step(bounds.max_translation_step, rng)
        poses.append(_motion(unit, shift, bounds, width, height))
    return poses


# -- frame synthesis -------------------------------------------------------


def warp_frame(frame: np.ndarray, H: Homography) -> np.ndarray:
    """Inverse-warp ``frame`` by ``H`` with bilinear interpolation; outside is black."""
    src = np.asarray(frame)
    h, w = src.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    centers = np.stack([xx.ravel() + 0.5, yy.ravel() + 0.5], axis=1)
    pts = H.inverse().apply(centers) - 0.5
    coords = [pts[:, 1].reshape(h, w), pts[:, 0].reshape(h, w)]
    planes = src[..., None] if src.ndim == 2 else src
    out = np.empty_like(planes)
    for c in range(planes.shape[2]):
        vals = ndimage.map_coordinates(planes[..., c].astype(np.float64), coords, order=1,
                                       mode="constant", cval=0.0)
        out[..., c] = np.clip(np.rint(vals), 0, 255).astype(src.dtype)
    return out[..., 0] if src.ndim == 2 else out


@dataclass(frozen=True)
class Reflection:
    cx: float
    cy: float
    rx: float
    ry: float


def draw_reflections(n: int, width: int, height: int, rng: np.random.Generator) -> list[Reflection]:
    out = []
    lo, hi = REFLECTION_RADIUS_RANGE
    for _ in range(n):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        rx, ry = rng.uniform(lo, hi, size=2)
        out.append(Reflection(float(cx), float(cy), float(rx), float(ry)))
    return out


def reflection_mask(refl: Sequence[Reflection], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for r in refl:
        x0, x1 = max(0, int(r.cx - r.rx) - 1), min(width, int(r.cx + r.rx) + 2)
        y0, y1 = max(0, int(r.cy - r.ry) - 1), min(height, int(r.cy + r.ry) + 2)
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1) + 0.5
        py = np.arange(y0, y1) + 0.5
        inside = ((px[None, :] - r.cx) / r.rx) ** 2 + ((py[:, None] - r.cy) / r.ry) ** 2 <= 1.0
        mask[y0:y1, x0:x1] |= inside
    return mask


def add_reflections(frame: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Paint ``n`` saturated ellipses (value 255 in every channel) onto a copy of ``frame``."""
    out = np.array(frame, copy=True)
    if n <= 0:
        return out
    h, w = out.shape[:2]
    out[reflection_mask(draw_reflections(n, w, h, rng), w, h)] = 255
    return out


# -- scenarios -------------------------------------------------------------


@dataclass
class ScenarioTruth:
    """Poses ``H_{0->t}`` and the ROI quads they produce.

    ``homographies`` may be empty when the truth was read back from CSV.
    """

    ids: tuple[int, ...]
    homographies: list[Homography]
    quads: list[list[Quad]]

    def __len__(self):
        return len(self.quads)

    def rows(self):
        """``(frame, id, x0, y0, ..., x3, y3)`` tuples, sorted by frame then id."""
        for t, quads in enumerate(self.quads):
            for i, q in sorted(zip(self.ids, quads), key=lambda p: p[0]):
                yield (t, i, *q.corners.ravel().tolist())


@dataclass
class Scenario:
    frames: list[np.ndarray]
    truth: ScenarioTruth
    initial_rois: list[Roi]
    bounds: MotionBounds = field(default_factory=MotionBounds)


def _streams(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rois, motion, reflections = ss.spawn(3)
    return (np.random.default_rng(rois), np.random.default_rng(motion),
            np.random.default_rng(reflections))


def place_rois(n: int, width: int, height: int, rng: np.random.Generator) -> list[Roi]:
    lo, hi = ROI_SIDE_RANGE
    rois = []
    attempts = 0
    while len(rois) < n:
        attempts += 1
        if attempts > PLACEMENT_ATTEMPTS:
            raise ValueError(
                f"could not place {n} ROIs with sides in [{lo}, {hi}] px fully inside a "
                f"{width}x{height} frame after {PLACEMENT_ATTEMPTS} attempts"
            )
        w, h = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        if w > width or h > height:
            continue
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        rois.append(Roi(len(rois) + 1, x, y, w, h))
    return rois


def generate_scenario(source: np.ndarray, bounds: MotionBounds | None = None, seed=0) -> Scenario:
    """Build a synthetic video, its ground truth and the initial ROIs from one still image."""
    bounds = bounds or MotionBounds()
    src = np.asarray(source)
    height, width = src.shape[:2]
    roi_rng, motion_rng, refl_rng = _streams(seed)
    rois = place_rois(bounds.n_rois, width, height, roi_rng)
    ids = tuple(r.id for r in rois)
    initial_quads = [r.as_quad() for r in rois]

    homographies = [Homography.identity()]
    quads = [initial_quads]
    frames = [add_reflections(src, bounds.n_reflections, refl_rng)]
    for pose in motion_walk(bounds, motion_rng, width, height)[1:]:
        H = pose.homography()
        homographies.append(H)
        quads.append([transform_quad(H, q) for q in initial_quads])
        frames.append(add_reflections(warp_frame(src, H), bounds.n_reflections, refl_rng))
    return Scenario(frames, ScenarioTruth(ids, homographies, quads), rois, bounds)


def textured_image(seed=0, width: int = 480, height: int = 360) -> np.ndarray:
    """Procedural tissue-like RGB texture, a stand-in for endoscopic stills."""
    rng = np.random.default_rng(seed)
    base = np.zeros((height, width))
    for sigma, amp in ((24.0, 1.0), (8.0, 0.6), (3.0, 0.35), (1.2, 0.2)):
        layer = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma, mode="wrap")
        base += amp * layer / layer.std()
    # thin vessel-like ridges
    ridges = ndimage.gaussian_filter(rng.standard_normal((height, width)), 6.0, mode="wrap")
    base -= 1.2 * np.exp(-((ridges / ridges.std()) ** 2) / 0.02)
    base = (base - base.min()) / (base.max() - base.min())
    tint = np.array([0.95, 0.55, 0.45]) + 0.05 * rng.standard_normal(3)
    img = 30 + 200 * base[..., None] * np.clip(tint, 0.2, 1.0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# -- scoring ---------------------------------------------------------------


@dataclass
class Evaluation:
    """Per-frame, per-ROI Jaccard indices and their summary.

    ``jaccard[t, i]`` is NaN where the ROI is lost; summaries count those
    entries as 0.
    """

    ids: tuple[int, ...]
    jaccard: np.ndarray
    fps: float = math.nan

    @property
    def lost(self) -> np.ndarray:
        return np.isnan(self.jaccard)

    def scores(self) -> np.ndarray:
        return np.nan_to_num(self.jaccard, nan=0.0).ravel()

    def summary(self) -> dict:
        s = self.scores()
        q1, q2, q3 = (float(v) for v in np.percentile(s, [25, 50, 75])) if s.size else (math.nan,) * 3
        return {
            "n_frames": int(self.jaccard.shape[0]),
            "n_rois": int(self.jaccard.shape[1]),
            "n_entries": int(s.size),
            "n_lost_entries": int(self.lost.sum()),
            "jaccard_mean": float(s.mean()) if s.size else math.nan,
            "jaccard_q25": q1,
            "jaccard_median": q2,
            "jaccard_q75": q3,
            "fraction_ge_085": float(np.mean(s >= JACCARD_GOOD)) if s.size else math.nan,
            "fps": self.fps,
        }

    def rows(self):
        for t in range(self.jaccard.shape[0]):
            for k, i in sorted(enumerate(self.ids), key=lambda p: p[1]):
                yield (t, i, float(self.jaccard[t, k]))


def evaluate(traj: Trajectory, truth: ScenarioTruth, fps: float | None = None) -> Evaluation:
    """Score a trajectory against ground-truth quads, frame by frame."""
    if len(traj) != len(truth):
        raise ValueError(f"frame count mismatch: trajectory {len(traj)}, truth {len(truth)}")
    if set(traj.ids) != set(truth.ids) or len(traj.ids) != len(truth.ids):
        raise ValueError(f"ROI id mismatch: trajectory {sorted(traj.ids)}, truth {sorted(truth.ids)}")
    col = {i: k for k, i in enumerate(traj.ids)}
    table = np.full((len(truth), len(truth.ids)), np.nan)
    for t in range(len(truth)):
        rois = traj.rois(t)
        for k, (i, q) in enumerate(zip(truth.ids, truth.quads[t])):
            table[t, k] = jaccard(q, rois[col[i]])
    return Evaluation(tuple(truth.ids), table, traj.fps() if fps is None else fps)
