"""Frame sequences, CSV files and overlays.

Frame sources are either a directory of 8-bit PNG/PGM/PPM images (sorted by
file name) or a raw stream: a binary file of consecutive frames, each stored
channel-planar as uint8, described by a JSON sidecar ``<file>.json`` with
``width``, ``height``, ``channels`` and ``frames``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .flow import as_uint8
from .geometry import Quad, Roi, rect_pixel_range
from .synthbench import Evaluation, ScenarioTruth
from .tracker import Trajectory

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")
PREFETCH_DEPTH = 4


def _usable_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1

TRACKS_HEADER = ["frame", "id", "x", "y", "w", "h"]
TRUTH_HEADER = ["frame", "id", "x0", "y0", "x1", "y1", "x2", "y2", "x3", "y3"]
METRICS_HEADER = ["frame", "id", "jaccard"]
ROIS_HEADER = ["id", "x", "y", "w", "h"]


class DataError(ValueError):
    """Bad or inconsistent input data."""


# -- frames ----------------------------------------------------------------


def _decode(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode in ("RGBA", "P", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.dtype != np.uint8:
        arr = as_uint8(arr.astype(np.uint16) if arr.dtype.kind in "iu" else arr)
    return arr


def _probe(path: Path) -> tuple[int, int, int]:
    try:
        with Image.open(path) as im:
            w, h = im.size
            channels = 1 if im.mode in ("L", "I", "I;16", "I;16B", "I;16L", "1") else 3
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return h, w, channels


class FrameSource:
    """Ordered, lazily decoded frames of identical size.

    Indexing decodes one frame; iteration decodes ahead on a worker thread,
    at most ``PREFETCH_DEPTH`` frames. With a single usable CPU there is
    nothing to overlap with, so iteration decodes inline instead.
    """

    def __init__(self, paths: Sequence[Path] | None = None, raw: Path | None = None,
                 shape: tuple[int, ...] = (), count: int = 0):
        self.paths = list(paths or [])
        self.raw = raw
        self.shape = shape
        self._count = count if raw is not None else len(self.paths)
        self._mmap = None

    @property
    def height(self) -> int:
        return self.shape[0]

    @property
    def width(self) -> int:
        return self.shape[1]

    @property
    def channels(self) -> int:
        return 1 if len(self.shape) == 2 else self.shape[2]

    def __len__(self):
        return self._count

    def __getitem__(self, i: int) -> np.ndarray:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        i %= len(self)
        if self.raw is None:
            arr = _decode(self.paths[i])
            if arr.shape != self.shape:
                raise DataError(f"{self.paths[i]}: shape {arr.shape} differs from {self.shape}")
            return arr
        if self._mmap is None:
            h, w, c = self.height, self.width, self.channels
            self._mmap = np.memmap(self.raw, dtype=np.uint8, mode="r", shape=(self._count, c, h, w))
        planes = np.array(self._mmap[i])
        return planes[0] if self.channels == 1 else np.ascontiguousarray(planes.transpose(1, 2, 0))

    def __iter__(self) -> Iterator[np.ndarray]:
        if len(self) <= 1 or _usable_cpus() < 2:
            for i in range(len(self)):
                yield self[i]
            return
        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = deque()
            nxt = 0
            while nxt < len(self) and len(pending) < PREFETCH_DEPTH:
                pending.append(pool.submit(self.__getitem__, nxt))
                nxt += 1
            while pending:
                frame = pending.popleft().result()
                if nxt < len(self):
                    pending.append(pool.submit(self.__getitem__, nxt))
                    nxt += 1
                yield frame


def _read_raw(path: Path) -> FrameSource:
    sidecar = Path(str(path) + ".json")
    try:
        meta = json.loads(sidecar.read_text())
        w, h, c, n = (int(meta[k]) for k in ("width", "height", "channels", "frames"))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"raw stream {path}: bad or missing header {sidecar}: {exc}") from exc
    if c not in (1, 3) or min(w, h, n) < 1:
        raise DataError(f"raw stream {path}: invalid header {meta}")
    expected = w * h * c * n
    size = path.stat().st_size
    if size != expected:
        raise DataError(f"raw stream {path}: {size} bytes, header implies {expected}")
    shape = (h, w) if c == 1 else (h, w, c)
    return FrameSource(raw=path, shape=shape, count=n)


def read_frames(path, expect: tuple[int, int] | None = None) -> FrameSource:
    """Open a frame directory or raw stream.

    ``expect`` optionally fixes ``(height, width)``.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file or directory: {p}")
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES and f.is_file())
        if not files:
            raise DataError(f"no PNG/PGM/PPM images in {p}")
        first = _probe(files[0])
        for f in files[1:]:
            dims = _probe(f)
            if dims != first:
                raise DataError(
                    f"frame size mismatch: {files[0].name} is {first[1]}x{first[0]} "
                    f"({first[2]} ch), {f.name} is {dims[1]}x{dims[0]} ({dims[2]} ch)"
                )
        h, w, c = first
        src = FrameSource(files, shape=(h, w) if c == 1 else (h, w, 3))
    else:
        src = _read_raw(p)
    if expect is not None and tuple(expect) != (src.height, src.width):
        raise DataError(f"{p}: frames are {src.width}x{src.height}, expected {expect[1]}x{expect[0]}")
    return src


def write_frames(frames: Iterable[np.ndarray], directory, prefix: str = "frame_",
                 suffix: str = ".png") -> list[Path]:
    """Write frames as ``<prefix>000000<suffix>``, ``<prefix>000001<suffix>``, ..."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for t, frame in enumerate(frames):
        f = d / f"{prefix}{t:06d}{suffix}"
        Image.fromarray(as_uint8(frame)).save(f)
        out.append(f)
    return out


def write_raw(frames: Iterable[np.ndarray], path) -> Path:
    """Write a channel-planar uint8 stream plus its JSON header sidecar."""
    p = Path(path)
    n = 0
    shape = None
    with open(p, "wb") as fh:
        for frame in frames:
            a = as_uint8(frame)
            if shape is None:
                shape = a.shape
            elif a.shape != shape:
                raise DataError(f"frame {n}: shape {a.shape} differs from {shape}")
            planes = a[None] if a.ndim == 2 else a.transpose(2, 0, 1)
            fh.write(np.ascontiguousarray(planes).tobytes())
            n += 1
    if shape is None:
        raise DataError("no frames to write")
    meta = {"width": shape[1], "height": shape[0], "channels": 1 if len(shape) == 2 else shape[2],
            "frames": n, "dtype": "uint8", "layout": "planar"}
    Path(str(p) + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return p


def read_image(path) -> np.ndarray:
    return _decode(Path(path))


# -- CSV -------------------------------------------------------------------


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(v: float, digits: int = 3) -> str:
    return "nan" if math.isnan(v) else f"{v:.{digits}f}"


def _read_rows(path, header: list[str]) -> list[list[str]]:
    p = Path(path)
    try:
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {p}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != header:
        raise DataError(f"{p}: expected header {','.join(header)}")
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{p}:{k}: expected {len(header)} fields, got {len(r)}")
    return body


def read_rois(path) -> list[Roi]:
    """Read an ROI config (``id,x,y,w,h`` with integer values)."""
    rois = []
    seen = set()
    for k, r in enumerate(_read_rows(path, ROIS_HEADER), start=2):
        try:
            rid, x, y, w, h = (int(v) for v in r)
        except ValueError:
            raise DataError(f"{path}:{k}: ROI fields must be integers") from None
        if rid in seen:
            raise DataError(f"{path}:{k}: duplicate ROI id {rid}")
        if w <= 0 or h <= 0:
            raise DataError(f"{path}:{k}: ROI {rid} has non-positive size")
        seen.add(rid)
        rois.append(Roi(rid, x, y, w, h))
    if not rois:
        raise DataError(f"{path}: no ROIs")
    return rois


def write_rois(rois: Sequence[Roi], path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(ROIS_HEADER)
        for r in rois:
            w.writerow([r.id, int(round(r.x)), int(round(r.y)), int(round(r.w)), int(round(r.h))])


def write_tracks(traj: Trajectory, path) -> None:
    order = sorted(range(traj.n_rois), key=lambda k: traj.ids[k])
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(TRACKS_HEADER)
        for t in range(len(traj)):
            for k in order:
                w.writerow([t, traj.ids[k], *(_fmt(float(v)) for v in traj.boxes[t, k])])


def read_tracks(path) -> Trajectory:
    rows = _read_rows(path, TRACKS_HEADER)
    try:
        parsed = [(int(r[0]), int(r[1]), *(float(v) for v in r[2:])) for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not parsed:
        raise DataError(f"{path}: no rows")
    ids = tuple(sorted({p[1] for p in parsed}))
    n_frames = max(p[0] for p in parsed) + 1
    boxes = np.full((n_frames, len(ids), 4), np.nan)
    seen = np.zeros((n_frames, len(ids)), dtype=bool)
    col = {i: k for k, i in enumerate(ids)}
    for t, i, *box in parsed:
        if t < 0 or seen[t, col[i]]:
            raise DataError(f"{path}: bad or duplicate row for frame {t}, id {i}")
        seen[t, col[i]] = True
        boxes[t, col[i]] = box
    if not seen.all():
        t, k = np.argwhere(~seen)[0]
        raise DataError(f"{path}: missing row for frame {t}, id {ids[k]}")
    return Trajectory(ids, boxes)


def timing_path(tracks_path) -> Path:
    p = Path(tracks_path)
    return p.with_name(p.stem + ".timing.json")


def write_timing(traj: Trajectory, path) -> None:
    meta = {
        "frames": len(traj),
        "steps": len(traj.step_seconds),
        "tracking_seconds": traj.tracking_seconds(),
        "fps": traj.fps(),
        "step_seconds": traj.step_seconds,
    }
    Path(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_timing(path) -> dict:
    return json.loads(Path(path).read_text())


def write_truth(truth: ScenarioTruth, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(TRUTH_HEADER)
        for row in truth.rows():
            w.writerow([row[0], row[1], *(repr(float(v)) for v in row[2:])])


def read_truth(path) -> ScenarioTruth:
    rows = _read_rows(path, TRUTH_HEADER)
    by_frame: dict[int, dict[int, Quad]] = {}
    for k, r in enumerate(rows, start=2):
        try:
            t, i = int(r[0]), int(r[1])
            quad = Quad(np.array([float(v) for v in r[2:]]).reshape(4, 2))
        except ValueError as exc:
            raise DataError(f"{path}:{k}: {exc}") from None
        by_frame.setdefault(t, {})[i] = quad
    if not by_frame:
        raise DataError(f"{path}: no rows")
    n = max(by_frame) + 1
    ids = tuple(sorted(by_frame[0]))
    quads = []
    for t in range(n):
        frame = by_frame.get(t, {})
        if tuple(sorted(frame)) != ids:
            raise DataError(f"{path}: frame {t} does not list ids {list(ids)}")
        quads.append([frame[i] for i in ids])
    return ScenarioTruth(ids, [], quads)


def write_metrics(ev: Evaluation, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(METRICS_HEADER)
        for t, i, j in ev.rows():
            w.writerow([t, i, _fmt(j, 6)])


def summary_path(metrics_path) -> Path:
    p = Path(metrics_path)
    return p.with_name(p.stem + ".summary.json")


def write_summary(ev: Evaluation, path) -> dict:
    s = ev.summary()
    Path(path).write_text(json.dumps(s, indent=2, allow_nan=True) + "\n")
    return s


# -- intensity curves ------------------------------------------------------


@dataclass(frozen=True)
class IntensityRecord:
    frame: int
    id: int
    mean: tuple[float, ...]


def roi_pixel_window(r: Roi, width: int, height: int):
    """Row and column slices of the ROI's pixel set clipped to the frame, or None."""
    x0, x1 = rect_pixel_range(r.x, r.w)
    y0, y1 = rect_pixel_range(r.y, r.h)
    x0, x1 = max(x0, 0), min(x1, width)
    y0, y1 = max(y0, 0), min(y1, height)
    if x0 >= x1 or y0 >= y1:
        return None
    return slice(y0, y1), slice(x0, x1)


def extract_intensity(data_frames: Sequence[np.ndarray], traj: Trajectory,
                      frame_shape: tuple[int, int] | None = None) -> list[IntensityRecord]:
    """Per-frame, per-ROI mean intensity of ``data_frames`` under the tracked ROIs.

    ``frame_shape`` is the ``(height, width)`` of the tracked sequence; when
    given, the data frames must match it.
    """
    if len(data_frames) != len(traj):
        raise DataError(f"frame count mismatch: data has {len(data_frames)}, tracks have {len(traj)}")
    order = sorted(range(traj.n_rois), key=lambda k: traj.ids[k])
    out = []
    for t, frame in enumerate(data_frames):
        f = np.asarray(frame)
        h, w = f.shape[:2]
        if frame_shape is not None and (h, w) != tuple(frame_shape):
            raise DataError(f"frame {t}: data frame is {w}x{h}, tracked frames are "
                            f"{frame_shape[1]}x{frame_shape[0]}")
        channels = 1 if f.ndim == 2 else f.shape[2]
        for k in order:
            r = Roi(traj.ids[k], *map(float, traj.boxes[t, k]))
            win = None if r.lost else roi_pixel_window(r, w, h)
            if win is None:
                out.append(IntensityRecord(t, r.id, (math.nan,) * channels))
                continue
            block = f[win].astype(np.float64).reshape(-1, channels)
            out.append(IntensityRecord(t, r.id, tuple(float(m) for m in block.mean(axis=0))))
    return out


def write_intensity(records: Sequence[IntensityRecord], path) -> None:
    channels = len(records[0].mean) if records else 1
    header = ["frame", "id", "mean"] if channels == 1 else ["frame", "id"] + [
        f"mean_c{c}" for c in range(channels)]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for rec in records:
            w.writerow([rec.frame, rec.id, *(_fmt(m, 6) for m in rec.mean)])


# -- overlay ---------------------------------------------------------------

PALETTE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
]
OUTLINE_PX = 2

# 3x5 bitmap digits, rows top to bottom
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    "-": ("000", "000", "111", "000", "000"),
}


def roi_color(roi_id: int) -> tuple[int, int, int]:
    return PALETTE[roi_id % len(PALETTE)]


def outline_mask(r: Roi, width: int, height: int, thickness: int = OUTLINE_PX) -> np.ndarray:
    """Pixels of the ROI's pixel set within ``thickness`` of its border, clipped to the frame."""
    mask = np.zeros((height, width), dtype=bool)
    x0, x1 = rect_pixel_range(r.x, r.w)
    y0, y1 = rect_pixel_range(r.y, r.h)
    if x0 >= x1 or y0 >= y1:
        return mask
    full = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    full[:thickness, :] = True
    full[-thickness:, :] = True
    full[:, :thickness] = True
    full[:, -thickness:] = True
    cy0, cy1 = max(y0, 0), min(y1, height)
    cx0, cx1 = max(x0, 0), min(x1, width)
    if cy0 < cy1 and cx0 < cx1:
        mask[cy0:cy1, cx0:cx1] = full[cy0 - y0 : cy1 - y0, cx0 - x0 : cx1 - x0]
    return mask


def label_origin(r: Roi, height: int) -> tuple[int, int]:
    """Left-top pixel of the id label: above the box, or below it near the top edge."""
    x0, _ = rect_pixel_range(r.x, r.w)
    y0, y1 = rect_pixel_range(r.y, r.h)
    return x0, (y0 - 7 if y0 - 7 >= 0 else y1 + 2)


def label_mask(text: str, x: int, y: int, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for n, ch in enumerate(text):
        glyph = _DIGITS.get(ch)
        if glyph is None:
            continue
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                px, py = x + 4 * n + gx, y + gy
                if bit == "1" and 0 <= px < width and 0 <= py < height:
                    mask[py, px] = True
    return mask


def draw_rois(frame: np.ndarray, rois: Sequence[Roi], labels: bool = True) -> np.ndarray:
    """RGB copy of ``frame`` with each live ROI outlined in its palette color."""
    f = as_uint8(frame)
    out = np.repeat(f[..., None], 3, axis=2) if f.ndim == 2 else f[..., :3].copy()
    h, w = out.shape[:2]
    for r in rois:
        if r.lost:
            continue
        color = roi_color(r.id)
        out[outline_mask(r, w, h)] = color
        if labels:
            lx, ly = label_origin(r, h)
            out[label_mask(str(r.id), lx, ly, w, h)] = color
    return out


def render_overlay(frames: Iterable[np.ndarray], traj: Trajectory, out_dir,
                   labels: bool = True) -> list[Path]:
    """Write ``overlay_000000.png``, ... with the tracked ROIs drawn on each frame."""
    d = Path(out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create overlay directory {d}: {exc}") from exc
    paths = []
    for t, frame in enumerate(frames):
        if t >= len(traj):
            break
        img = draw_rois(frame, traj.rois(t), labels)
        p = d / f"overlay_{t:06d}.png"
        Image.fromarray(img).save(p)
        paths.append(p)
    return paths


