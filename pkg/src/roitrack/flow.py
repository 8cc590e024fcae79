"""Dense optical flow between two frames.

The estimator works coarse-to-fine on a binomial pyramid. On every level a
grid of overlapping square patches is aligned with inverse-compositional
Gauss-Newton (translation model, mean-normalized), the patch displacements
are spread back to pixels by photometrically weighted averaging, and a
weighted-median filter smooths the result.

Flow convention: ``flow[y, x] = (u, v)`` means the content at ``(x, y)`` in
``prev`` is found at ``(x + u, y + v)`` in ``next``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .geometry import Roi

MIN_LEVEL_SIDE = 16



@dataclass(frozen=True)
class FlowConfig:
    """Tuning knobs of :func:`estimate_flow`.

    ``pyramid_levels=None`` uses as many levels as keep the coarsest side at
    16 px or more. ``smoothness_weight`` scales the radius of the
    weighted-median regularization (0 disables it).
    """

    pyramid_levels: Optional[int] = None
    downscale: int = 2
    patch_size: int = 8
    patch_stride: int = 4
    iterations_per_level: int = 8
    smoothness_weight: float = 1.0

    def __post_init__(self):
        if self.pyramid_levels is not None and self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.downscale != 2:
            raise ValueError("only downscale=2 is supported")
        if self.patch_size < 2:
            raise ValueError("patch_size must be >= 2")
        if not 1 <= self.patch_stride <= self.patch_size:
            raise ValueError("patch_stride must be in [1, patch_size]")
        if self.iterations_per_level < 0:
            raise ValueError("iterations_per_level must be >= 0")
        if not self.smoothness_weight >= 0:
            raise ValueError("smoothness_weight must be nonnegative")


def as_uint8(frame: np.ndarray) -> np.ndarray:
    """Bring an image to 8 bits; 16-bit data keeps its high byte."""
    a = np.asarray(frame)
    if a.dtype == np.uint8:
        return a
    if a.dtype == np.uint16:
        return (a >> 8).astype(np.uint8)
    if a.dtype == np.bool_:
        return a.astype(np.uint8) * 255
    if np.issubdtype(a.dtype, np.integer) or np.issubdtype(a.dtype, np.floating):
        return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)
    raise TypeError(f"unsupported image dtype {a.dtype}")


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Luma (BT.601 weights, rounded) of a 1- or 3-channel 8-bit frame."""
    f = as_uint8(frame)
    if f.ndim == 2:
        return f
    if f.ndim == 3 and f.shape[2] == 1:
        return f[:, :, 0]
    if f.ndim != 3 or f.shape[2] != 3:
        raise ValueError(f"unsupported frame shape {f.shape}; expected 1 or 3 channels")
    return _luma(f)


@njit(cache=True)
def _luma(f):
    h, w, _ = f.shape
    out = np.empty((h, w), np.uint8)
    for y in range(h):
        for x in range(w):
            out[y, x] = np.uint8(math.floor(0.299 * f[y, x, 0] + 0.587 * f[y, x, 1] + 0.114 * f[y, x, 2] + 0.5))
    return out


def auto_levels(height: int, width: int) -> int:
    levels = 1
    h, w = height, width
    while min(h // 2, w // 2) >= MIN_LEVEL_SIDE:
        h, w = h // 2, w // 2
        levels += 1
    return levels


def build_pyramid(frame: np.ndarray, cfg: FlowConfig | None = None) -> list[np.ndarray]:
    """Gaussian-style pyramid of a grayscale frame, finest level first.

    Levels are float32. The requested level count is reduced silently when
    the frame is too small for it.
    """
    cfg = cfg or FlowConfig()
    img = np.asarray(frame, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("build_pyramid expects a single-channel frame")
    max_levels = auto_levels(*img.shape)
    n = max_levels if cfg.pyramid_levels is None else min(cfg.pyramid_levels, max_levels)
    levels = [img]
    for _ in range(n - 1):
        levels.append(_downsample(levels[-1]))
    return levels


# -- numba kernels ---------------------------------------------------------


@njit(cache=True, fastmath=True, inline="always")
def _bilinear(img, x, y):
    h, w = img.shape
    if x < 0.0:
        x = 0.0
    elif x > w - 1:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1:
        y = h - 1.0
    x0 = int(x)
    y0 = int(y)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    ax = x - x0
    ay = y - y0
    top = img[y0, x0] * (1.0 - ax) + img[y0, x1] * ax
    bot = img[y1, x0] * (1.0 - ax) + img[y1, x1] * ax
    return top * (1.0 - ay) + bot * ay


@njit(cache=True, fastmath=True, error_model="numpy")
def _patch_starts(n, ps, stride):
    if n <= ps:
        out = np.zeros(1, np.int64)
        return out
    count = (n - ps + stride - 1) // stride + 1
    out = np.empty(count, np.int64)
    for k in range(count):
        out[k] = min(k * stride, n - ps)
    return out


@njit(cache=True, fastmath=True, error_model="numpy")
def _sample_shifted(img, x0, y0, psx, psy, u, v, out):
    """Bilinear samples of the patch at (x0, y0) shifted by (u, v), row-major into ``out``."""
    h, w = img.shape
    fx = x0 + u
    fy = y0 + v
    ix = int(math.floor(fx))
    iy = int(math.floor(fy))
    if ix >= 0 and iy >= 0 and ix + psx < w and iy + psy < h:
        ax = fx - ix
        ay = fy - iy
        w00 = (1.0 - ax) * (1.0 - ay)
        w01 = ax * (1.0 - ay)
        w10 = (1.0 - ax) * ay
        w11 = ax * ay
        k = 0
        for yy in range(iy, iy + psy):
            for xx in range(ix, ix + psx):
                out[k] = (
                    w00 * img[yy, xx]
                    + w01 * img[yy, xx + 1]
                    + w10 * img[yy + 1, xx]
                    + w11 * img[yy + 1, xx + 1]
                )
                k += 1
    else:
        k = 0
        for yy in range(y0, y0 + psy):
            for xx in range(x0, x0 + psx):
                out[k] = _bilinear(img, xx + u, yy + v)
                k += 1


@njit(cache=True, fastmath=True, error_model="numpy")
def _patch_search(i0, i1, gx, gy, flow, ps, stride, iters):
    h, w = i0.shape
    psy = min(ps, h)
    psx = min(ps, w)
    ys = _patch_starts(h, ps, stride)
    xs = _patch_starts(w, ps, stride)
    out = np.empty((ys.size, xs.size, 2), np.float32)
    conf = np.empty((ys.size, xs.size), np.float64)
    n = psx * psy
    cgx = np.empty(n, np.float64)
    cgy = np.empty(n, np.float64)
    tpl = np.empty(n, np.float64)
    warped = np.empty(n, np.float64)
    hx = 0.5 * (psx - 1)
    hy = 0.5 * (psy - 1)
    for a in range(ys.size):
        y0 = ys[a]
        for b in range(xs.size):
            x0 = xs[b]
            u0 = _bilinear(flow[:, :, 0], x0 + hx, y0 + hy)
            v0 = _bilinear(flow[:, :, 1], x0 + hx, y0 + hy)
            mx = 0.0
            my = 0.0
            mt = 0.0
            k = 0
            for yy in range(y0, y0 + psy):
                for xx in range(x0, x0 + psx):
                    cgx[k] = gx[yy, xx]
                    cgy[k] = gy[yy, xx]
                    tpl[k] = i0[yy, xx]
                    mx += cgx[k]
                    my += cgy[k]
                    mt += tpl[k]
                    k += 1
            mx /= n
            my /= n
            mt /= n
            hxx = 0.0
            hxy = 0.0
            hyy = 0.0
            for k in range(n):
                cgx[k] -= mx
                cgy[k] -= my
                tpl[k] -= mt
                hxx += cgx[k] * cgx[k]
                hxy += cgx[k] * cgy[k]
                hyy += cgy[k] * cgy[k]
            det = hxx * hyy - hxy * hxy
            u = u0
            v = v0
            if det > 1e-6 * (hxx + hyy) * (hxx + hyy) and det > 1e-9:
                for _ in range(iters):
                    _sample_shifted(i1, x0, y0, psx, psy, u, v, warped)
                    bx = 0.0
                    by = 0.0
                    for k in range(n):
                        r = warped[k] - tpl[k]
                        bx += cgx[k] * r
                        by += cgy[k] * r
                    du = (hyy * bx - hxy * by) / det
                    dv = (hxx * by - hxy * bx) / det
                    u -= du
                    v -= dv
                    if du * du + dv * dv < 1e-4:
                        break
                # divergence guard: stay with the initial guess
                if (u - u0) * (u - u0) + (v - v0) * (v - v0) > ps * ps:
                    u = u0
                    v = v0
            # mean-normalized residual at the final position
            _sample_shifted(i1, x0, y0, psx, psy, u, v, warped)
            mi = 0.0
            for k in range(n):
                mi += warped[k]
            mi /= n
            err = 0.0
            for k in range(n):
                err += abs(warped[k] - mi - tpl[k])
            out[a, b, 0] = u
            out[a, b, 1] = v
            conf[a, b] = 1.0 / max(1.0, err / n)
    return out, conf, ys, xs


@njit(cache=True, fastmath=True, error_model="numpy")
def _densify(i0, i1, pflow, ys, xs, ps, stride):
    h, w = i0.shape
    psy = min(ps, h)
    psx = min(ps, w)
    hx = 0.5 * (psx - 1)
    hy = 0.5 * (psy - 1)
    reach = float(stride)
    acc = np.zeros((h, w, 2), np.float64)
    wsum = np.zeros((h, w), np.float64)
    warped = np.empty(psx * psy, np.float64)
    for a in range(ys.size):
        y0 = ys[a]
        cy = y0 + hy
        for b in range(xs.size):
            x0 = xs[b]
            cx = x0 + hx
            u = pflow[a, b, 0]
            v = pflow[a, b, 1]
            _sample_shifted(i1, x0, y0, psx, psy, u, v, warped)
            k = 0
            for yy in range(y0, y0 + psy):
                ty = max(1.0 - abs(yy - cy) / reach, 1e-3)
                for xx in range(x0, x0 + psx):
                    tx = max(1.0 - abs(xx - cx) / reach, 1e-3)
                    diff = abs(warped[k] - i0[yy, xx])
                    k += 1
                    wt = tx * ty / max(1.0, diff)
                    acc[yy, xx, 0] += wt * u
                    acc[yy, xx, 1] += wt * v
                    wsum[yy, xx] += wt
    out = np.empty((h, w, 2), np.float32)
    for yy in range(h):
        for xx in range(w):
            s = wsum[yy, xx]
            out[yy, xx, 0] = acc[yy, xx, 0] / s
            out[yy, xx, 1] = acc[yy, xx, 1] / s
    return out


@njit(cache=True, fastmath=True, error_model="numpy")
def _weighted_median_filter(flow, weight, radius):
    h, w = weight.shape
    out = np.empty_like(flow)
    size = (2 * radius + 1) * (2 * radius + 1)
    vals = np.empty(size, np.float64)
    wts = np.empty(size, np.float64)
    for c in range(2):
        for yy in range(h):
            for xx in range(w):
                n = 0
                total = 0.0
                for dy in range(-radius, radius + 1):
                    y = yy + dy
                    if y < 0 or y >= h:
                        continue
                    for dx in range(-radius, radius + 1):
                        x = xx + dx
                        if x < 0 or x >= w:
                            continue
                        val = flow[y, x, c]
                        wt = weight[y, x]
                        # insertion sort by value
                        j = n
                        while j > 0 and vals[j - 1] > val:
                            vals[j] = vals[j - 1]
                            wts[j] = wts[j - 1]
                            j -= 1
                        vals[j] = val
                        wts[j] = wt
                        n += 1
                        total += wt
                half = 0.5 * total
                run = 0.0
                med = vals[n - 1]
                for j in range(n):
                    run += wts[j]
                    if run >= half:
                        med = vals[j]
                        break
                out[yy, xx, c] = med
    return out


@njit(cache=True, fastmath=True, error_model="numpy")
def _axis_taps(n_out, n_src, step):
    """Clamped bilinear taps ``(i0, i1, frac)`` for output positions ``k * step``."""
    i0 = np.empty(n_out, np.int64)
    i1 = np.empty(n_out, np.int64)
    frac = np.empty(n_out, np.float32)
    for k in range(n_out):
        p = min(max(k * step, 0.0), n_src - 1.0)
        i0[k] = int(p)
        i1[k] = min(i0[k] + 1, n_src - 1)
        frac[k] = p - i0[k]
    return i0, i1, frac


@njit(cache=True, fastmath=True, error_model="numpy")
def _resize_flow(u, v, h, w, step, scale):
    y0, y1, ay = _axis_taps(h, u.shape[0], step)
    x0, x1, ax = _axis_taps(w, u.shape[1], step)
    out = np.empty((h, w, 2), np.float32)
    for yy in range(h):
        a, b, fy = y0[yy], y1[yy], ay[yy]
        for xx in range(w):
            c, d, fx = x0[xx], x1[xx], ax[xx]
            top = u[a, c] * (1 - fx) + u[a, d] * fx
            bot = u[b, c] * (1 - fx) + u[b, d] * fx
            out[yy, xx, 0] = (top * (1 - fy) + bot * fy) * scale
            top = v[a, c] * (1 - fx) + v[a, d] * fx
            bot = v[b, c] * (1 - fx) + v[b, d] * fx
            out[yy, xx, 1] = (top * (1 - fy) + bot * fy) * scale
    return out


@njit(cache=True, error_model="numpy")
def _downsample(img):
    """3x3 binomial blur (edge-replicated) sampled at every second pixel."""
    h, w = img.shape
    ho, wo = h // 2, w // 2
    out = np.empty((ho, wo), np.float32)
    for i in range(ho):
        y = 2 * i
        ya, yb = max(y - 1, 0), min(y + 1, h - 1)
        for j in range(wo):
            x = 2 * j
            xa, xb = max(x - 1, 0), min(x + 1, w - 1)
            top = 0.25 * img[ya, xa] + 0.5 * img[ya, x] + 0.25 * img[ya, xb]
            mid = 0.25 * img[y, xa] + 0.5 * img[y, x] + 0.25 * img[y, xb]
            bot = 0.25 * img[yb, xa] + 0.5 * img[yb, x] + 0.25 * img[yb, xb]
            out[i, j] = 0.25 * top + 0.5 * mid + 0.25 * bot
    return out


@njit(cache=True, error_model="numpy")
def _gradient(img):
    """Central differences inside, one-sided at the border (as ``np.gradient``)."""
    h, w = img.shape
    gx = np.empty((h, w), np.float32)
    gy = np.empty((h, w), np.float32)
    for y in range(h):
        for x in range(w):
            if x == 0:
                gx[y, x] = img[y, 1] - img[y, 0]
            elif x == w - 1:
                gx[y, x] = img[y, x] - img[y, x - 1]
            else:
                gx[y, x] = 0.5 * (img[y, x + 1] - img[y, x - 1])
            if y == 0:
                gy[y, x] = img[1, x] - img[0, x]
            elif y == h - 1:
                gy[y, x] = img[y, x] - img[y - 1, x]
            else:
                gy[y, x] = 0.5 * (img[y + 1, x] - img[y - 1, x])
    return gx, gy


def resize_flow(flow: np.ndarray, height: int, width: int, factor: float) -> np.ndarray:
    """Resample a flow field between pyramid grids.

    ``factor`` is the ratio of the target resolution to the source one
    (2 for one level finer). Pixel ``k`` on the target grid sits at
    ``k / factor`` on the source grid, matching the ``[::2]`` decimation of
    :func:`build_pyramid`. Vectors are multiplied by ``factor``.
    """
    f = np.asarray(flow, dtype=np.float32)
    u = np.ascontiguousarray(f[..., 0])
    v = np.ascontiguousarray(f[..., 1])
    return _resize_flow(u, v, height, width, 1.0 / factor, np.float32(factor))


# -- public API ------------------------------------------------------------


def flow_pyramid(frame: np.ndarray, cfg: FlowConfig | None = None) -> list[np.ndarray]:
    """Grayscale pyramid of a frame as used by :func:`estimate_flow_pyramids`."""
    return build_pyramid(to_grayscale(frame), cfg)


def estimate_flow(
    prev: np.ndarray,
    next: np.ndarray,
    cfg: FlowConfig | None = None,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Estimate the dense flow from ``prev`` to ``next``.

    Parameters
    ----------
    prev, next : ndarray
        Frames of identical size, grayscale ``(H, W)`` or color ``(H, W, 3)``.
    cfg : FlowConfig, optional
    init : ndarray, optional
        ``(H, W, 2)`` initial guess, used to warm-start the coarsest level.

    Returns
    -------
    ndarray
        ``(H, W, 2)`` float32 field; ``[..., 0]`` is the x displacement.
    """
    cfg = cfg or FlowConfig()
    p = np.asarray(prev)
    q = np.asarray(next)
    if p.shape[:2] != q.shape[:2]:
        raise ValueError(f"frame size mismatch: {p.shape[:2]} vs {q.shape[:2]}")
    return estimate_flow_pyramids(flow_pyramid(p, cfg), flow_pyramid(q, cfg), cfg, init)


def estimate_flow_pyramids(pyr0, pyr1, cfg: FlowConfig | None = None, init=None) -> np.ndarray:
    """:func:`estimate_flow` on pyramids from :func:`flow_pyramid`.

    Lets a caller that walks through a sequence build each frame's pyramid once.
    """
    cfg = cfg or FlowConfig()
    if pyr0[0].shape != pyr1[0].shape or len(pyr0) != len(pyr1):
        raise ValueError(f"frame size mismatch: {pyr0[0].shape} vs {pyr1[0].shape}")
    h, w = pyr0[0].shape
    top = pyr0[-1].shape
    if init is not None:
        init = np.asarray(init, dtype=np.float32)
        if init.shape != (h, w, 2):
            raise ValueError(f"init flow must have shape {(h, w, 2)}, got {init.shape}")
        flow = resize_flow(init, *top, 0.5 ** (len(pyr0) - 1))
    else:
        flow = np.zeros(top + (2,), np.float32)

    radius = int(round(cfg.smoothness_weight))
    for lvl in range(len(pyr0) - 1, -1, -1):
        i0 = pyr0[lvl]
        i1 = pyr1[lvl]
        if flow.shape[:2] != i0.shape:
            flow = resize_flow(flow, *i0.shape, 2.0)
        gx, gy = _gradient(i0)
        pflow, conf, ys, xs = _patch_search(
            i0, i1, gx, gy, flow, cfg.patch_size, cfg.patch_stride, cfg.iterations_per_level
        )
        if radius > 0:
            pflow = _weighted_median_filter(pflow, conf, radius)
        flow = _densify(i0, i1, pflow, ys, xs, cfg.patch_size, cfg.patch_stride)
    return flow


_warm = False


def warmup() -> None:
    """Load (or compile) the numba kernels so the first real frame pair is not billed for it."""
    global _warm
    if not _warm:
        rng = np.random.default_rng(0)
        a = rng.integers(0, 256, (32, 32), dtype=np.uint8)
        estimate_flow(a, np.roll(a, 1, axis=1))
        _warm = True


def sample_flow(flow: np.ndarray, r: Roi, frame_w: int | None = None, frame_h: int | None = None):
    """Flow samples on the closed integer window of an ROI, clipped to the frame.

    Returns ``(u, v, coords)`` where ``coords`` is an ``(N, 2)`` array of the
    ``(x, y)`` pixel positions the samples were taken at.
    """
    fh, fw = flow.shape[:2]
    frame_w = fw if frame_w is None else frame_w
    frame_h = fh if frame_h is None else frame_h
    xlo = max(math.ceil(r.x), 0)
    xhi = min(math.floor(r.x + r.w), frame_w - 1)
    ylo = max(math.ceil(r.y), 0)
    yhi = min(math.floor(r.y + r.h), frame_h - 1)
    if xhi < xlo or yhi < ylo:
        empty = np.empty(0)
        return empty, empty, np.empty((0, 2))
    window = flow[ylo : yhi + 1, xlo : xhi + 1]
    yy, xx = np.mgrid[ylo : yhi + 1, xlo : xhi + 1]
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(float)
    return (
        window[..., 0].astype(float).ravel(),
        window[..., 1].astype(float).ravel(),
        coords,
    )
