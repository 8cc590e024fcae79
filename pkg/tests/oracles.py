"""Brute-force reference computations used by the tests.

Nothing here imports the package's own rasterization or fitting code.
"""
import math

import numpy as np


def point_in_polygon(px, py, corners):
    """Even-odd rule via edge orientation tests."""
    inside = False
    n = len(corners)
    for k in range(n):
        ax, ay = corners[k]
        bx, by = corners[(k + 1) % n]
        if (ay <= py < by) or (by <= py < ay):
            # sign of the cross product tells which side of the upward edge the point is on
            cross = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
            if (cross > 0) == (by > ay):
                inside = not inside
    return inside


def point_in_rect(px, py, x, y, w, h):
    return x <= px < x + w and y <= py < y + h


def jaccard_bruteforce(corners, rect):
    """Pixel-center enumeration of |A & B| / |A | B| over the joint bounding box."""
    x, y, w, h = rect
    cs = np.asarray(corners, dtype=float)
    xmin = int(math.floor(min(cs[:, 0].min(), x))) - 1
    ymin = int(math.floor(min(cs[:, 1].min(), y))) - 1
    xmax = int(math.ceil(max(cs[:, 0].max(), x + w))) + 1
    ymax = int(math.ceil(max(cs[:, 1].max(), y + h))) + 1
    inter = union = 0
    for j in range(ymin, ymax):
        for i in range(xmin, xmax):
            a = point_in_polygon(i + 0.5, j + 0.5, cs)
            b = point_in_rect(i + 0.5, j + 0.5, x, y, w, h)
            inter += a and b
            union += a or b
    return inter, union


def normal_equations_fit(values, coord):
    """Solve [n, sum c; sum c, sum c^2] [p, s]^T = [sum v, sum c v]^T by Cramer's rule."""
    n = float(len(values))
    sc = float(sum(coord))
    scc = float(sum(c * c for c in coord))
    sv = float(sum(values))
    scv = float(sum(c * v for c, v in zip(coord, values)))
    det = n * scc - sc * sc
    p = (sv * scc - sc * scv) / det
    s = (n * scv - sc * sv) / det
    return p, s


def ellipse_pixels(cx, cy, rx, ry, width, height):
    """Set of (col, row) pixels whose centers lie in the closed axis-aligned ellipse."""
    out = set()
    for j in range(height):
        for i in range(width):
            dx = (i + 0.5 - cx) / rx
            dy = (j + 0.5 - cy) / ry
            if dx * dx + dy * dy <= 1.0:
                out.add((i, j))
    return out


def rotation_flow(width, height, degrees):
    """Displacement of each pixel under rotation about the frame center."""
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    dx, dy = xx - cx, yy - cy
    return np.stack([c * dx - s * dy + cx - xx, s * dx + c * dy + cy - yy], axis=-1)


def rotated_crop(texture, size, degrees, bilinear):
    """Crop of ``texture`` centered in it, with content rotated by ``degrees`` about the crop center.

    ``bilinear(img, x, y)`` samples ``texture``; passing the sampler in keeps
    this independent of how the caller interpolates.
    """
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    off = (texture.shape[0] - size) / 2.0
    center = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    dx, dy = xx - center, yy - center
    sx = c * dx + s * dy + center + off
    sy = -s * dx + c * dy + center + off
    return bilinear(texture, sx, sy)


def numpy_bilinear(img, x, y):
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    ax = x - x0
    ay = y - y0
    i = img.astype(float)
    top = i[y0, x0] * (1 - ax) + i[y0, x0 + 1] * ax
    bot = i[y0 + 1, x0] * (1 - ax) + i[y0 + 1, x0 + 1] * ax
    return top * (1 - ay) + bot * ay


def psnr(a, b, peak=255.0):
    mse = np.mean((a.astype(float) - b.astype(float)) ** 2)
    return float("inf") if mse == 0 else 10 * math.log10(peak * peak / mse)
