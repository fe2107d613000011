"""Vectorised numpy implementations of the hot kernels.

Every function here has a loop-based twin in ``_numba`` with the same
signature and the same arithmetic order, so both paths agree to rounding.
"""
import numpy as np

from ._common import FAST_CIRCLE, INFINITY_EPS, disk_offsets

_FAST_ARC = 9


def bilinear_sample(img, map_x, map_y):
    """Sample ``img`` at float coordinates; returns (values, valid)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    valid = (
        np.isfinite(map_x)
        & np.isfinite(map_y)
        & (map_x >= 0.0)
        & (map_x <= w - 1)
        & (map_y >= 0.0)
        & (map_y <= h - 1)
    )
    x = np.where(valid, map_x, 0.0)
    y = np.where(valid, map_y, 0.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    out[~valid] = 0.0
    return out, valid


def fast_score(img):
    """FAST-9 corner strength map.

    The score of a pixel is the largest threshold at which it would still be
    a corner: the best over all 9-long arcs of the minimum signed difference
    to the centre. Pixels within 3 px of the border get 0.
    """
    img = np.asarray(img, dtype=np.int16)
    h, w = img.shape
    score = np.zeros((h, w), dtype=np.int16)
    if h < 7 or w < 7:
        return score
    centre = img[3 : h - 3, 3 : w - 3]
    diffs = np.empty((16,) + centre.shape, dtype=np.int16)
    for k, (dx, dy) in enumerate(FAST_CIRCLE):
        diffs[k] = img[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] - centre
    best = np.zeros(centre.shape, dtype=np.int16)
    for signed in (diffs, -diffs):
        ext = np.concatenate([signed, signed[: _FAST_ARC - 1]], axis=0)
        arc_min = ext[0:16].copy()
        for j in range(1, _FAST_ARC):
            np.minimum(arc_min, ext[j : j + 16], out=arc_min)
        np.maximum(best, arc_min.max(axis=0), out=best)
    score[3 : h - 3, 3 : w - 3] = best
    return score


def nonmax_suppression(score):
    """3x3 non-maximum suppression with raster-order tie breaking.

    A positive pixel survives if it is strictly greater than the four
    neighbours preceding it in raster order and not smaller than the four
    following it.
    """
    s = np.asarray(score)
    h, w = s.shape
    pad = np.full((h + 2, w + 2), np.iinfo(np.int32).min, dtype=np.int32)
    pad[1:-1, 1:-1] = s
    c = pad[1:-1, 1:-1]
    keep = c > 0
    for dy, dx in ((-1, -1), (-1, 0), (-1, 1), (0, -1)):
        keep &= c > pad[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
    for dy, dx in ((0, 1), (1, -1), (1, 0), (1, 1)):
        keep &= c >= pad[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
    return keep


def ic_angles(img, xs, ys, radius):
    """Intensity-centroid orientation in [0, 2*pi) for each keypoint."""
    dx, dy = disk_offsets(radius)
    if len(xs) == 0:
        return np.zeros(0)
    vals = img[ys[:, None] + dy[None, :], xs[:, None] + dx[None, :]].astype(np.int64)
    m10 = (vals * dx[None, :]).sum(axis=1)
    m01 = (vals * dy[None, :]).sum(axis=1)
    ang = np.arctan2(m01.astype(np.float64), m10.astype(np.float64))
    return np.where(ang < 0.0, ang + 2.0 * np.pi, ang)


def steered_brief(img, xs, ys, angles, pattern):
    """256-bit steered binary descriptors packed LSB-first into 32 bytes."""
    n = len(xs)
    if n == 0:
        return np.zeros((0, 32), dtype=np.uint8)
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    ax, ay, bx, by = (pattern[:, k][None, :] for k in range(4))
    rax = np.floor(c * ax - s * ay + 0.5).astype(np.intp)
    ray = np.floor(s * ax + c * ay + 0.5).astype(np.intp)
    rbx = np.floor(c * bx - s * by + 0.5).astype(np.intp)
    rby = np.floor(s * bx + c * by + 0.5).astype(np.intp)
    xs = xs[:, None]
    ys = ys[:, None]
    va = img[ys + ray, xs + rax]
    vb = img[ys + rby, xs + rbx]
    bits = (va < vb).astype(np.uint8)
    return np.packbits(bits, axis=1, bitorder="little")


def hamming_matrix(a, b, chunk=256):
    """Pairwise Hamming distances between packed 256-bit descriptors."""
    na, nb = len(a), len(b)
    out = np.empty((na, nb), dtype=np.int32)
    if na == 0 or nb == 0:
        return out
    wa = np.ascontiguousarray(a).view(np.uint64)
    wb = np.ascontiguousarray(b).view(np.uint64)
    for start in range(0, na, chunk):
        x = wa[start : start + chunk, None, :] ^ wb[None, :, :]
        out[start : start + chunk] = np.bitwise_count(x).sum(axis=2, dtype=np.int32)
    return out


def transfer_errors(hmat, src, dst):
    """One-way transfer error |H*src - dst|; +inf where H*src is at infinity."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    x = hmat[0, 0] * src[:, 0] + hmat[0, 1] * src[:, 1] + hmat[0, 2]
    y = hmat[1, 0] * src[:, 0] + hmat[1, 1] * src[:, 1] + hmat[1, 2]
    w = hmat[2, 0] * src[:, 0] + hmat[2, 1] * src[:, 1] + hmat[2, 2]
    finite = np.abs(w) >= INFINITY_EPS
    safe_w = np.where(finite, w, 1.0)
    ex = x / safe_w - dst[:, 0]
    ey = y / safe_w - dst[:, 1]
    err = np.sqrt(ex * ex + ey * ey)
    return np.where(finite, err, np.inf)


def grid_occupancy(points, width, height, levels):
    """Occupied-bin counts k_l for l = 1..levels on 2^l x 2^l grids."""
    counts = np.zeros(levels, dtype=np.int64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        return counts
    u = points[:, 0]
    v = points[:, 1]
    for lvl in range(1, levels + 1):
        n = 1 << lvl
        bx = np.clip(np.floor(u * n / width), 0, n - 1).astype(np.int64)
        by = np.clip(np.floor(v * n / height), 0, n - 1).astype(np.int64)
        occupied = np.zeros(n * n, dtype=bool)
        occupied[by * n + bx] = True
        counts[lvl - 1] = occupied.sum()
    return counts
