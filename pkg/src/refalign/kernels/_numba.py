"""Numba-compiled loop implementations of the hot kernels.

Signatures and arithmetic order mirror ``_numpy``; the public wrappers at the
bottom normalise dtypes and contiguity before entering compiled code.
"""
import numpy as np
from numba import njit

from ._common import FAST_CIRCLE_ARRAY, INFINITY_EPS, disk_offsets

# the shifted-comparison form is faster than a branchy compiled loop for 3x3 NMS
from ._numpy import nonmax_suppression  # noqa: F401


@njit(cache=True)
def _bilinear_sample(img, map_x, map_y, out, valid):
    h, w = img.shape
    rows, cols = map_x.shape
    for i in range(rows):
        for j in range(cols):
            x = map_x[i, j]
            y = map_y[i, j]
            if not (np.isfinite(x) and np.isfinite(y)):
                out[i, j] = 0.0
                valid[i, j] = False
                continue
            if x < 0.0 or x > w - 1 or y < 0.0 or y > h - 1:
                out[i, j] = 0.0
                valid[i, j] = False
                continue
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = x - x0
            fy = y - y0
            top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
            bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
            out[i, j] = top * (1.0 - fy) + bottom * fy
            valid[i, j] = True


@njit(cache=True)
def _fast_score(img, offsets, score):
    # arc extrema over 9 consecutive circle pixels by doubling: 2, 4, 8, then +1
    h, w = img.shape
    flat = img.ravel()
    d = np.empty(32, dtype=np.int32)
    lo = np.empty(32, dtype=np.int32)
    hi = np.empty(32, dtype=np.int32)
    for y in range(3, h - 3):
        row = y * w
        for x in range(3, w - 3):
            p = row + x
            c = np.int32(flat[p])
            for k in range(16):
                v = np.int32(flat[p + offsets[k]]) - c
                d[k] = v
                d[k + 16] = v
            for k in range(31):
                a = d[k]
                b = d[k + 1]
                lo[k] = min(a, b)
                hi[k] = max(a, b)
            for k in range(29):
                lo[k] = min(lo[k], lo[k + 2])
                hi[k] = max(hi[k], hi[k + 2])
            best = 0
            for k in range(16):
                mn = min(min(lo[k], lo[k + 4]), d[k + 8])
                mx = max(max(hi[k], hi[k + 4]), d[k + 8])
                if mn > best:
                    best = mn
                if -mx > best:
                    best = -mx
            score[y, x] = best


@njit(cache=True)
def _ic_angles(img, xs, ys, dx, dy, out):
    for k in range(xs.shape[0]):
        m10 = 0
        m01 = 0
        for t in range(dx.shape[0]):
            v = np.int64(img[ys[k] + dy[t], xs[k] + dx[t]])
            m10 += v * dx[t]
            m01 += v * dy[t]
        a = np.arctan2(np.float64(m01), np.float64(m10))
        if a < 0.0:
            a += 2.0 * np.pi
        out[k] = a


@njit(cache=True)
def _steered_brief(img, xs, ys, angles, pattern, out):
    for k in range(xs.shape[0]):
        c = np.cos(angles[k])
        s = np.sin(angles[k])
        x = xs[k]
        y = ys[k]
        for byte in range(32):
            acc = 0
            for bit in range(8):
                i = byte * 8 + bit
                ax = pattern[i, 0]
                ay = pattern[i, 1]
                bx = pattern[i, 2]
                by = pattern[i, 3]
                rax = int(np.floor(c * ax - s * ay + 0.5))
                ray = int(np.floor(s * ax + c * ay + 0.5))
                rbx = int(np.floor(c * bx - s * by + 0.5))
                rby = int(np.floor(s * bx + c * by + 0.5))
                if img[y + ray, x + rax] < img[y + rby, x + rbx]:
                    acc |= 1 << bit
            out[k, byte] = acc


@njit(cache=True)
def _popcount64(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _hamming_matrix(wa, wb, out):
    na, nwords = wa.shape
    nb = wb.shape[0]
    for i in range(na):
        for j in range(nb):
            acc = 0
            for t in range(nwords):
                acc += _popcount64(wa[i, t] ^ wb[j, t])
            out[i, j] = acc


@njit(cache=True)
def _transfer_errors(hmat, src, dst, out):
    for i in range(src.shape[0]):
        u = src[i, 0]
        v = src[i, 1]
        x = hmat[0, 0] * u + hmat[0, 1] * v + hmat[0, 2]
        y = hmat[1, 0] * u + hmat[1, 1] * v + hmat[1, 2]
        w = hmat[2, 0] * u + hmat[2, 1] * v + hmat[2, 2]
        if abs(w) < INFINITY_EPS:
            out[i] = np.inf
            continue
        ex = x / w - dst[i, 0]
        ey = y / w - dst[i, 1]
        out[i] = np.sqrt(ex * ex + ey * ey)


@njit(cache=True)
def _grid_occupancy(points, width, height, levels, counts):
    for lvl in range(1, levels + 1):
        n = 1 << lvl
        occupied = np.zeros(n * n, dtype=np.bool_)
        k = 0
        for i in range(points.shape[0]):
            bx = int(np.floor(points[i, 0] * n / width))
            by = int(np.floor(points[i, 1] * n / height))
            bx = min(max(bx, 0), n - 1)
            by = min(max(by, 0), n - 1)
            idx = by * n + bx
            if not occupied[idx]:
                occupied[idx] = True
                k += 1
        counts[lvl - 1] = k


def bilinear_sample(img, map_x, map_y):
    img = np.ascontiguousarray(img, dtype=np.float64)
    map_x = np.ascontiguousarray(map_x, dtype=np.float64)
    map_y = np.ascontiguousarray(map_y, dtype=np.float64)
    out = np.empty(map_x.shape, dtype=np.float64)
    valid = np.empty(map_x.shape, dtype=np.bool_)
    _bilinear_sample(img, map_x, map_y, out, valid)
    return out, valid


def fast_score(img):
    img = np.ascontiguousarray(img, dtype=np.uint8)
    score = np.zeros(img.shape, dtype=np.int16)
    if img.shape[0] >= 7 and img.shape[1] >= 7:
        offsets = FAST_CIRCLE_ARRAY[:, 1] * img.shape[1] + FAST_CIRCLE_ARRAY[:, 0]
        _fast_score(img, offsets.astype(np.int64), score)
    return score


def ic_angles(img, xs, ys, radius):
    dx, dy = disk_offsets(radius)
    out = np.empty(len(xs), dtype=np.float64)
    if len(xs):
        _ic_angles(
            np.ascontiguousarray(img, dtype=np.uint8),
            np.ascontiguousarray(xs, dtype=np.int64),
            np.ascontiguousarray(ys, dtype=np.int64),
            dx, dy, out,
        )
    return out


def steered_brief(img, xs, ys, angles, pattern):
    out = np.zeros((len(xs), 32), dtype=np.uint8)
    if len(xs):
        _steered_brief(
            np.ascontiguousarray(img, dtype=np.uint8),
            np.ascontiguousarray(xs, dtype=np.int64),
            np.ascontiguousarray(ys, dtype=np.int64),
            np.ascontiguousarray(angles, dtype=np.float64),
            np.ascontiguousarray(pattern, dtype=np.float64),
            out,
        )
    return out


def hamming_matrix(a, b):
    out = np.empty((len(a), len(b)), dtype=np.int32)
    if len(a) and len(b):
        wa = np.ascontiguousarray(a, dtype=np.uint8).view(np.uint64)
        wb = np.ascontiguousarray(b, dtype=np.uint8).view(np.uint64)
        _hamming_matrix(wa, wb, out)
    return out


def transfer_errors(hmat, src, dst):
    src = np.ascontiguousarray(src, dtype=np.float64)
    out = np.empty(len(src), dtype=np.float64)
    if len(src):
        _transfer_errors(
            np.ascontiguousarray(hmat, dtype=np.float64),
            src,
            np.ascontiguousarray(dst, dtype=np.float64),
            out,
        )
    return out


def grid_occupancy(points, width, height, levels):
    counts = np.zeros(levels, dtype=np.int64)
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points):
        _grid_occupancy(points, float(width), float(height), int(levels), counts)
    return counts
