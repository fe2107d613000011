"""Oriented FAST keypoints with binary descriptors, thinned by a quadtree and matched by Hamming distance."""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import EmptyFeatureSetError, ImageTooSmallError

MIN_IMAGE_SIDE = 64
DESCRIPTOR_BYTES = 32
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class OrbConfig:
    n_levels: int = 8
    scale_factor: float = 1.2
    fast_threshold: int = 20
    min_fast_threshold: int = 7
    cell_size: int = 30  # cells without a strong corner fall back to min_fast_threshold
    edge: int = 16  # keypoints keep this far from the level border
    patch_radius: int = 15
    blur_sigma: float = 2.0


def _make_pattern(seed=0x0B1F, radius=15, n_bits=256):
    # isotropic Gaussian test pairs (sigma = patch/5), kept inside the
    # orientation disk so every rotation stays within the patch
    rng = np.random.default_rng(seed)
    sigma = (2 * radius + 1) / 5.0
    pairs = []
    while len(pairs) < n_bits:
        p = np.rint(rng.normal(0.0, sigma, 4))
        if p[0] ** 2 + p[1] ** 2 > radius**2 or p[2] ** 2 + p[3] ** 2 > radius**2:
            continue
        if p[0] == p[2] and p[1] == p[3]:
            continue
        pairs.append(p)
    return np.array(pairs, dtype=np.float64)


BRIEF_PATTERN = _make_pattern()
BRIEF_PATTERN.setflags(write=False)


class Keypoint(NamedTuple):
    x: float
    y: float
    response: float
    angle: float
    octave: int


@dataclass
class FeatureSet:
    """Parallel arrays of keypoints (level-0 pixel coordinates) and descriptors."""

    xy: np.ndarray
    response: np.ndarray
    angle: np.ndarray
    octave: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        n = len(self.xy)
        self.response = np.asarray(self.response, dtype=np.float64).reshape(n)
        self.angle = np.asarray(self.angle, dtype=np.float64).reshape(n)
        self.octave = np.asarray(self.octave, dtype=np.int64).reshape(n)
        self.descriptors = np.asarray(self.descriptors, dtype=np.uint8).reshape(n, DESCRIPTOR_BYTES)

    def __len__(self):
        return len(self.xy)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), [], [], [], np.zeros((0, DESCRIPTOR_BYTES), np.uint8))

    def subset(self, idx):
        idx = np.asarray(idx)
        return FeatureSet(
            self.xy[idx], self.response[idx], self.angle[idx], self.octave[idx], self.descriptors[idx]
        )

    @property
    def keypoints(self):
        return [
            Keypoint(float(x), float(y), float(r), float(a), int(o))
            for (x, y), r, a, o in zip(self.xy, self.response, self.angle, self.octave)
        ]

    def equals(self, other):
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("xy", "response", "angle", "octave", "descriptors")
        )


def to_gray_u8(img):
    """Grayscale uint8 view of an image (RGB is converted with Rec.601 luma)."""
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[..., :3].astype(np.float64) @ np.array(LUMA_WEIGHTS)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return img


def hamming_distance(d1, d2):
    return int(np.unpackbits(np.bitwise_xor(np.asarray(d1, np.uint8), np.asarray(d2, np.uint8))).sum())


def _level_sizes(width, height, cfg):
    sizes = []
    for lvl in range(cfg.n_levels):
        s = cfg.scale_factor**lvl
        w, h = int(round(width / s)), int(round(height / s))
        if min(w, h) <= 2 * cfg.edge + 1:
            break
        sizes.append((w, h))
    return sizes


def _downscale(img, size, factor):
    w, h = size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    mx = np.clip((xs + 0.5) * factor - 0.5, 0.0, img.shape[1] - 1)
    my = np.clip((ys + 0.5) * factor - 0.5, 0.0, img.shape[0] - 1)
    out, _ = kernels.bilinear_sample(img, mx, my)
    return out


def build_pyramid(gray, cfg):
    """List of float64 level images, each ``scale_factor`` smaller than the last."""
    sizes = _level_sizes(gray.shape[1], gray.shape[0], cfg)
    levels = [gray.astype(np.float64)]
    for size in sizes[1:]:
        levels.append(np.rint(_downscale(levels[-1], size, cfg.scale_factor)))
    return levels


def _level_quotas(budget, n_levels, scale_factor):
    f = 1.0 / scale_factor
    if n_levels == 1:
        return [budget]
    first = budget * (1 - f) / (1 - f**n_levels)
    quotas = [int(round(first * f**i)) for i in range(n_levels - 1)]
    quotas.append(max(budget - sum(quotas), 0))
    return quotas


def _select_candidates(score, cfg):
    h, w = score.shape
    keep = kernels.nonmax_suppression(score)
    keep &= score > cfg.min_fast_threshold
    e = cfg.edge
    keep[:e, :] = False
    keep[h - e :, :] = False
    keep[:, :e] = False
    keep[:, w - e :] = False
    ys, xs = np.nonzero(keep)
    s = score[ys, xs].astype(np.int64)
    if len(s) == 0:
        return xs, ys, s
    ncx = (w + cfg.cell_size - 1) // cfg.cell_size
    cell = (ys // cfg.cell_size) * ncx + xs // cfg.cell_size
    cell_max = np.zeros(cell.max() + 1, dtype=np.int64)
    np.maximum.at(cell_max, cell, s)
    strong_cell = cell_max[cell] > cfg.fast_threshold
    ok = ~strong_cell | (s > cfg.fast_threshold)
    return xs[ok], ys[ok], s[ok]


def detect_features(img, budget=1000, config=None, mask=None):
    """Oriented FAST keypoints with steered 256-bit binary descriptors.

    Keypoints are spread over an image pyramid with a geometric per-level
    quota and ranked by FAST score within a level. ``mask`` (level-0
    boolean) excludes keypoints whose patch touches invalid pixels.
    """
    cfg = config or OrbConfig()
    gray = to_gray_u8(img)
    if gray.shape[0] < MIN_IMAGE_SIDE or gray.shape[1] < MIN_IMAGE_SIDE:
        raise ImageTooSmallError(f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {gray.shape}")
    if budget <= 0:
        return FeatureSet.empty()

    clearance = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        # an all-valid mask is no mask (the transform needs some background);
        # image borders are handled by the per-level edge margin
        if not mask.all():
            clearance = ndimage.distance_transform_cdt(mask, metric="chessboard")

    levels = build_pyramid(gray, cfg)
    quotas = _level_quotas(budget, len(levels), cfg.scale_factor)
    out = {k: [] for k in ("xy", "response", "angle", "octave", "descriptors")}
    carry = 0
    for lvl, level in enumerate(levels):
        quota = quotas[lvl] + carry
        level_u8 = level.astype(np.uint8)
        xs, ys, s = _select_candidates(kernels.fast_score(level_u8), cfg)
        scale = cfg.scale_factor**lvl
        x0 = (xs + 0.5) * scale - 0.5
        y0 = (ys + 0.5) * scale - 0.5
        if clearance is not None and len(xs):
            cy = np.clip(np.rint(y0).astype(np.intp), 0, gray.shape[0] - 1)
            cx = np.clip(np.rint(x0).astype(np.intp), 0, gray.shape[1] - 1)
            ok = clearance[cy, cx] > (cfg.edge + 1) * scale
            xs, ys, s, x0, y0 = xs[ok], ys[ok], s[ok], x0[ok], y0[ok]
        # strongest first; np.nonzero order breaks ties by raster index
        order = np.argsort(-s, kind="stable")[:quota]
        carry = quota - len(order)
        if len(order) == 0:
            continue
        xs, ys, s, x0, y0 = xs[order], ys[order], s[order], x0[order], y0[order]
        angles = kernels.ic_angles(level_u8, xs, ys, cfg.patch_radius)
        blurred = ndimage.gaussian_filter(level, cfg.blur_sigma, truncate=1.5, mode="reflect")
        desc = kernels.steered_brief(
            np.clip(np.rint(blurred), 0, 255).astype(np.uint8), xs, ys, angles, BRIEF_PATTERN
        )
        out["xy"].append(np.column_stack([x0, y0]))
        out["response"].append(s.astype(np.float64))
        out["angle"].append(angles)
        out["octave"].append(np.full(len(xs), lvl))
        out["descriptors"].append(desc)
    if not out["xy"]:
        return FeatureSet.empty()
    return FeatureSet(**{k: np.concatenate(v) for k, v in out.items()})


@dataclass
class Cell:
    x0: float
    y0: float
    x1: float
    y1: float
    members: np.ndarray

    def contains(self, x, y, width, height):
        # half-open cells, except cells touching the image's far edges
        in_x = (x >= self.x0) & ((x < self.x1) | ((self.x1 >= width) & (x <= self.x1)))
        in_y = (y >= self.y0) & ((y < self.y1) | ((self.y1 >= height) & (y <= self.y1)))
        return in_x & in_y

    def split(self, xy, min_size):
        if self.x1 - self.x0 <= min_size or self.y1 - self.y0 <= min_size:
            return None
        mx = 0.5 * (self.x0 + self.x1)
        my = 0.5 * (self.y0 + self.y1)
        pts = xy[self.members]
        left = pts[:, 0] < mx
        top = pts[:, 1] < my
        children = []
        for sel, box in (
            (left & top, (self.x0, self.y0, mx, my)),
            (~left & top, (mx, self.y0, self.x1, my)),
            (left & ~top, (self.x0, my, mx, self.y1)),
            (~left & ~top, (mx, my, self.x1, self.y1)),
        ):
            if sel.any():
                children.append(Cell(*box, self.members[sel]))
        return children


def quadtree_cells(xy, img_size, target, min_cell=1.0):
    """Quadtree leaves over ``xy`` (ORB-SLAM style), never more than ``target``
    unless the initial column split already exceeds it."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    width, height = float(img_size[0]), float(img_size[1])
    if len(xy) == 0:
        return []
    n_ini = max(1, int(round(width / height)))
    hx = width / n_ini
    col = np.clip((xy[:, 0] // hx).astype(np.int64), 0, n_ini - 1)
    cells = []
    for i in range(n_ini):
        members = np.flatnonzero(col == i)
        if len(members):
            cells.append(Cell(i * hx, 0.0, (i + 1) * hx, height, members))

    def expandable(cs):
        return [c for c in cs if len(c.members) > 1 and c.split(xy, min_cell) is not None]

    while len(cells) < target:
        todo = expandable(cells)
        if not todo:
            break
        if len(cells) + 3 * len(todo) <= target:
            nxt = []
            for c in cells:
                if len(c.members) > 1:
                    nxt.extend(c.split(xy, min_cell) or [c])
                else:
                    nxt.append(c)
            cells = nxt
            continue
        # final phase: split the most populated cells one at a time
        id_order = {id(c): i for i, c in enumerate(cells)}
        changed = True
        while changed and len(cells) < target:
            changed = False
            order = sorted(todo, key=lambda c: (-len(c.members), id_order[id(c)]))
            for c in order:
                children = c.split(xy, min_cell)
                if len(cells) - 1 + len(children) > target:
                    continue
                pos = next(i for i, cc in enumerate(cells) if cc is c)
                cells[pos : pos + 1] = children
                changed = True
                if len(cells) >= target:
                    break
            todo = expandable(cells)
            id_order = {id(c): i for i, c in enumerate(cells)}
        break
    return cells


def uniformize(fs, img_size, target):
    """Keep the best-response keypoint of each quadtree leaf (at most ``target``)."""
    if target < 1:
        raise ValueError("target must be >= 1")
    if len(fs) == 0:
        return fs
    cells = quadtree_cells(fs.xy, img_size, target)
    keep = []
    for c in cells:
        m = c.members
        best = np.lexsort((m, -fs.response[m]))[0]
        keep.append(m[best])
    keep = np.array(keep, dtype=np.int64)
    if len(keep) > target:
        keep = keep[np.lexsort((keep, -fs.response[keep]))[:target]]
    return fs.subset(np.sort(keep))


class Match(NamedTuple):
    query_index: int
    ref_index: int
    distance: int


@dataclass
class MatchSet:
    query_idx: np.ndarray
    ref_idx: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return len(self.query_idx)

    def __iter__(self):
        for q, r, d in zip(self.query_idx, self.ref_idx, self.distance):
            yield Match(int(q), int(r), int(d))

    def pairs(self):
        return set(zip(self.query_idx.tolist(), self.ref_idx.tolist()))


def match_features(query, ref, max_distance=64):
    """Mutual nearest neighbours under Hamming distance, capped at ``max_distance``."""
    if len(query) == 0 or len(ref) == 0:
        raise EmptyFeatureSetError("cannot match an empty feature set")
    dist = kernels.hamming_matrix(query.descriptors, ref.descriptors)
    fwd = np.argmin(dist, axis=1)
    bwd = np.argmin(dist, axis=0)
    qi = np.arange(len(query))
    d = dist[qi, fwd]
    ok = (bwd[fwd] == qi) & (d <= max_distance)
    return MatchSet(qi[ok], fwd[ok], d[ok].astype(np.int64))
