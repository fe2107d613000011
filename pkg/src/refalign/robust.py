"""Robust homography fitting with a multi-level grid-coverage selection score."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    DegenerateConfigurationError,
    InsufficientMatchesError,
    NoModelError,
    SingularHomographyError,
)
from .geometry import normalize_homography

COLLINEAR_EPS = 1e-9
_RANK_EPS = 1e-10


@dataclass(frozen=True)
class ScoreConfig:
    """Grid pyramid for the coverage score: level l has 2^l bins per axis."""

    levels: int = 4

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    @property
    def weights(self):
        L = self.levels
        return np.array([2 ** (L - l + 1) for l in range(1, L + 1)], dtype=np.int64)


@dataclass(frozen=True, kw_only=True)
class RansacConfig:
    seed: int
    inlier_threshold: float = 4.0
    max_iterations: int = 2000
    confidence: float = 0.999

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RansacResult:
    homography: np.ndarray
    inliers: np.ndarray  # indices into the input correspondences
    score: int
    iterations_run: int
    errors: np.ndarray = field(repr=False, default=None)

    @property
    def n_inliers(self):
        return len(self.inliers)


def hartley_normalization(points):
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    mean_dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if not mean_dist > 0:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (pts - centroid) * s, t


def _has_collinear_triple(pts):
    # pts already normalised; 4 points -> 4 triples
    n = len(pts)
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                a = pts[j] - pts[i]
                b = pts[k] - pts[i]
                if abs(a[0] * b[1] - a[1] * b[0]) < COLLINEAR_EPS:
                    return True
    return False


def _all_collinear(pts):
    pts = np.asarray(pts, dtype=np.float64)
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    return sv[0] == 0.0 or sv[-1] <= COLLINEAR_EPS * sv[0]


def _design_matrix(ns, nd):
    n = len(ns)
    a = np.zeros((2 * n, 9))
    x, y = ns[:, 0], ns[:, 1]
    u, v = nd[:, 0], nd[:, 1]
    a[0::2, 3] = -x
    a[0::2, 4] = -y
    a[0::2, 5] = -1.0
    a[0::2, 6] = v * x
    a[0::2, 7] = v * y
    a[0::2, 8] = v
    a[1::2, 0] = x
    a[1::2, 1] = y
    a[1::2, 2] = 1.0
    a[1::2, 6] = -u * x
    a[1::2, 7] = -u * y
    a[1::2, 8] = -u
    return a


def _solve(ns, ts, nd, td):
    a = _design_matrix(ns, nd)
    _, sv, vt = np.linalg.svd(a, full_matrices=True)
    if sv[7] <= _RANK_EPS * sv[0]:
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.solve(td, hn @ ts)
    try:
        return normalize_homography(h)
    except SingularHomographyError:
        return None


def dlt_homography(src, dst):
    """Normalised DLT fit of ``H`` with ``dst ~ H @ src``.

    Exact for four points in general position, least squares (algebraic
    error in normalised coordinates) for more.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientMatchesError(f"need at least 4 correspondences, got {len(src)}")
    ns, ts = hartley_normalization(src)
    nd, td = hartley_normalization(dst)
    if len(src) == 4:
        if _has_collinear_triple(ns) or _has_collinear_triple(nd):
            raise DegenerateConfigurationError("three of the four points are collinear")
    elif _all_collinear(ns) or _all_collinear(nd):
        raise DegenerateConfigurationError("points are collinear")
    h = _solve(ns, ts, nd, td)
    if h is None:
        raise DegenerateConfigurationError("correspondences do not determine a homography")
    return h


def transfer_error(h, src, dst):
    """One-way error |H*src - dst| in reference pixels; +inf at infinity."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    single = src.ndim == 1
    err = kernels.transfer_errors(
        np.asarray(h, dtype=np.float64), src.reshape(-1, 2), dst.reshape(-1, 2)
    )
    return float(err[0]) if single else err


def occupied_bins(points, img_size, cfg=None):
    """Occupied-bin count per level (k_1..k_L)."""
    cfg = cfg or ScoreConfig()
    width, height = img_size
    return kernels.grid_occupancy(
        np.asarray(points, dtype=np.float64).reshape(-1, 2), width, height, cfg.levels
    )


def grid_coverage_score(points, img_size, cfg=None):
    """Sum over levels of occupied bins times 2^(L - l + 1).

    Points outside the image are clamped into the border bins.
    """
    cfg = cfg or ScoreConfig()
    k = occupied_bins(points, img_size, cfg)
    return int(k @ cfg.weights)


def required_iterations(inlier_ratio, confidence, sample_size=4):
    """Standard RANSAC stopping bound for the given inlier ratio."""
    good = inlier_ratio**sample_size
    if good >= 1.0:
        return 0
    if good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - good))


def ransac_homography(src, dst, img_size, rc, sc=None):
    """Hypothesise-and-verify homography fit (query ``src`` -> reference ``dst``).

    Hypotheses are ranked by the grid-coverage score of their inliers'
    reference positions, then by inlier count, then by iteration index.
    The winner is refit on its inliers with :func:`dlt_homography`.
    """
    sc = sc or ScoreConfig()
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = len(src)
    if n < 4:
        raise InsufficientMatchesError(f"need at least 4 matches, got {n}")
    if _all_collinear(src) or _all_collinear(dst):
        raise DegenerateConfigurationError("all matches are collinear")

    rng = np.random.Generator(np.random.Philox(rc.seed))
    thr = rc.inlier_threshold
    best = None  # (score, count, H, mask)
    limit = rc.max_iterations
    it = 0
    while it < limit:
        idx = rng.choice(n, 4, replace=False)
        it += 1
        s4, d4 = src[idx], dst[idx]
        try:
            ns, ts = hartley_normalization(s4)
            nd, td = hartley_normalization(d4)
        except DegenerateConfigurationError:
            continue
        if _has_collinear_triple(ns) or _has_collinear_triple(nd):
            continue
        h = _solve(ns, ts, nd, td)
        if h is None:
            continue
        mask = kernels.transfer_errors(h, src, dst) <= thr
        count = int(mask.sum())
        score = grid_coverage_score(dst[mask], img_size, sc)
        if best is None or (score, count) > (best[0], best[1]):
            best = (score, count, h, mask)
            limit = min(limit, max(it, required_iterations(count / n, rc.confidence)))
    if best is None:
        raise NoModelError(f"all {it} sampled minimal sets were degenerate")

    h = best[2]
    try:
        h = dlt_homography(src[best[3]], dst[best[3]])
    except DegenerateConfigurationError:
        pass
    errors = kernels.transfer_errors(h, src, dst)
    mask = errors <= thr
    return RansacResult(
        homography=h,
        inliers=np.flatnonzero(mask),
        score=grid_coverage_score(dst[mask], img_size, sc),
        iterations_run=it,
        errors=errors,
    )
