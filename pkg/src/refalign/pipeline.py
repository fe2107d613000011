"""Adaptive warping of query frames onto their nearest reference frames."""
import dataclasses
import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientMatchesError, RefAlignError
from .features import OrbConfig, detect_features, match_features, to_gray_u8, uniformize
from .geometry import Pose, compose, rotation_angle, rotation_homography, warp_image
from .robust import RansacConfig, ScoreConfig, ransac_homography

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    timestamp: float
    pose: Pose
    image_id: str


class Trajectory:
    """Time-ordered frames with camera poses."""

    def __init__(self, frames):
        frames = list(frames)
        if not frames:
            raise ValueError("trajectory needs at least one frame")
        ts = np.array([f.timestamp for f in frames], dtype=np.float64)
        if np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        self.frames = frames

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def positions(self):
        return np.array([f.pose.translation for f in self.frames])

    @property
    def timestamps(self):
        return np.array([f.timestamp for f in self.frames])


class WarpStrategy(str, enum.Enum):
    ROTATION_THEN_PLANAR = "RotationThenPlanar"
    PLANAR_ONLY = "PlanarOnly"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class FramePair:
    query_frame: Frame
    ref_frame: Frame
    translation_gap: float
    rotation_gap: float
    query_index: int = 0
    ref_index: int = 0

    @property
    def query_id(self):
        return self.query_frame.image_id

    @property
    def ref_id(self):
        return self.ref_frame.image_id


@dataclass(frozen=True)
class PipelineConfig:
    translation_gate: float = 0.03
    feature_budget: int = 1000
    # detect this many times the budget before uniformisation
    detection_oversample: int = 3
    max_match_distance: int = 64
    ransac: RansacConfig = field(default_factory=lambda: RansacConfig(seed=0))
    score: ScoreConfig = field(default_factory=ScoreConfig)
    orb: OrbConfig = field(default_factory=OrbConfig)

    def __post_init__(self):
        if not self.translation_gate > 0:
            raise ValueError("translation_gate must be positive")
        if self.feature_budget < 4:
            raise ValueError("feature_budget must be >= 4")

    def with_seed(self, seed):
        return dataclasses.replace(self, ransac=dataclasses.replace(self.ransac, seed=seed))


@dataclass
class AlignmentResult:
    strategy: WarpStrategy
    rotation_h: Optional[np.ndarray]
    planar_h: np.ndarray
    composed_h: np.ndarray
    inliers: int
    score: int
    valid_mask: np.ndarray = field(repr=False)
    warped: np.ndarray = field(repr=False, default=None)
    # rotation-induced homography from the poses, kept for every pair so the
    # rotation-only ablation can be evaluated on PlanarOnly pairs too
    pose_h: Optional[np.ndarray] = None
    n_matches: int = 0
    iterations: int = 0


@dataclass
class AlignmentFailure:
    """Record emitted instead of a result when a pair cannot be aligned."""

    pair_index: int
    query_id: str
    ref_id: str
    reason: str
    message: str


def associate_frames(query, reference, chunk=512):
    """Pair each query frame with the reference frame nearest in position.

    Ties go to the earlier reference frame.
    """
    ref_pos = reference.positions
    q_pos = query.positions
    pairs = []
    for start in range(0, len(q_pos), chunk):
        block = q_pos[start : start + chunk]
        d2 = ((block[:, None, :] - ref_pos[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        for offset, j in enumerate(nearest):
            i = start + offset
            qf, rf = query[i], reference[int(j)]
            pairs.append(
                FramePair(
                    query_frame=qf,
                    ref_frame=rf,
                    translation_gap=float(np.linalg.norm(qf.pose.translation - rf.pose.translation)),
                    rotation_gap=rotation_angle(qf.pose.rotation @ rf.pose.rotation.T),
                    query_index=i,
                    ref_index=int(j),
                )
            )
    return pairs


def select_strategy(pair, cfg):
    """Rotation warp + planar refinement strictly below the translation gate."""
    gap = pair.translation_gap if isinstance(pair, FramePair) else float(pair)
    if gap < cfg.translation_gate:
        return WarpStrategy.ROTATION_THEN_PLANAR
    return WarpStrategy.PLANAR_ONLY


def _features(img, cfg, mask=None):
    fs = detect_features(img, cfg.feature_budget * cfg.detection_oversample, cfg.orb, mask=mask)
    return uniformize(fs, (img.shape[1], img.shape[0]), cfg.feature_budget)


def align_pair(query_img, ref_img, pair, k_ref, k_query, cfg=None):
    """Align the query image onto the reference image.

    Returns the query->reference homography and the query warped into the
    reference frame together with its validity mask.
    """
    cfg = cfg or PipelineConfig()
    q_gray = to_gray_u8(query_img)
    r_gray = to_gray_u8(ref_img)
    ref_size = (r_gray.shape[1], r_gray.shape[0])
    strategy = select_strategy(pair, cfg)
    pose_h = rotation_homography(k_ref, k_query, pair.ref_frame.pose, pair.query_frame.pose)

    if strategy is WarpStrategy.ROTATION_THEN_PLANAR:
        rotation_h = pose_h
        pre, pre_valid = warp_image(q_gray, rotation_h, ref_size)
    else:
        rotation_h = None
        pre, pre_valid = q_gray, None

    fq = _features(pre, cfg, mask=pre_valid)
    fr = _features(r_gray, cfg)
    if len(fq) == 0 or len(fr) == 0:
        raise InsufficientMatchesError("no features detected")
    matches = match_features(fq, fr, cfg.max_match_distance)
    if len(matches) < 4:
        raise InsufficientMatchesError(f"only {len(matches)} matches")
    fit = ransac_homography(
        fq.xy[matches.query_idx], fr.xy[matches.ref_idx], ref_size, cfg.ransac, cfg.score
    )
    planar_h = fit.homography
    composed = compose(planar_h, rotation_h) if rotation_h is not None else planar_h
    warped, valid = warp_image(query_img, composed, ref_size)
    return AlignmentResult(
        strategy=strategy,
        rotation_h=rotation_h,
        planar_h=planar_h,
        composed_h=composed,
        inliers=fit.n_inliers,
        score=fit.score,
        valid_mask=valid,
        warped=warped,
        pose_h=pose_h,
        n_matches=len(matches),
        iterations=fit.iterations_run,
    )


def pair_seed(base_seed, index):
    """Per-pair RANSAC seed, independent of worker scheduling."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def _align_job(job):
    index, pair, load, query_src, ref_src, k_ref, k_query, cfg = job
    try:
        result = align_pair(load(query_src), load(ref_src), pair, k_ref, k_query, cfg)
    except RefAlignError as exc:
        log.warning("pair %d (%s) failed: %s", index, pair.query_id, exc)
        return AlignmentFailure(index, pair.query_id, pair.ref_id, type(exc).__name__, str(exc))
    return result


def align_frame_pairs(pairs, load_image, query_sources, ref_sources, k_ref, k_query, cfg=None, workers=1):
    """Align many pairs; failures become AlignmentFailure records.

    ``load_image`` must be picklable when ``workers > 1``. Output order and
    content do not depend on ``workers``.
    """
    cfg = cfg or PipelineConfig()
    jobs = [
        (i, p, load_image, qs, rs, k_ref, k_query, cfg.with_seed(pair_seed(cfg.ransac.seed, i)))
        for i, (p, qs, rs) in enumerate(zip(pairs, query_sources, ref_sources))
    ]
    if workers <= 1:
        return [_align_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_align_job, jobs))


@dataclass
class TranslationHistogram:
    edges: np.ndarray
    counts: np.ndarray  # one per [edges[i], edges[i+1]) plus a final overflow bin
    cumulative: np.ndarray
    gate: float
    fraction_below_gate: float

    def format(self):
        lines = []
        labels = [f"[{a:.3f}, {b:.3f})" for a, b in zip(self.edges[:-1], self.edges[1:])]
        labels.append(f"[{self.edges[-1]:.3f}, inf)")
        for label, c, cum in zip(labels, self.counts, self.cumulative):
            lines.append(f"{label} count={int(c)} cumulative={cum:.4f}")
        lines.append(f"fraction_below_gate={self.fraction_below_gate:.4f} gate={self.gate:g}")
        return "\n".join(lines)


def translation_stats(pairs, bin_edges=None, gate=0.03):
    """Histogram of translation gaps with cumulative fractions."""
    gaps = np.array([p.translation_gap if isinstance(p, FramePair) else p for p in pairs], dtype=float)
    if len(gaps) == 0:
        raise ValueError("translation_stats needs at least one pair")
    edges = np.asarray(bin_edges if bin_edges is not None else np.linspace(0.0, 0.1, 21), dtype=float)
    idx = np.clip(np.searchsorted(edges, gaps, side="right") - 1, 0, len(edges) - 1)
    counts = np.bincount(idx, minlength=len(edges))
    return TranslationHistogram(
        edges=edges,
        counts=counts,
        cumulative=np.cumsum(counts) / len(gaps),
        gate=gate,
        fraction_below_gate=float(np.mean(gaps < gate)),
    )
