"""Pose-driven image alignment for reference-based anomaly detection."""
from .errors import RefAlignError
from .evaluation import CorrespondenceSet, compute_pme, evaluate_alignment_run, mask_metrics
from .features import FeatureSet, OrbConfig, detect_features, match_features, uniformize
from .geometry import (
    Intrinsics,
    PlaneParams,
    Pose,
    apply_homography,
    compose,
    planar_homography_from_motion,
    rotation_homography,
    warp_image,
)
from .pipeline import (
    PipelineConfig,
    Trajectory,
    WarpStrategy,
    align_frame_pairs,
    align_pair,
    associate_frames,
    select_strategy,
    translation_stats,
)
from .robust import RansacConfig, ScoreConfig, dlt_homography, grid_coverage_score, ransac_homography

__version__ = "0.1.0"
