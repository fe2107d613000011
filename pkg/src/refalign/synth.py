"""Synthetic ground truth for alignment and localisation experiments."""
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from . import kernels
from .errors import InfeasibleConfigError
from .evaluation import CorrespondenceSet
from .geometry import (
    Intrinsics,
    PlaneParams,
    Pose,
    apply_homography,
    planar_homography_from_motion,
    rotation_homography,
)
from .pipeline import Frame, Trajectory

MOTION_MODELS = ("pure-rotation", "planar-baseline")


@dataclass(frozen=True)
class SynthConfig:
    width: int = 640
    height: int = 360
    seed: int = 0
    motion_model: str = "pure-rotation"
    rotation_deg: float = 5.0
    baseline: float = 0.5  # metres, planar-baseline only
    plane_tilt_deg: float = 20.0
    plane_depth: float = 4.0  # metres from the reference camera
    gamma: float = 1.0
    pose_noise_deg: float = 0.0  # error injected into the reported query pose
    outlier_fraction: float = 0.0
    annotation_grid: tuple = (5, 2)
    hfov_deg: float = 64.0

    def __post_init__(self):
        if self.width < 128 or self.height < 128:
            raise ValueError("synthetic images must be at least 128x128")
        if self.motion_model not in MOTION_MODELS:
            raise ValueError(f"motion_model must be one of {MOTION_MODELS}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "annotation_grid", tuple(int(v) for v in self.annotation_grid))

    @property
    def intrinsics(self):
        return Intrinsics.from_fov(self.width, self.height, self.hfov_deg)


@dataclass
class SyntheticPair:
    query_img: np.ndarray
    ref_img: np.ndarray
    true_h: np.ndarray
    correspondences: CorrespondenceSet
    ref_pose: Pose
    query_pose: Pose  # as reported (may carry pose noise)
    query_pose_true: Pose
    k_ref: Intrinsics
    k_query: Intrinsics
    plane: PlaneParams = None
    config: SynthConfig = field(repr=False, default=None)


def random_texture(width, height, rng):
    """Band-limited random texture (uint8): multi-scale noise plus soft rectangles."""
    tex = np.zeros((height, width))
    for sigma, weight in ((1.5, 0.6), (3.0, 1.0), (6.0, 1.2), (12.0, 1.4)):
        layer = ndimage.gaussian_filter(rng.normal(size=(height, width)), sigma)
        tex += weight * layer / (layer.std() + 1e-12)
    blocks = np.zeros_like(tex)
    n_blocks = max(8, (width * height) // 2500)
    for _ in range(n_blocks):
        w = rng.integers(6, 40)
        h = rng.integers(6, 40)
        x = rng.integers(-w // 2, width)
        y = rng.integers(-h // 2, height)
        blocks[max(y, 0) : y + h, max(x, 0) : x + w] = rng.normal(0.0, 1.5)
    tex += ndimage.gaussian_filter(blocks, 1.0)
    lo, hi = np.percentile(tex, [1.0, 99.0])
    return np.clip(np.rint((tex - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def _axis_angle(rng, degrees, yaw_dominant=True):
    if degrees == 0:
        return np.eye(3)
    if yaw_dominant:
        axis = np.array([rng.uniform(-0.3, 0.3), 1.0, rng.uniform(-0.3, 0.3)])
    else:
        axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return Rotation.from_rotvec(axis * sign * math.radians(degrees)).as_matrix()


def _compose_pose(ref, rot_cam, trans_cam):
    # query camera expressed in the reference camera frame -> world
    return Pose(ref.rotation @ rot_cam, ref.translation + ref.rotation @ trans_cam)


def _perturb(pose, rng, degrees):
    if degrees <= 0:
        return pose
    return Pose(pose.rotation @ _axis_angle(rng, degrees, yaw_dominant=False), pose.translation)


def _plane(cfg, rng):
    tilt = math.radians(cfg.plane_tilt_deg) * (1.0 if rng.random() < 0.5 else -1.0)
    yaw = math.radians(rng.uniform(-10.0, 10.0))
    n = Rotation.from_euler("yx", [yaw, tilt]).apply([0.0, 0.0, 1.0])
    return PlaneParams.from_vector(n, cfg.plane_depth)


def _image_corners(width, height):
    return np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], dtype=float)


def _check_in_front(true_h, width, height):
    corners = _image_corners(width, height)
    w = corners @ true_h[2, :2] + true_h[2, 2]
    if np.any(w <= 1e-6):
        raise InfeasibleConfigError("query view wraps past infinity in the reference frame")


def annotation_grid(true_h, width, height, grid, inset=0.1, image_size=None):
    """Regular grid in the reference image mapped back into the query image."""
    nx, ny = grid
    us = np.linspace(inset * (width - 1), (1 - inset) * (width - 1), nx)
    vs = np.linspace(inset * (height - 1), (1 - inset) * (height - 1), ny)
    dst = np.array([[u, v] for v in vs for u in us])
    src = apply_homography(np.linalg.inv(true_h), dst)
    inside = (src[:, 0] >= 0) & (src[:, 0] <= width - 1) & (src[:, 1] >= 0) & (src[:, 1] <= height - 1)
    if inside.sum() < 4:
        raise InfeasibleConfigError("fewer than 4 annotation points are visible in both images")
    return CorrespondenceSet(src[inside], dst[inside], image_size or (width, height))


def render_query(canvas, margin, true_h, width, height):
    """Sample the reference canvas through ``true_h`` (query -> reference pixels)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    x = true_h[0, 0] * xs + true_h[0, 1] * ys + true_h[0, 2]
    y = true_h[1, 0] * xs + true_h[1, 1] * ys + true_h[1, 2]
    w = true_h[2, 0] * xs + true_h[2, 1] * ys + true_h[2, 2]
    vals, valid = kernels.bilinear_sample(canvas.astype(np.float64), x / w + margin, y / w + margin)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8), valid


def apply_gamma(img, gamma):
    if gamma == 1.0:
        return img
    return np.clip(np.rint(255.0 * (img / 255.0) ** gamma), 0, 255).astype(np.uint8)


def generate_synthetic_pair(cfg, ref_pose=None):
    """Render a reference/query pair with known query->reference homography."""
    rng = np.random.default_rng(cfg.seed)
    width, height = cfg.width, cfg.height
    k = cfg.intrinsics
    ref_pose = ref_pose or Pose.identity()
    rot_cam = _axis_angle(rng, cfg.rotation_deg)
    plane = _plane(cfg, rng)

    if cfg.motion_model == "pure-rotation" or cfg.baseline == 0:
        trans_cam = np.zeros(3)
    else:
        phi = rng.uniform(0.0, 2.0 * math.pi)
        direction = np.array([math.cos(phi), 0.1 * rng.uniform(-1, 1), math.sin(phi)])
        trans_cam = cfg.baseline * direction / np.linalg.norm(direction)
    query_true = _compose_pose(ref_pose, rot_cam, trans_cam)

    if cfg.motion_model == "pure-rotation":
        true_h = rotation_homography(k, k, ref_pose, query_true)
    else:
        true_h = planar_homography_from_motion(k, k, ref_pose, query_true, plane)
        # the plane must lie in front of the query camera along every view ray
        n_q = rot_cam.T @ plane.normal
        d_q = plane.depth - plane.normal @ trans_cam
        rays = np.column_stack([_image_corners(width, height), np.ones(4)]) @ k.inverse.T
        if d_q <= 0 or np.any(rays @ n_q <= 0):
            raise InfeasibleConfigError("plane is not in front of the query camera")
    _check_in_front(true_h, width, height)

    mapped = apply_homography(true_h, _image_corners(width, height))
    overshoot = max(0.0, -mapped.min(), (mapped[:, 0] - (width - 1)).max(), (mapped[:, 1] - (height - 1)).max())
    margin = int(math.ceil(overshoot)) + 8
    if margin > 2 * max(width, height):
        raise InfeasibleConfigError("motion moves the query view too far from the reference")

    canvas = random_texture(width + 2 * margin, height + 2 * margin, rng)
    ref_img = canvas[margin : margin + height, margin : margin + width].copy()
    query_img, _ = render_query(canvas, margin, true_h, width, height)
    query_img = apply_gamma(query_img, cfg.gamma)

    cs = annotation_grid(true_h, width, height, cfg.annotation_grid)
    query_reported = _perturb(query_true, rng, cfg.pose_noise_deg)
    return SyntheticPair(
        query_img=query_img,
        ref_img=ref_img,
        true_h=true_h,
        correspondences=cs,
        ref_pose=ref_pose,
        query_pose=query_reported,
        query_pose_true=query_true,
        k_ref=k,
        k_query=k,
        plane=plane,
        config=cfg,
    )


def random_homography(rng, img_size, max_shift=0.2):
    """Well-conditioned random homography: image corners jittered by up to ``max_shift``."""
    from .robust import dlt_homography

    width, height = img_size
    corners = np.array([[0, 0], [width, 0], [width, height], [0, height]], dtype=float)
    jitter = rng.uniform(-max_shift, max_shift, size=(4, 2)) * [width, height]
    return dlt_homography(corners, corners + jitter)


def synthetic_matches(true_h, n, img_size, outlier_fraction=0.0, sigma=0.0, rng=None):
    """Planted correspondences (query src -> reference dst) plus uniform outliers.

    Returns ``(src, dst, is_inlier)``; inliers come first.
    """
    rng = rng or np.random.default_rng(0)
    width, height = img_size
    n_out = int(round(n * outlier_fraction))
    n_in = n - n_out
    src_in = rng.uniform([0, 0], [width, height], size=(n_in, 2))
    dst_in = apply_homography(true_h, src_in) + rng.normal(0.0, sigma, size=(n_in, 2))
    src_out = rng.uniform([0, 0], [width, height], size=(n_out, 2))
    dst_out = rng.uniform([0, 0], [width, height], size=(n_out, 2))
    is_inlier = np.r_[np.ones(n_in, bool), np.zeros(n_out, bool)]
    return np.vstack([src_in, src_out]), np.vstack([dst_in, dst_out]), is_inlier


def _camera_rotation(heading):
    forward = np.array([math.cos(heading), math.sin(heading), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    right = np.cross(down, forward)
    return np.column_stack([right, down, forward])


def _route(s):
    # gentle S-curve; parameterised by x, close to arc length
    y = 2.0 * np.sin(s / 8.0)
    dy = 0.25 * np.cos(s / 8.0)
    return np.column_stack([s, y, np.full_like(s, 0.8)]), np.arctan2(dy, 1.0)


def simulate_teach_repeat(
    length=50.0,
    speed=0.5,
    teach_rate=30.0,
    repeat_rate=10.0,
    lateral_noise=0.01,
    heading_noise_deg=0.5,
    seed=0,
):
    """Teach run (mapping, exact poses) and repeat run with localisation noise.

    ``lateral_noise`` is the per-axis standard deviation (metres) of the
    horizontal position error in the repeat run.
    """
    rng = np.random.default_rng(seed)
    t_teach = np.arange(0.0, length / speed, 1.0 / teach_rate)
    pos, head = _route(t_teach * speed)
    teach = Trajectory(
        Frame(float(t), Pose(_camera_rotation(h), p), f"ref/{i:06d}")
        for i, (t, p, h) in enumerate(zip(t_teach, pos, head))
    )
    phase = rng.uniform(0.0, 1.0 / repeat_rate)
    t_rep = np.arange(phase, length / speed, 1.0 / repeat_rate)
    s = t_rep * speed
    pos, head = _route(s)
    pos = pos + np.column_stack([rng.normal(0.0, lateral_noise, size=(len(s), 2)), np.zeros(len(s))])
    head = head + np.radians(rng.normal(0.0, heading_noise_deg, size=len(s)))
    repeat = Trajectory(
        Frame(float(t), Pose(_camera_rotation(h), p), f"query/{i:06d}")
        for i, (t, p, h) in enumerate(zip(t_rep, pos, head))
    )
    return teach, repeat


def pair_configs(base, n_pairs, gamma_range=(0.8, 1.25), mixed=True):
    """Per-pair configs for a benchmark: alternating motion models, random gamma."""
    rng = np.random.default_rng(base.seed)
    out = []
    for i in range(n_pairs):
        model = MOTION_MODELS[i % 2] if mixed else base.motion_model
        gamma = float(rng.uniform(*gamma_range)) if gamma_range else base.gamma
        out.append(
            dataclasses.replace(
                base,
                seed=int(np.random.SeedSequence([base.seed, i]).generate_state(1)[0]),
                motion_model=model,
                gamma=gamma,
            )
        )
    return out
