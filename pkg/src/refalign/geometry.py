"""Rigid-body and projective primitives.

Pose convention (used everywhere in the package): a pose is the camera's
placement in the world, ``X_world = rotation @ x_cam + translation``. The
translation is therefore the camera centre, which is what the trajectory
files store and what frame association measures distances between.

Homographies are plain ``(3, 3)`` float arrays mapping *query* pixels to
*reference* pixels. Constructors return them normalised by
:func:`normalize_homography`.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import kernels
from .errors import DegeneratePlaneError, PointAtInfinityError, SingularHomographyError

ORTHONORMAL_TOL = 1e-9
SINGULAR_DET = 1e-12
INFINITY_EPS = 1e-12
_H33_EPS = 1e-9
_PLANE_EPS = 1e-9


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _readonly(self.rotation)
        t = _readonly(self.translation).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        if np.abs(r @ r.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, quat_xyzw, translation):
        """Build from a scalar-last quaternion; the quaternion is normalised."""
        rot = Rotation.from_quat(np.asarray(quat_xyzw, dtype=np.float64)).as_matrix()
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-12:
            u, _, vt = np.linalg.svd(rot)
            rot = u @ vt
        return cls(rot, translation)

    def quaternion(self):
        """Scalar-last unit quaternion with non-negative w."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    @property
    def center(self):
        return self.translation

    def world_to_camera(self, points):
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    def camera_to_world(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self):
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_fov(cls, width, height, hfov_deg):
        fx = 0.5 * width / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(fx, fx, (width - 1) / 2.0, (height - 1) / 2.0)


@dataclass(frozen=True, eq=False)
class PlaneParams:
    """Plane ``normal . x = depth`` expressed in the reference camera frame."""

    normal: np.ndarray
    depth: float

    def __post_init__(self):
        n = _readonly(self.normal).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("plane normal must be a unit vector")
        if not self.depth > 0:
            raise ValueError("plane depth must be positive")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "depth", float(self.depth))

    @classmethod
    def from_vector(cls, normal, depth):
        n = np.asarray(normal, dtype=np.float64)
        return cls(n / np.linalg.norm(n), depth)


def normalize_homography(h):
    """Scale so h[2, 2] == 1 (or unit Frobenius norm when h[2, 2] ~ 0)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3) or not np.all(np.isfinite(h)):
        raise SingularHomographyError("homography must be a finite 3x3 matrix")
    if abs(h[2, 2]) > _H33_EPS:
        out = h / h[2, 2]
    else:
        norm = np.linalg.norm(h)
        if norm == 0.0:
            raise SingularHomographyError("zero matrix is not a homography")
        out = h / norm
    if abs(np.linalg.det(out)) <= SINGULAR_DET:
        raise SingularHomographyError(f"homography is singular (det={np.linalg.det(out):.3g})")
    return out


def relative_motion(ref, query):
    """Relative rotation ``R2 @ R1.T`` and translation ``T2 - T1`` (world frame)."""
    return query.rotation @ ref.rotation.T, query.translation - ref.translation


def _camera_frame_motion(ref, query):
    # Express the relative motion in the reference camera frame so that
    # x_ref = rot @ x_query + trans. With ref.rotation = I this is exactly
    # (R2 R1^T, T2 - T1).
    rot, trans = relative_motion(ref, query)
    r1 = ref.rotation
    return r1.T @ rot @ r1, r1.T @ trans


def _from_camera_matrix(k_ref, k_query, m):
    return normalize_homography(k_ref.matrix @ m @ k_query.inverse)


def rotation_homography(k_ref, k_query, ref, query):
    """Rotation-induced homography mapping query pixels to reference pixels."""
    rot, _ = _camera_frame_motion(ref, query)
    return _from_camera_matrix(k_ref, k_query, rot)


def planar_homography_from_motion(k_ref, k_query, ref, query, plane):
    """Plane-induced homography (query -> reference) for ``plane`` in the reference frame.

    Reduces bit-exactly to :func:`rotation_homography` when the camera
    centres coincide.
    """
    rot, trans = _camera_frame_motion(ref, query)
    n_query = rot.T @ plane.normal
    d_query = plane.depth - plane.normal @ trans
    if abs(d_query) < _PLANE_EPS * max(1.0, plane.depth):
        raise DegeneratePlaneError("query camera centre lies on the plane")
    m = rot + np.outer(trans, n_query) / d_query
    return _from_camera_matrix(k_ref, k_query, m)


def project(k, pose, points_world):
    """Pinhole projection of world points; returns (N, 2) pixels and depths."""
    cam = pose.world_to_camera(np.atleast_2d(points_world))
    z = cam[:, 2]
    uv = np.column_stack(
        [k.fx * cam[:, 0] / z + k.cx, k.fy * cam[:, 1] / z + k.cy]
    )
    return uv, z


def apply_homography(h, points):
    """Map points (shape ``(2,)`` or ``(N, 2)``) through ``h``.

    Raises PointAtInfinityError if any point lands at infinity.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    hom = pts @ h[:, :2].T + h[:, 2]
    w = hom[:, 2]
    if np.any(np.abs(w) < INFINITY_EPS):
        raise PointAtInfinityError("point maps to infinity")
    out = hom[:, :2] / w[:, None]
    return out[0] if single else out


def compose(outer, inner):
    """Homography applying ``inner`` first, then ``outer``."""
    return normalize_homography(np.asarray(outer) @ np.asarray(inner))


def invert_homography(h):
    return normalize_homography(np.linalg.inv(h))


def rotation_angle(rot):
    """Geodesic angle of a rotation matrix, radians in [0, pi]."""
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _sample_channel(channel, h_inv, width, height):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    x = h_inv[0, 0] * xs + h_inv[0, 1] * ys + h_inv[0, 2]
    y = h_inv[1, 0] * xs + h_inv[1, 1] * ys + h_inv[1, 2]
    w = h_inv[2, 0] * xs + h_inv[2, 1] * ys + h_inv[2, 2]
    at_inf = np.abs(w) < INFINITY_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        map_x = np.where(at_inf, np.nan, x / w)
        map_y = np.where(at_inf, np.nan, y / w)
    return kernels.bilinear_sample(channel, map_x, map_y)


def warp_image(img, h, out_size=None):
    """Warp ``img`` by ``h`` (source -> output) with bilinear inverse mapping.

    ``out_size`` is ``(width, height)`` and defaults to the input size.
    Returns ``(warped, valid)``; pixels whose pre-image falls outside the
    source are set to 0 and flagged invalid. Integer images are rounded back
    to their dtype.
    """
    img = np.asarray(img)
    if out_size is None:
        out_size = (img.shape[1], img.shape[0])
    width, height = int(out_size[0]), int(out_size[1])
    try:
        h_inv = np.linalg.inv(np.asarray(h, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise SingularHomographyError("cannot warp by a singular homography") from exc

    channels = img[..., None] if img.ndim == 2 else img
    out = np.empty((height, width, channels.shape[2]), dtype=np.float64)
    valid = None
    for c in range(channels.shape[2]):
        out[..., c], valid = _sample_channel(
            channels[..., c].astype(np.float64), h_inv, width, height
        )
    if img.ndim == 2:
        out = out[..., 0]
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out, valid
