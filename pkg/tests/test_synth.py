import numpy as np
import pytest

from refalign.errors import InfeasibleConfigError
from refalign.evaluation import compute_pme
from refalign.geometry import normalize_homography, rotation_homography
from refalign.robust import dlt_homography
from refalign.synth import SynthConfig, generate_synthetic_pair, pair_configs, synthetic_matches


def test_identity_pair_is_bit_exact():
    p = generate_synthetic_pair(SynthConfig(rotation_deg=0, baseline=0, gamma=1.0))
    assert np.array_equal(p.query_img, p.ref_img)
    assert np.array_equal(p.true_h, np.eye(3))


def test_rotation_pair_self_consistent():
    p = generate_synthetic_pair(SynthConfig(rotation_deg=5, seed=8))
    assert compute_pme(p.true_h, p.correspondences) <= 1e-9
    # the poses imply the same homography
    h = rotation_homography(p.k_ref, p.k_query, p.ref_pose, p.query_pose_true)
    assert np.allclose(h, p.true_h, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_planar_pair_dlt_cross_check(seed):
    p = generate_synthetic_pair(SynthConfig(motion_model="planar-baseline", baseline=0.5, seed=seed))
    est = dlt_homography(p.correspondences.src, p.correspondences.dst)
    assert np.abs(normalize_homography(est) - normalize_homography(p.true_h)).max() < 1e-6


def test_query_matches_warp_of_reference():
    p = generate_synthetic_pair(SynthConfig(rotation_deg=3, seed=5))
    # sample the reference at true_h(q) for interior query pixels
    ys, xs = np.mgrid[100:260:20, 150:500:25]
    q = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    r = q @ p.true_h[:2, :2].T + p.true_h[:2, 2]
    w = q @ p.true_h[2, :2] + p.true_h[2, 2]
    r = r / w[:, None]
    ok = (r[:, 0] > 1) & (r[:, 0] < 638) & (r[:, 1] > 1) & (r[:, 1] < 358)
    ri = np.rint(r[ok]).astype(int)
    diff = np.abs(p.query_img[ys.ravel()[ok], xs.ravel()[ok]].astype(int) - p.ref_img[ri[:, 1], ri[:, 0]])
    assert np.median(diff) < 12


def test_gamma_changes_intensity_only():
    a = generate_synthetic_pair(SynthConfig(seed=4, gamma=1.0))
    b = generate_synthetic_pair(SynthConfig(seed=4, gamma=1.25))
    assert np.array_equal(a.true_h, b.true_h) and np.array_equal(a.ref_img, b.ref_img)
    assert b.query_img.mean() < a.query_img.mean()


def test_pose_noise_only_affects_reported_pose():
    p = generate_synthetic_pair(SynthConfig(seed=4, pose_noise_deg=1.0))
    assert not np.allclose(p.query_pose.rotation, p.query_pose_true.rotation)
    assert np.array_equal(p.query_pose.translation, p.query_pose_true.translation)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(width=100)
    with pytest.raises(ValueError):
        SynthConfig(outlier_fraction=1.0)
    with pytest.raises(ValueError):
        SynthConfig(motion_model="helical")


def test_camera_on_plane_is_infeasible():
    with pytest.raises(InfeasibleConfigError):
        generate_synthetic_pair(SynthConfig(motion_model="planar-baseline", baseline=4.5, plane_depth=1.0))


def test_planted_matches():
    h = np.eye(3)
    src, dst, is_in = synthetic_matches(h, 100, (640, 360), outlier_fraction=0.3)
    assert is_in.sum() == 70
    assert np.allclose(src[is_in], dst[is_in])


def test_pair_configs_alternate_models():
    cfgs = pair_configs(SynthConfig(seed=1), 4)
    assert [c.motion_model for c in cfgs] == ["pure-rotation", "planar-baseline"] * 2
    assert all(0.8 <= c.gamma <= 1.25 for c in cfgs)
    assert len({c.seed for c in cfgs}) == 4
