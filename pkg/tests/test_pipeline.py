import numpy as np
import pytest
from hypothesis import given, strategies as st

from refalign import io
from refalign.evaluation import compute_pme
from refalign.geometry import Pose
from refalign.pipeline import (
    AlignmentFailure,
    Frame,
    FramePair,
    PipelineConfig,
    Trajectory,
    WarpStrategy,
    align_frame_pairs,
    align_pair,
    associate_frames,
    pair_seed,
    select_strategy,
    translation_stats,
)
from refalign.synth import SynthConfig, generate_synthetic_pair, simulate_teach_repeat


def trajectory(positions, prefix="f"):
    return Trajectory(Frame(float(i), Pose(np.eye(3), p), f"{prefix}{i}") for i, p in enumerate(positions))


def frame_pair(pair):
    return FramePair(
        Frame(1.0, pair.query_pose, "q"),
        Frame(0.0, pair.ref_pose, "r"),
        float(np.linalg.norm(pair.query_pose.translation - pair.ref_pose.translation)),
        0.0,
    )


def test_trajectory_rejects_unordered():
    with pytest.raises(ValueError):
        Trajectory([Frame(1.0, Pose.identity(), "a"), Frame(1.0, Pose.identity(), "b")])


@given(st.integers(0, 2**32 - 1))
def test_association_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ref = trajectory(rng.uniform(0, 5, (40, 3)), "r")
    query = trajectory(rng.uniform(0, 5, (25, 3)), "q")
    pairs = associate_frames(query, ref, chunk=7)
    for i, p in enumerate(pairs):
        d = [np.linalg.norm(query[i].pose.translation - f.pose.translation) for f in ref]
        assert p.ref_index == int(np.argmin(d))
        assert p.translation_gap == pytest.approx(min(d), abs=1e-12)


def test_association_tie_goes_to_earlier_reference():
    ref = trajectory([[0, 0, 0], [2, 0, 0]], "r")
    query = trajectory([[1, 0, 0]], "q")
    assert associate_frames(query, ref)[0].ref_id == "r0"


def test_identical_trajectories_have_zero_gaps():
    pos = np.random.default_rng(0).uniform(0, 3, (10, 3))
    pairs = associate_frames(trajectory(pos), trajectory(pos))
    assert all(p.translation_gap == 0 and p.rotation_gap == 0 for p in pairs)


def test_strategy_gate():
    cfg = PipelineConfig()
    assert [select_strategy(g, cfg) for g in (0.0, 0.02, 0.0299, 0.03, 0.05)] == [
        WarpStrategy.ROTATION_THEN_PLANAR,
        WarpStrategy.ROTATION_THEN_PLANAR,
        WarpStrategy.ROTATION_THEN_PLANAR,
        WarpStrategy.PLANAR_ONLY,
        WarpStrategy.PLANAR_ONLY,
    ]


def test_translation_stats():
    hist = translation_stats([0.0, 0.004, 0.02, 0.031, 0.5])
    assert hist.counts.sum() == 5
    assert hist.counts[-1] == 1  # overflow bin
    assert hist.fraction_below_gate == pytest.approx(0.6)
    assert hist.cumulative[-1] == 1.0
    assert "fraction_below_gate=0.6000" in hist.format()


def test_pair_seed_is_stable():
    assert pair_seed(5, 3) == pair_seed(5, 3)
    assert pair_seed(5, 3) != pair_seed(5, 4)


def test_align_rotation_pair():
    pair = generate_synthetic_pair(SynthConfig(seed=1, rotation_deg=4, pose_noise_deg=0.5))
    res = align_pair(pair.query_img, pair.ref_img, frame_pair(pair), pair.k_ref, pair.k_query)
    assert res.strategy is WarpStrategy.ROTATION_THEN_PLANAR
    assert compute_pme(res.composed_h, pair.correspondences) < 1.0
    # refinement corrects the noisy pose
    assert compute_pme(res.composed_h, pair.correspondences) < compute_pme(res.pose_h, pair.correspondences)
    assert res.warped.shape == pair.ref_img.shape and res.valid_mask.dtype == bool


def test_align_planar_pair():
    pair = generate_synthetic_pair(SynthConfig(seed=2, motion_model="planar-baseline", rotation_deg=3))
    res = align_pair(pair.query_img, pair.ref_img, frame_pair(pair), pair.k_ref, pair.k_query)
    assert res.strategy is WarpStrategy.PLANAR_ONLY
    assert res.rotation_h is None and res.pose_h is not None
    assert compute_pme(res.composed_h, pair.correspondences) < 1.0


def test_align_is_deterministic():
    pair = generate_synthetic_pair(SynthConfig(seed=3, width=320, height=240))
    fp = frame_pair(pair)
    a = align_pair(pair.query_img, pair.ref_img, fp, pair.k_ref, pair.k_query)
    b = align_pair(pair.query_img, pair.ref_img, fp, pair.k_ref, pair.k_query)
    assert np.array_equal(a.composed_h, b.composed_h) and np.array_equal(a.warped, b.warped)


def test_batch_independent_of_workers(tmp_path):
    sources, pairs = [], []
    for i in range(3):
        p = generate_synthetic_pair(SynthConfig(seed=10 + i, width=320, height=240))
        q, r = tmp_path / f"q{i}.png", tmp_path / f"r{i}.png"
        io.save_image(q, p.query_img)
        io.save_image(r, p.ref_img)
        sources.append((q, r))
        pairs.append(frame_pair(p))
    # a flat image cannot be aligned and must come back as a failure record
    flat = tmp_path / "flat.png"
    io.save_image(flat, np.full((240, 320), 90, np.uint8))
    sources.append((flat, flat))
    pairs.append(pairs[0])
    k = SynthConfig(width=320, height=240).intrinsics
    qs, rs = zip(*sources)
    serial = align_frame_pairs(pairs, io.load_image, qs, rs, k, k, workers=1)
    parallel = align_frame_pairs(pairs, io.load_image, qs, rs, k, k, workers=2)
    assert isinstance(serial[-1], AlignmentFailure) and isinstance(parallel[-1], AlignmentFailure)
    assert serial[-1].reason == "InsufficientMatchesError"
    for a, b in zip(serial[:-1], parallel[:-1]):
        assert np.array_equal(a.composed_h, b.composed_h)


def test_teach_repeat_gap_fraction():
    teach, repeat = simulate_teach_repeat(seed=0)
    hist = translation_stats(associate_frames(repeat, teach))
    assert hist.fraction_below_gate > 0.85


def test_association_on_metre_grid():
    grid = [[x, y, 0.0] for x in range(-2, 3) for y in range(-2, 3)]
    pairs = associate_frames(trajectory([[0.4, 0, 0]], "q"), trajectory(grid, "r"))
    assert np.array_equal(pairs[0].ref_frame.pose.translation, [0, 0, 0])
    assert pairs[0].translation_gap == pytest.approx(0.4)


def test_association_large_against_oracle():
    rng = np.random.default_rng(9)
    ref = rng.uniform(-10, 10, (500, 3))
    query = rng.uniform(-10, 10, (100, 3))
    pairs = associate_frames(trajectory(query, "q"), trajectory(ref, "r"))
    oracle = [int(np.argmin(((ref - q) ** 2).sum(axis=1))) for q in query]
    assert [p.ref_index for p in pairs] == oracle


def test_translation_stats_simple_cases():
    zero = translation_stats([0.0] * 7)
    assert zero.counts[0] == 7 and zero.cumulative[0] == 1.0
    assert translation_stats([0.01, 0.02, 0.05], gate=0.03).fraction_below_gate == pytest.approx(2 / 3)


def corners(w, h):
    return np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], float)


def test_self_alignment_is_identity():
    from refalign.geometry import apply_homography

    pair = generate_synthetic_pair(SynthConfig(seed=6, rotation_deg=0))
    fp = frame_pair(pair)
    res = align_pair(pair.ref_img, pair.ref_img, fp, pair.k_ref, pair.k_query)
    c = corners(640, 360)
    assert np.abs(apply_homography(res.composed_h, c) - c).max() < 1e-3


def test_rotation_pair_corner_error():
    from refalign.geometry import apply_homography

    pair = generate_synthetic_pair(SynthConfig(seed=12, rotation_deg=5))
    res = align_pair(pair.query_img, pair.ref_img, frame_pair(pair), pair.k_ref, pair.k_query)
    assert res.strategy is WarpStrategy.ROTATION_THEN_PLANAR
    c = corners(640, 360)
    err = np.linalg.norm(apply_homography(res.composed_h, c) - apply_homography(pair.true_h, c), axis=1)
    assert err.max() < 0.5
