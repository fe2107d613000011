import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from refalign.features import BRIEF_PATTERN
from refalign.kernels import _numpy

numba_impl = pytest.importorskip("refalign.kernels._numba")

seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_bilinear_sample_backends_agree(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 255, (30, 40))
    mx = rng.uniform(-3, 43, (12, 17))
    my = rng.uniform(-3, 33, (12, 17))
    a, va = _numpy.bilinear_sample(img, mx, my)
    b, vb = numba_impl.bilinear_sample(img, mx, my)
    assert np.array_equal(va, vb)
    assert np.allclose(a, b, atol=1e-9)


def test_bilinear_sample_integer_grid_is_exact(rng):
    img = rng.uniform(0, 255, (10, 12))
    ys, xs = np.mgrid[0:10, 0:12].astype(float)
    for impl in (_numpy, numba_impl):
        out, valid = impl.bilinear_sample(img, xs, ys)
        assert np.array_equal(out, img) and valid.all()


@given(seeds)
def test_fast_and_nms_backends_agree(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (25, 31), dtype=np.uint8)
    sa = _numpy.fast_score(img)
    sb = numba_impl.fast_score(img)
    assert np.array_equal(sa, sb)
    assert np.array_equal(_numpy.nonmax_suppression(sa), numba_impl.nonmax_suppression(sb))


@given(seeds)
def test_orientation_and_descriptor_backends_agree(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (80, 80), dtype=np.uint8)
    xs = rng.integers(20, 60, 10)
    ys = rng.integers(20, 60, 10)
    aa = _numpy.ic_angles(img, xs, ys, 15)
    ab = numba_impl.ic_angles(img, xs, ys, 15)
    assert np.allclose(aa, ab, atol=1e-12)
    assert np.array_equal(
        _numpy.steered_brief(img, xs, ys, aa, BRIEF_PATTERN),
        numba_impl.steered_brief(img, xs, ys, aa, BRIEF_PATTERN),
    )


@given(seeds)
def test_hamming_backends_agree(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (9, 32), dtype=np.uint8)
    b = rng.integers(0, 256, (300, 32), dtype=np.uint8)
    assert np.array_equal(_numpy.hamming_matrix(a, b), numba_impl.hamming_matrix(a, b))


@given(seeds)
def test_transfer_and_grid_backends_agree(seed):
    rng = np.random.default_rng(seed)
    h = np.eye(3) + rng.normal(0, 0.01, (3, 3))
    src = rng.uniform(0, 500, (50, 2))
    dst = rng.uniform(0, 500, (50, 2))
    assert np.allclose(_numpy.transfer_errors(h, src, dst), numba_impl.transfer_errors(h, src, dst), rtol=1e-12)
    assert np.array_equal(
        _numpy.grid_occupancy(dst, 500, 400, 4), numba_impl.grid_occupancy(dst, 500, 400, 4)
    )


def test_transfer_error_at_infinity_is_inf():
    h = np.array([[1.0, 0, 0], [0, 1, 0], [1, 0, 0]])
    src = np.array([[0.0, 3.0], [1.0, 1.0]])
    dst = np.zeros((2, 2))
    for impl in (_numpy, numba_impl):
        err = impl.transfer_errors(h, src, dst)
        assert np.isinf(err[0]) and np.isfinite(err[1])


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, REFALIGN_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from refalign import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_pipeline_identical_under_both_backends(tmp_path):
    # the whole detect/match/RANSAC path must not depend on the backend
    script = (
        "import numpy as np\n"
        "from refalign.synth import SynthConfig, generate_synthetic_pair\n"
        "from refalign.features import detect_features, match_features\n"
        "from refalign.robust import RansacConfig, ransac_homography\n"
        "p = generate_synthetic_pair(SynthConfig(width=320, height=240, seed=4))\n"
        "a = detect_features(p.query_img, 400); b = detect_features(p.ref_img, 400)\n"
        "m = match_features(a, b)\n"
        "r = ransac_homography(a.xy[m.query_idx], b.xy[m.ref_idx], (320, 240), RansacConfig(seed=2))\n"
        "print(len(a), len(b), len(m), r.n_inliers, r.score)\n"
        "print(np.array2string(r.homography, precision=6))\n"
    )
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, REFALIGN_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
        outs.append(res.stdout)
    assert outs[0] == outs[1]
