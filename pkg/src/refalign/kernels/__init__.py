"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``REFALIGN_DISABLE_NUMBA=1``
(or run without numba installed) to force the numpy implementations.
"""
import os

_FLAG = "REFALIGN_DISABLE_NUMBA"


def numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no", "off")


def _load():
    if not numba_disabled():
        try:
            from . import _numba
        except ImportError:
            pass
        else:
            return _numba, "numba"
    from . import _numpy

    return _numpy, "numpy"


_impl, BACKEND = _load()

bilinear_sample = _impl.bilinear_sample
fast_score = _impl.fast_score
nonmax_suppression = _impl.nonmax_suppression
ic_angles = _impl.ic_angles
steered_brief = _impl.steered_brief
hamming_matrix = _impl.hamming_matrix
transfer_errors = _impl.transfer_errors
grid_occupancy = _impl.grid_occupancy

__all__ = [
    "BACKEND",
    "bilinear_sample",
    "fast_score",
    "nonmax_suppression",
    "ic_angles",
    "steered_brief",
    "hamming_matrix",
    "transfer_errors",
    "grid_occupancy",
]
