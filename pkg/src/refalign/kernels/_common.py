"""Constants shared by both kernel backends."""
from functools import lru_cache

import numpy as np

# |w| below this means a homogeneous point is at infinity
INFINITY_EPS = 1e-12

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
FAST_CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
FAST_CIRCLE_ARRAY = np.array(FAST_CIRCLE, dtype=np.int64)


@lru_cache(maxsize=None)
def disk_offsets(radius):
    r = int(radius)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    inside = dx * dx + dy * dy <= r * r
    return dx[inside].astype(np.int64), dy[inside].astype(np.int64)
