"""Shared random builders and hypothesis strategies for the tests."""

import numpy as np
from hypothesis import strategies as st

from radbev.boxes import Box3D
from radbev.geometry import RigidTransform


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(rng: np.random.Generator, scale: float = 10.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


def random_points(rng: np.random.Generator, n: int, extent=(0.0, 10.0, -5.0, 5.0), margin: float = 1.0,
                  sweeps: int = 1) -> np.ndarray:
    """(n, 13) radar rows, some slightly outside ``extent``."""
    x0, x1, y0, y1 = extent
    pts = np.zeros((n, 13))
    pts[:, 0] = rng.uniform(x0 - margin, x1 + margin, n)
    pts[:, 1] = rng.uniform(y0 - margin, y1 + margin, n)
    pts[:, 2:4] = rng.normal(0, 3, (n, 2))
    pts[:, 4] = rng.uniform(-20, 20, n)
    pts[:, 5] = rng.integers(0, 3, n)
    pts[:, 6] = rng.integers(0, 5, n)
    pts[:, 7] = rng.integers(0, 8, n)
    pts[:, 8:12] = rng.uniform(0, 3, (n, 4))
    pts[:, 12] = rng.integers(0, sweeps, n)
    return pts


def box(x, y, cls="car", score=1.0, yaw=0.0, size=(2.0, 4.0, 1.5), velocity=(0.0, 0.0), attribute="", z=0.0):
    return Box3D((x, y, z), size, yaw, velocity, cls, attribute, score)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
unit = st.floats(0, 1, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)
