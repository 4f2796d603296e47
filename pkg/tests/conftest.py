import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lesionkit.volume import Volume


def smooth_phantom(dims=(64, 64, 64), n_blobs=24, seed=7, spacing=(1.0, 1.0, 1.0)):
    """Sum of random Gaussian blobs: smooth, structured, strictly positive."""
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    data = np.zeros(dims)
    for _ in range(n_blobs):
        c = rng.uniform(0.2, 0.8, size=3) * np.asarray(dims)
        sigma = rng.uniform(3.0, 9.0)
        amp = rng.uniform(30.0, 100.0)
        d2 = sum((g - ci) ** 2 for g, ci in zip(grids, c))
        data += amp * np.exp(-d2 / (2 * sigma**2))
    data += 10.0
    affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])
    return Volume(data, affine)


def ball_mask(dims, center, radius):
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return (d2 <= radius**2).astype(np.float32)


@pytest.fixture(scope="session")
def phantom64():
    return smooth_phantom()


@pytest.fixture(scope="session")
def phantom32():
    return smooth_phantom(dims=(32, 32, 32), n_blobs=12, seed=3)
