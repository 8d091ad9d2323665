import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radiomap import MaskGrid, VolumeGrid
from radiomap.preprocess import discretize


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_case(rng, dims=(5, 5, 5), ng=4, mask_prob=0.85, spacing=(1.0, 1.0, 1.0)):
    """Random discretizable volume + mask pair with a guaranteed nonempty mask."""
    values = rng.integers(0, ng, size=dims).astype(np.float64)
    labels = (rng.random(dims) < mask_prob).astype(np.int32)
    if labels.sum() == 0:
        labels[tuple(d // 2 for d in dims)] = 1
    return VolumeGrid(values, spacing), MaskGrid(labels, spacing)


def disc_of(grid, mask, ng):
    return discretize(grid, mask, "fixed_bin_count", bin_count=ng)
