"""Input validation helpers used at public API boundaries."""

import numpy as np

from .errors import DataError, UsageError


def check_array_3d(values, name="values"):
    arr = np.asarray(values)
    if arr.ndim != 3:
        raise UsageError(f"{name} must be a 3D array, got shape {arr.shape}")
    if any(n < 1 for n in arr.shape):
        raise UsageError(f"{name} must have positive dims, got {arr.shape}")
    return arr


def check_triple(value, name, positive=False):
    """Coerce to a 3-tuple of floats, optionally requiring strict positivity."""
    try:
        triple = tuple(float(v) for v in value)
    except TypeError:
        raise UsageError(f"{name} must be a sequence of 3 numbers")
    if len(triple) != 3:
        raise UsageError(f"{name} must have length 3, got {len(triple)}")
    if not all(np.isfinite(triple)):
        raise UsageError(f"{name} must be finite, got {triple}")
    if positive and not all(v > 0 for v in triple):
        raise UsageError(f"{name} must be strictly positive, got {triple}")
    return triple


def check_aligned(grid, mask, rtol=1e-6):
    """Require identical dims and matching geometry between a grid and its mask."""
    if grid.dims != mask.dims:
        raise DataError(f"grid dims {grid.dims} != mask dims {mask.dims}")
    for ga, ma in zip(grid.spacing, mask.spacing):
        if abs(ga - ma) > rtol * max(abs(ga), abs(ma)):
            raise DataError(f"grid spacing {grid.spacing} != mask spacing {mask.spacing}")


def check_odd_kernel(kernel):
    kernel = int(kernel)
    if kernel < 3 or kernel % 2 == 0:
        raise UsageError(f"kernel must be an odd integer >= 3, got {kernel}")
    return kernel


def check_binary_labels(labels, name="labels", require_both=True):
    labels = np.asarray(labels).astype(int)
    if labels.ndim != 1:
        raise UsageError(f"{name} must be 1D")
    bad = set(np.unique(labels)) - {0, 1}
    if bad:
        raise DataError(f"{name} must be binary 0/1, found {sorted(bad)}")
    if require_both and (labels.sum() == 0 or labels.sum() == len(labels)):
        raise DataError(f"{name} must contain both classes")
    return labels


def check_threads(threads):
    threads = int(threads)
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")
    return threads
