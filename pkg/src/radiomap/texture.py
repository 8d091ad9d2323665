"""Gray-level co-occurrence, run-length, and neighborhood-tone-difference matrices.

All three builders operate on a :class:`~radiomap.preprocess.DiscretizedVolume`
whose level array is 0 outside the mask. Neighborhoods never cross the mask
boundary: pairs need both voxels in-mask, runs break on mask exit, and NGTDM
neighbour means use in-mask 26-neighbours only.

Offsets are the 13 unique 3D directions at Chebyshev distance 1 (each
opposite pair counted once).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import convolve

DIRECTIONS_13 = (
    (0, 0, 1), (0, 1, -1), (0, 1, 0), (0, 1, 1),
    (1, -1, -1), (1, -1, 0), (1, -1, 1),
    (1, 0, -1), (1, 0, 0), (1, 0, 1),
    (1, 1, -1), (1, 1, 0), (1, 1, 1),
)


@dataclass
class GlcmSet:
    """Per-direction symmetric co-occurrence matrices.

    ``counts`` holds raw symmetrized pair counts, ``probs`` the per-direction
    normalization (all-zero where a direction has no pairs).
    """

    ng: int
    counts: np.ndarray      # (n_dirs, Ng, Ng)
    probs: np.ndarray       # (n_dirs, Ng, Ng)
    nonempty: np.ndarray    # (n_dirs,) bool
    directions: tuple = DIRECTIONS_13

    @property
    def is_empty(self):
        return not bool(self.nonempty.any())


@dataclass
class GlrlmSet:
    """Per-direction run-length count matrices, entry (i, r-1) = runs of level i+1, length r."""

    ng: int
    matrices: np.ndarray    # (n_dirs, Ng, Rmax)
    n_voxels: int
    directions: tuple = DIRECTIONS_13

    @property
    def is_empty(self):
        return self.n_voxels == 0


@dataclass
class Ngtdm:
    """Per-level voxel counts, probabilities, and accumulated tone differences."""

    ng: int
    n_i: np.ndarray   # (Ng,) voxels per level (only those with >=1 in-mask neighbour)
    p_i: np.ndarray   # (Ng,)
    s_i: np.ndarray   # (Ng,)

    @property
    def n_total(self):
        return int(self.n_i.sum())

    @property
    def is_empty(self):
        return self.n_total == 0


def _shifted_views(shape, offset):
    """Source/destination slice tuples for a voxel and its neighbour at ``offset``."""
    src, dst = [], []
    for n, d in zip(shape, offset):
        if d == 0:
            src.append(slice(0, n))
            dst.append(slice(0, n))
        elif d > 0:
            src.append(slice(0, n - d))
            dst.append(slice(d, n))
        else:
            src.append(slice(-d, n))
            dst.append(slice(0, n + d))
    return tuple(src), tuple(dst)


@lru_cache(maxsize=512)
def _pair_indices(shape, directions):
    """Flat (source, destination, direction-id) index triples for all
    neighbour pairs of a grid of ``shape``, cached per shape."""
    flat_idx = np.arange(int(np.prod(shape)), dtype=np.intp).reshape(shape)
    src_all, dst_all, dir_all = [], [], []
    for k, d in enumerate(directions):
        src, dst = _shifted_views(shape, d)
        s = flat_idx[src].ravel()
        src_all.append(s)
        dst_all.append(flat_idx[dst].ravel())
        dir_all.append(np.full(s.size, k, dtype=np.int64))
    return (np.concatenate(src_all), np.concatenate(dst_all),
            np.concatenate(dir_all))


def glcm(disc, directions=DIRECTIONS_13):
    """Symmetrized, per-direction-normalized co-occurrence matrices.

    Pairs are counted only when both voxels are in-mask; symmetrization adds
    the transpose. A single-voxel mask leaves every direction empty, which the
    returned set flags rather than raising.
    """
    ng = disc.ng
    levels = disc.levels
    n_dirs = len(directions)
    src, dst, dir_id = _pair_indices(levels.shape, tuple(directions))
    flat = levels.ravel()
    a = flat[src].astype(np.int64)
    b = flat[dst].astype(np.int64)
    valid = (a > 0) & (b > 0)
    code = (dir_id[valid] * ng + (a[valid] - 1)) * ng + (b[valid] - 1)
    counts = np.bincount(code, minlength=n_dirs * ng * ng).astype(np.float64)
    counts = counts.reshape(n_dirs, ng, ng)
    counts = counts + counts.transpose(0, 2, 1)
    sums = counts.sum(axis=(1, 2), keepdims=True)
    nonempty = sums[:, 0, 0] > 0
    probs = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
    return GlcmSet(ng, counts, probs, nonempty, tuple(directions))


@lru_cache(maxsize=512)
def _line_order(shape, direction):
    """Traversal order grouping voxels into lines along ``direction``.

    Returns (order, new_line): ``order`` ravels a C-ordered index array so
    consecutive entries on the same line step by exactly ``direction``;
    ``new_line`` marks the first voxel of each line.
    """
    idx = np.indices(shape).reshape(3, -1)
    d = np.array(direction, dtype=np.int64)
    primary = int(np.argmax(d != 0))
    step = idx[primary] * (1 if d[primary] > 0 else -1)
    anchor = idx - step[None, :] * d[:, None]
    order = np.lexsort((step, anchor[2], anchor[1], anchor[0]))
    step_o = step[order]
    anchor_o = anchor[:, order]
    new_line = np.empty(order.size, dtype=bool)
    new_line[0] = True
    new_line[1:] = (np.diff(step_o) != 1) | (anchor_o[:, 1:] != anchor_o[:, :-1]).any(axis=0)
    return order, new_line


@lru_cache(maxsize=512)
def _all_line_orders(shape, directions):
    """Concatenated per-direction line traversals, cached per shape.

    Each direction contributes a block of exactly prod(shape) entries, so an
    entry's direction is its position // prod(shape).
    """
    orders, new_lines = [], []
    for d in directions:
        order, new_line = _line_order(shape, d)
        orders.append(order)
        new_lines.append(new_line)
    return np.concatenate(orders), np.concatenate(new_lines)


def glrlm(disc, directions=DIRECTIONS_13):
    """Maximal-run counts per direction.

    A run is broken by a level change, mask exit, or the volume boundary.
    Mass conservation holds per direction: sum over (i, r) of r*M[i][r]
    equals the in-mask voxel count.
    """
    ng = disc.ng
    levels = disc.levels
    n_vox = int(np.count_nonzero(levels))
    rmax = max(levels.shape)
    n_dirs = len(directions)
    n = levels.size
    order, new_line = _all_line_orders(levels.shape, tuple(directions))
    lv = levels.ravel()[order].astype(np.int64)
    starts = new_line.copy()
    starts[1:] |= lv[1:] != lv[:-1]
    start_idx = np.flatnonzero(starts)
    run_len = np.diff(np.append(start_idx, lv.size))
    run_lv = lv[start_idx]
    keep = run_lv > 0
    code = ((start_idx[keep] // n) * ng + (run_lv[keep] - 1)) * rmax + (run_len[keep] - 1)
    mats = np.bincount(code, minlength=n_dirs * ng * rmax).astype(np.float64)
    return GlrlmSet(ng, mats.reshape(n_dirs, ng, rmax), n_vox, tuple(directions))


_NEIGHBOR_KERNEL = np.ones((3, 3, 3), dtype=np.int64)
_NEIGHBOR_KERNEL[1, 1, 1] = 0


def ngtdm(disc):
    """Neighborhood gray-tone difference accumulation.

    Voxels without any in-mask 26-neighbour are excluded from N, n_i and s_i;
    an all-isolated mask yields an empty (flagged) result.
    """
    ng = disc.ng
    levels = disc.levels.astype(np.int64)
    inm = levels > 0
    nb_sum = convolve(levels * inm, _NEIGHBOR_KERNEL, mode="constant", cval=0)
    nb_cnt = convolve(inm.astype(np.int64), _NEIGHBOR_KERNEL, mode="constant", cval=0)
    use = inm & (nb_cnt > 0)

    n_i = np.zeros(ng, dtype=np.int64)
    s_i = np.zeros(ng, dtype=np.float64)
    if use.any():
        lv = levels[use]
        diff = np.abs(lv.astype(np.float64) - nb_sum[use] / nb_cnt[use])
        n_i = np.bincount(lv - 1, minlength=ng)
        s_i = np.bincount(lv - 1, weights=diff, minlength=ng)
    total = n_i.sum()
    p_i = n_i / total if total > 0 else np.zeros(ng, dtype=np.float64)
    return Ngtdm(ng, n_i.astype(np.int64), p_i, s_i)
