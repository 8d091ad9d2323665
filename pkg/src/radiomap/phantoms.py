"""Synthetic phantoms and cohorts for a self-contained test bed.

Everything is a pure function of its spec and seed. Textured blobs give the
two classes different noise correlation lengths (and optionally a mean
shift), so co-occurrence and tone-difference features separate them by
construction — no claim of resembling real CT.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import UsageError
from .grid_io import MaskGrid, VolumeGrid, write_mask, write_volume
from .selection import FeatureTable

PHANTOM_KINDS = ("ball", "box", "line", "textured_blob")


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "ball"
    dims: tuple = (48, 48, 48)
    spacing: tuple = (1.0, 1.0, 1.0)
    size_mm: object = 20.0        # radius for ball/blob; extent triple for box/line
    seed: int = 0
    texture_class: int = 0        # textured_blob only
    smooth_sigma_mm: tuple = (0.6, 2.4)  # per-class noise correlation length
    class_shift: float = 10.0     # per-class mean offset
    noise_scale: float = 25.0
    base_intensity: float = 60.0


def _center_mm(spec):
    return tuple((d - 1) * s / 2.0 for d, s in zip(spec.dims, spec.spacing))


def _coord_grids(spec):
    axes = [np.arange(n) * s for n, s in zip(spec.dims, spec.spacing)]
    return np.meshgrid(*axes, indexing="ij")


def _ball_mask(spec, radius_mm):
    xx, yy, zz = _coord_grids(spec)
    cx, cy, cz = _center_mm(spec)
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2
    return d2 <= radius_mm ** 2


def _box_mask(spec, extents_mm):
    xx, yy, zz = _coord_grids(spec)
    center = _center_mm(spec)
    half = [e / 2.0 for e in extents_mm]
    return ((np.abs(xx - center[0]) <= half[0])
            & (np.abs(yy - center[1]) <= half[1])
            & (np.abs(zz - center[2]) <= half[2]))


def make_phantom(spec):
    """Build a (VolumeGrid, MaskGrid) pair from a spec. Deterministic by seed."""
    if spec.kind not in PHANTOM_KINDS:
        raise UsageError(f"unknown phantom kind {spec.kind!r}, expected {PHANTOM_KINDS}")
    rng = np.random.default_rng(spec.seed)

    if spec.kind in ("ball", "textured_blob"):
        fg = _ball_mask(spec, float(spec.size_mm))
    elif spec.kind == "box":
        fg = _box_mask(spec, tuple(float(e) for e in spec.size_mm))
    else:  # line: a 1-voxel-thick rod along z of the requested length
        length_mm = float(spec.size_mm if np.isscalar(spec.size_mm) else spec.size_mm[2])
        fg = np.zeros(spec.dims, dtype=bool)
        cx = (spec.dims[0] - 1) // 2
        cy = (spec.dims[1] - 1) // 2
        n_vox = max(1, int(round(length_mm / spec.spacing[2])))
        z0 = max(0, (spec.dims[2] - n_vox) // 2)
        fg[cx, cy, z0:z0 + min(n_vox, spec.dims[2])] = True
    if not fg.any():
        raise UsageError("phantom spec produced an empty mask")

    if spec.kind == "textured_blob":
        cls = int(spec.texture_class)
        sigma_mm = spec.smooth_sigma_mm[cls % len(spec.smooth_sigma_mm)]
        sigma_vox = [sigma_mm / s for s in spec.spacing]
        noise = gaussian_filter(rng.standard_normal(spec.dims), sigma=sigma_vox)
        sd = noise.std()
        if sd > 0:
            noise = noise / sd
        values = spec.base_intensity + cls * spec.class_shift + spec.noise_scale * noise
    else:
        values = np.full(spec.dims, spec.base_intensity, dtype=np.float64)
        values[fg] += spec.noise_scale  # step contrast at the boundary

    grid = VolumeGrid(values.astype(np.float64), spec.spacing)
    mask = MaskGrid(fg.astype(np.int32), spec.spacing)
    return grid, mask


def make_cohort(n_pos, n_neg, n_features=50, n_signal=3, effect=1.5, seed=0,
                size_range=(100, 2400)):
    """Feature table with planted class-shifted Gaussian columns.

    The first ``n_signal`` columns are N(0,1) + effect*label; the rest are
    independent noise. Positive lesion sizes spread across stratification
    bins; negatives are 0.
    """
    if n_signal > n_features:
        raise UsageError("n_signal cannot exceed n_features")
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    labels = np.array([1] * n_pos + [0] * n_neg, dtype=np.int64)
    X = rng.standard_normal((n, n_features))
    X[:, :n_signal] += effect * labels[:, None]
    sizes = np.where(labels == 1,
                     rng.integers(size_range[0], size_range[1], size=n), 0)
    ids = [f"case{i:04d}" for i in range(n)]
    names = ([f"signal_{j}" for j in range(n_signal)]
             + [f"noise_{j}" for j in range(n_features - n_signal)])
    return FeatureTable(ids, names, X, labels, sizes)


def write_cohort_volumes(out_dir, n_pos=20, n_neg=20, dims=(32, 32, 32),
                         radius_range_mm=(8.0, 12.0), seed=0, fmt="nifti1"):
    """Materialize a textured-blob cohort as image/mask files plus labels.csv.

    Files follow the CLI's discovery convention: ``<case>_image`` and
    ``<case>_mask``. Returns the labels CSV path.
    """
    os.makedirs(out_dir, exist_ok=True)
    ext = {"nifti1": ".nii.gz", "rawjson": ".json"}[fmt]
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_pos + n_neg):
        label = 1 if i < n_pos else 0
        radius = float(rng.uniform(*radius_range_mm))
        spec = PhantomSpec(kind="textured_blob", dims=dims, size_mm=radius,
                           seed=seed + 1000 + i, texture_class=label)
        grid, mask = make_phantom(spec)
        cid = f"case{i:04d}"
        write_volume(grid, os.path.join(out_dir, cid + "_image" + ext), fmt)
        write_mask(mask, os.path.join(out_dir, cid + "_mask" + ext), fmt)
        rows.append((cid, label, mask.count() if label else 0))
    labels_path = os.path.join(out_dir, "labels.csv")
    with open(labels_path, "w") as fh:
        fh.write("case_id,label,lesion_size_voxels\n")
        for cid, label, size in rows:
            fh.write(f"{cid},{label},{size}\n")
    return labels_path
