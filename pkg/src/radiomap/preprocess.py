"""Geometric and intensity preprocessing.

Resampling keeps the origin fixed: output voxel ``i`` is sampled at physical
position ``origin + i * target_spacing``, so the continuous input index is
``i * target_spacing / spacing``. Nearest-neighbour rounding is
``floor(index + 0.5)`` (round half up) for determinism.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DataError, EmptyMaskError, UsageError
from .grid_io import MaskGrid, VolumeGrid
from .validation import check_triple


class UnderresolvedSigmaWarning(UserWarning):
    """LoG sigma below half a voxel in some axis; result kept but flagged."""


class RoiClampWarning(UserWarning):
    """Requested ROI exceeded the volume and was clamped."""


@dataclass
class RoiBox:
    """Axis-aligned crop box in voxel indices."""

    start: tuple
    size: tuple
    physical_size: tuple
    clamped: bool = False

    def slices(self):
        return tuple(slice(s, s + n) for s, n in zip(self.start, self.size))


@dataclass
class DiscretizedVolume:
    """Gray levels 1..Ng for in-mask voxels, 0 outside the mask."""

    levels: np.ndarray
    ng: int
    mode: str            # "fixed_bin_width" or "fixed_bin_count"
    param: float
    bin_edges: np.ndarray
    spacing: tuple

    def in_mask(self):
        return self.levels > 0


def resample(grid, target_spacing, interp="trilinear"):
    """Resample a grid to a new spacing; 'nearest' for masks, 'trilinear' for images."""
    target = check_triple(target_spacing, "target_spacing", positive=True)
    if interp not in ("nearest", "trilinear"):
        raise UsageError(f"interp must be 'nearest' or 'trilinear', got {interp!r}")

    is_mask = isinstance(grid, MaskGrid)
    if is_mask and interp != "nearest":
        raise UsageError("masks must be resampled with interp='nearest'")
    values = grid.labels if is_mask else grid.values
    spacing = grid.spacing
    dims = values.shape

    out_dims = tuple(
        max(1, math.ceil(dims[k] * spacing[k] / target[k])) for k in range(3))
    if out_dims == dims and all(abs(t - s) < 1e-12 for t, s in zip(target, spacing)):
        out = values.copy()
    else:
        # Continuous input index of every output voxel center, per axis.
        coords = [
            np.arange(out_dims[k], dtype=np.float64) * (target[k] / spacing[k])
            for k in range(3)
        ]
        if interp == "nearest":
            idx = [
                np.clip(np.floor(c + 0.5).astype(np.intp), 0, dims[k] - 1)
                for k, c in enumerate(coords)
            ]
            out = values[np.ix_(idx[0], idx[1], idx[2])]
        else:
            out = _trilinear(values.astype(np.float64), coords)

    if is_mask:
        return MaskGrid(out.astype(np.int32), target, grid.origin)
    return VolumeGrid(out, target, grid.origin, allow_nan=grid.allow_nan)


def _trilinear(values, coords):
    dims = values.shape
    lo, frac = [], []
    for k, c in enumerate(coords):
        c = np.clip(c, 0.0, dims[k] - 1.0)
        f = np.floor(c)
        lo.append(f.astype(np.intp))
        frac.append(c - f)
    hi = [np.minimum(lo[k] + 1, dims[k] - 1) for k in range(3)]

    out = np.zeros(tuple(len(c) for c in coords), dtype=np.float64)
    wx = [1.0 - frac[0], frac[0]]
    wy = [1.0 - frac[1], frac[1]]
    wz = [1.0 - frac[2], frac[2]]
    ix = [lo[0], hi[0]]
    iy = [lo[1], hi[1]]
    iz = [lo[2], hi[2]]
    for a in range(2):
        for b in range(2):
            for c in range(2):
                w = (wx[a][:, None, None] * wy[b][None, :, None] * wz[c][None, None, :])
                out += w * values[np.ix_(ix[a], iy[b], iz[c])]
    return out


def roi_from_mask(mask, physical_size):
    """Fixed-physical-size box centered on the mask centroid, kept in bounds.

    The box is shifted inward when it would cross a volume face; size is only
    reduced (with a warning and ``clamped=True``) when the request exceeds the
    whole volume.
    """
    physical = check_triple(physical_size, "physical_size", positive=True)
    if mask.count() == 0:
        raise EmptyMaskError("roi_from_mask requires a nonempty mask")

    centroid = mask.centroid_voxel()
    dims = mask.dims
    start, size = [], []
    clamped = False
    for k in range(3):
        n = max(1, int(round(physical[k] / mask.spacing[k])))
        if n > dims[k]:
            n = dims[k]
            clamped = True
        c = int(math.floor(centroid[k] + 0.5))
        s = c - n // 2
        s = min(max(s, 0), dims[k] - n)
        start.append(s)
        size.append(n)
    if clamped:
        warnings.warn(
            f"ROI {physical} mm exceeds volume extent; clamped to {tuple(size)} voxels",
            RoiClampWarning, stacklevel=2)
    return RoiBox(tuple(start), tuple(size), physical, clamped=clamped)


def crop(grid, box):
    """Crop a VolumeGrid or MaskGrid to a RoiBox, shifting the origin."""
    sl = box.slices()
    origin = tuple(grid.origin[k] + box.start[k] * grid.spacing[k] for k in range(3))
    if isinstance(grid, MaskGrid):
        return MaskGrid(grid.labels[sl].copy(), grid.spacing, origin)
    return VolumeGrid(grid.values[sl].copy(), grid.spacing, origin, allow_nan=grid.allow_nan)


def discretize(grid, mask, mode="fixed_bin_width", bin_width=25.0, bin_count=32):
    """Map in-mask intensities to gray levels 1..Ng; 0 outside the mask.

    fixed_bin_width: edges at multiples of ``bin_width`` starting from
    ``floor(min/width)*width``. fixed_bin_count: exactly ``bin_count``
    equal-width bins spanning [min, max] of the in-mask intensities.
    A constant in-mask region always yields Ng = 1.
    """
    if mode not in ("fixed_bin_width", "fixed_bin_count"):
        raise UsageError(f"unknown discretization mode {mode!r}")
    fg = mask.foreground()
    if not fg.any():
        raise EmptyMaskError("discretize requires a nonempty mask")
    vals = grid.values[fg]
    if np.all(np.isnan(vals)):
        raise DataError("all in-mask intensities are NaN")
    vmin = float(np.nanmin(vals))
    vmax = float(np.nanmax(vals))

    levels = np.zeros(grid.dims, dtype=np.int32)
    if vmax == vmin:
        levels[fg] = 1
        edges = np.array([vmin, vmax])
        param = bin_width if mode == "fixed_bin_width" else bin_count
        return DiscretizedVolume(levels, 1, mode, float(param), edges, grid.spacing)

    if mode == "fixed_bin_width":
        if bin_width <= 0:
            raise UsageError(f"bin_width must be > 0, got {bin_width}")
        base = math.floor(vmin / bin_width) * bin_width
        lv = np.floor((grid.values - base) / bin_width).astype(np.int64) + 1
        ng = int(math.floor((vmax - base) / bin_width)) + 1
        lv = np.clip(lv, 1, ng)
        edges = base + bin_width * np.arange(ng + 1)
        param = bin_width
    else:
        bin_count = int(bin_count)
        if bin_count < 1:
            raise UsageError(f"bin_count must be >= 1, got {bin_count}")
        ng = bin_count
        width = (vmax - vmin) / ng
        lv = np.floor((grid.values - vmin) / width).astype(np.int64) + 1
        lv = np.clip(lv, 1, ng)  # vmax lands in the top bin
        edges = vmin + width * np.arange(ng + 1)
        param = bin_count

    levels[fg] = lv[fg].astype(np.int32)
    return DiscretizedVolume(levels, ng, mode, float(param), edges, grid.spacing)


def gaussian_kernel_1d(sigma_vox):
    """Normalized Gaussian taps truncated at 4 sigma (radius >= 1)."""
    radius = max(1, int(math.ceil(4.0 * sigma_vox)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma_vox) ** 2)
    return k / k.sum()


def log_filter(grid, sigma_mm):
    """Scale-normalized Laplacian of Gaussian.

    Separable Gaussian blur (per-axis sigma in voxels, kernel truncated at
    4 sigma and renormalized, mirror boundaries), followed by the 6-neighbour
    Laplacian in physical units, scaled by sigma_mm**2.
    """
    sigma_mm = float(sigma_mm)
    if sigma_mm <= 0:
        raise UsageError(f"sigma_mm must be > 0, got {sigma_mm}")
    sig_vox = [sigma_mm / s for s in grid.spacing]
    if any(sv < 0.5 for sv in sig_vox):
        warnings.warn(
            f"LoG sigma {sigma_mm} mm is under half a voxel for spacing {grid.spacing}",
            UnderresolvedSigmaWarning, stacklevel=2)

    blurred = grid.values.astype(np.float64)
    for axis in range(3):
        blurred = convolve1d(blurred, gaussian_kernel_1d(sig_vox[axis]),
                             axis=axis, mode="mirror")

    lap = np.zeros_like(blurred)
    for axis in range(3):
        stencil = np.array([1.0, -2.0, 1.0]) / grid.spacing[axis] ** 2
        lap += convolve1d(blurred, stencil, axis=axis, mode="mirror")

    return VolumeGrid(lap * sigma_mm ** 2, grid.spacing, grid.origin,
                      allow_nan=grid.allow_nan)
