"""3D volume and mask containers plus file I/O.

Two on-disk formats are supported:

* a NIfTI-1 subset (single-file ``.nii`` or ``.nii.gz``): scalar datatypes
  int16/float32/float64, axis-aligned geometry only. Oblique q/s-forms and
  multi-frame volumes are rejected loudly rather than reinterpreted.
* ``rawjson``: a human-writable fixture pair ``<stem>.json`` + ``<stem>.bin``.
  The JSON header has exactly the keys ``dims``, ``spacing``, ``origin``,
  ``dtype``; the ``.bin`` holds the values little-endian in C order for an
  array of shape ``dims``.

Arrays are indexed ``[x, y, z]``. ``origin`` is the physical position (mm) of
the center of voxel (0, 0, 0), so voxel ``i`` sits at ``origin + i * spacing``.
"""

import gzip
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, UnsupportedEncodingError, UsageError
from .validation import check_array_3d, check_triple

FORMATS = ("nifti1", "rawjson")

# NIfTI-1 header layout (348 bytes). Field offsets follow the reference
# definition in nifti1.h.
_HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
])
assert _HEADER_DTYPE.itemsize == 348

_DTYPE_BY_CODE = {4: np.dtype("<i2"), 16: np.dtype("<f4"), 64: np.dtype("<f8")}
_CODE_BY_NAME = {"int16": 4, "float32": 16, "float64": 64}
_BITPIX_BY_CODE = {4: 16, 16: 32, 64: 64}

_RAWJSON_DTYPES = {"int16": "<i2", "float32": "<f4", "float64": "<f8"}


@dataclass
class VolumeGrid:
    """A 3D scalar volume with physical geometry.

    ``values`` has shape ``dims``; NaNs are only legal when ``allow_nan`` is
    set (the parametric-map role).
    """

    values: np.ndarray
    spacing: tuple
    origin: tuple = (0.0, 0.0, 0.0)
    allow_nan: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = check_array_3d(self.values).astype(np.float64, copy=False)
        self.spacing = check_triple(self.spacing, "spacing", positive=True)
        self.origin = check_triple(self.origin, "origin")
        if not self.allow_nan and not np.all(np.isfinite(self.values)):
            raise UsageError("volume values must be finite (use allow_nan for maps)")

    @property
    def dims(self):
        return self.values.shape

    def voxel_volume(self):
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def copy_with(self, values=None, spacing=None, origin=None, allow_nan=None):
        return VolumeGrid(
            values=self.values.copy() if values is None else values,
            spacing=self.spacing if spacing is None else spacing,
            origin=self.origin if origin is None else origin,
            allow_nan=self.allow_nan if allow_nan is None else allow_nan,
        )


@dataclass
class MaskGrid:
    """An integer label volume aligned to a :class:`VolumeGrid`; 0 = background."""

    labels: np.ndarray
    spacing: tuple
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = check_array_3d(self.labels, "labels")
        if not np.issubdtype(arr.dtype, np.integer):
            rounded = np.rint(arr)
            if not np.allclose(arr, rounded, atol=1e-6, equal_nan=False):
                raise UsageError("mask labels must be integers")
            arr = rounded
        self.labels = arr.astype(np.int32, copy=False)
        self.spacing = check_triple(self.spacing, "spacing", positive=True)
        self.origin = check_triple(self.origin, "origin")

    @property
    def dims(self):
        return self.labels.shape

    def foreground(self):
        return self.labels > 0

    def count(self):
        return int(np.count_nonzero(self.labels))

    def centroid_voxel(self):
        """Mean index of foreground voxels (float triple)."""
        coords = np.argwhere(self.labels > 0)
        if coords.size == 0:
            raise UsageError("mask has no foreground voxels")
        return tuple(coords.mean(axis=0))

    def as_volume(self):
        return VolumeGrid(self.labels.astype(np.float64), self.spacing, self.origin)


def _infer_format(path):
    if path.endswith(".nii") or path.endswith(".nii.gz"):
        return "nifti1"
    if path.endswith(".json") or path.endswith(".bin"):
        return "rawjson"
    raise UsageError(f"cannot infer format from path {path!r}; pass format explicitly")


def read_volume(path, format=None):
    """Read a volume from disk. ``format`` is one of {'nifti1', 'rawjson'}."""
    fmt = format or _infer_format(path)
    if fmt == "nifti1":
        return _read_nifti(path)
    if fmt == "rawjson":
        return _read_rawjson(path)
    raise UsageError(f"unknown format {fmt!r}, expected one of {FORMATS}")


def write_volume(grid, path, format=None, dtype="float32"):
    """Write a grid to disk, storing values at the requested precision.

    ``dtype`` in {'float32', 'float64', 'int16'}; float32 is the default and
    what the parametric-map file contract uses (NaN stored as IEEE NaN).
    """
    fmt = format or _infer_format(path)
    if dtype not in _CODE_BY_NAME:
        raise UsageError(f"unsupported storage dtype {dtype!r}")
    if fmt == "nifti1":
        _write_nifti(grid, path, dtype)
    elif fmt == "rawjson":
        _write_rawjson(grid, path, dtype)
    else:
        raise UsageError(f"unknown format {fmt!r}, expected one of {FORMATS}")


def read_mask(path, format=None):
    """Read a label volume and round it to an integer :class:`MaskGrid`."""
    vol = read_volume(path, format)
    return MaskGrid(np.rint(vol.values).astype(np.int32), vol.spacing, vol.origin)


def write_mask(mask, path, format=None):
    write_volume(mask.as_volume(), path, format, dtype="int16")


# --- NIfTI-1 ---------------------------------------------------------------

def _read_nifti(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read(_HEADER_DTYPE.itemsize)
        if len(raw) < _HEADER_DTYPE.itemsize:
            raise FormatError(f"{path}: truncated NIfTI header", byte_offset=len(raw))
        hdr = np.frombuffer(raw, dtype=_HEADER_DTYPE, count=1)[0]
        swapped = False
        if hdr["sizeof_hdr"] != 348:
            hdr = hdr.byteswap()
            swapped = True
            if hdr["sizeof_hdr"] != 348:
                raise FormatError(f"{path}: bad sizeof_hdr, not a NIfTI-1 file", byte_offset=0)
        magic = bytes(hdr["magic"]).rstrip(b"\x00")
        if magic == b"ni1":
            raise UnsupportedEncodingError(f"{path}: two-file NIfTI (.hdr/.img) is not supported")
        if magic != b"n+1":
            raise FormatError(f"{path}: bad magic {magic!r}", byte_offset=344)

        ndim = int(hdr["dim"][0])
        if ndim < 1 or ndim > 7:
            raise FormatError(f"{path}: dim[0]={ndim} out of range", byte_offset=40)
        dims_all = [int(d) for d in hdr["dim"][1:ndim + 1]]
        if any(d < 1 for d in dims_all):
            raise FormatError(f"{path}: non-positive dimension {dims_all}", byte_offset=40)
        if ndim < 3:
            dims_all += [1] * (3 - ndim)
        if any(d != 1 for d in dims_all[3:]):
            raise UnsupportedEncodingError(
                f"{path}: multi-frame volume with dims {dims_all} is not supported")
        dims = tuple(dims_all[:3])

        code = int(hdr["datatype"])
        if code not in _DTYPE_BY_CODE:
            raise UnsupportedEncodingError(
                f"{path}: datatype code {code} not supported (int16/float32/float64 only)")
        dt = _DTYPE_BY_CODE[code]
        if swapped:
            dt = dt.newbyteorder(">")

        spacing, origin = _geometry_from_header(hdr, path)

        vox_offset = int(hdr["vox_offset"])
        if vox_offset < _HEADER_DTYPE.itemsize:
            raise FormatError(f"{path}: vox_offset {vox_offset} < 348", byte_offset=108)
        fh.seek(vox_offset)
        n = dims[0] * dims[1] * dims[2]
        buf = fh.read(n * dt.itemsize)
        if len(buf) < n * dt.itemsize:
            raise FormatError(
                f"{path}: file too short for {dims} voxels of {dt}",
                byte_offset=vox_offset + len(buf))
        # NIfTI stores x fastest.
        values = np.frombuffer(buf, dtype=dt).reshape(dims, order="F").astype(np.float64)

        slope = float(hdr["scl_slope"])
        inter = float(hdr["scl_inter"])
        if slope not in (0.0, 1.0) or (slope != 0.0 and inter != 0.0):
            values = values * slope + inter

    return VolumeGrid(values, spacing, origin, allow_nan=True)


def _geometry_from_header(hdr, path):
    """Reduce the q/s-form to axis-aligned spacing + offset, or refuse."""
    pixdim = np.asarray(hdr["pixdim"][1:4], dtype=np.float64)
    if np.any(pixdim <= 0) or not np.all(np.isfinite(pixdim)):
        raise FormatError(f"{path}: non-positive pixdim {pixdim}", byte_offset=76)

    if int(hdr["sform_code"]) > 0:
        rows = np.vstack([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]]).astype(np.float64)
        rot, offset = rows[:, :3], rows[:, 3]
        off_diag = rot - np.diag(np.diag(rot))
        if np.max(np.abs(off_diag)) > 1e-6 * max(1.0, np.max(np.abs(rot))):
            raise UnsupportedEncodingError(
                f"{path}: oblique sform affine not supported (axis-aligned only)")
        diag = np.diag(rot)
        if np.any(diag <= 0):
            raise UnsupportedEncodingError(
                f"{path}: flipped sform axes not supported (positive diagonal only)")
        return tuple(diag), tuple(offset)

    if int(hdr["qform_code"]) > 0:
        quat = np.array([hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]], dtype=np.float64)
        if np.max(np.abs(quat)) > 1e-6:
            raise UnsupportedEncodingError(
                f"{path}: rotated qform not supported (identity quaternion only)")
        qfac = float(hdr["pixdim"][0])
        if qfac == -1.0:
            raise UnsupportedEncodingError(f"{path}: qfac=-1 axis flip not supported")
        offset = (float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"]))
        return tuple(pixdim), offset

    return tuple(pixdim), (0.0, 0.0, 0.0)


def _write_nifti(grid, path, dtype):
    code = _CODE_BY_NAME[dtype]
    dt = _DTYPE_BY_CODE[code]
    values = grid.values
    if dtype == "int16":
        if np.any(np.isnan(values)):
            raise UsageError("cannot store NaN in an int16 volume")
        values = np.rint(values)
    data = np.asfortranarray(values.astype(dt))

    hdr = np.zeros((), dtype=_HEADER_DTYPE)
    hdr["sizeof_hdr"] = 348
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = grid.dims
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = _BITPIX_BY_CODE[code]
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = grid.spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = (grid.spacing[0], 0, 0, grid.origin[0])
    hdr["srow_y"] = (0, grid.spacing[1], 0, grid.origin[1])
    hdr["srow_z"] = (0, 0, grid.spacing[2], grid.origin[2])
    hdr["descrip"] = b"radiomap"
    hdr["magic"] = b"n+1"

    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(hdr.tobytes())
        fh.write(b"\x00\x00\x00\x00")  # no extensions
        fh.write(data.tobytes(order="F"))


# --- rawjson ---------------------------------------------------------------

def _rawjson_paths(path):
    stem, ext = os.path.splitext(path)
    if ext not in (".json", ".bin"):
        stem = path
    return stem + ".json", stem + ".bin"


def _read_rawjson(path):
    json_path, bin_path = _rawjson_paths(path)
    with open(json_path, "r") as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{json_path}: invalid JSON header: {exc}", byte_offset=exc.pos)
    missing = {"dims", "spacing", "origin", "dtype"} - set(header)
    if missing:
        raise FormatError(f"{json_path}: missing keys {sorted(missing)}")
    if header["dtype"] not in _RAWJSON_DTYPES:
        raise UnsupportedEncodingError(
            f"{json_path}: dtype {header['dtype']!r} not supported")
    dims = tuple(int(d) for d in header["dims"])
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise FormatError(f"{json_path}: bad dims {header['dims']}")
    dt = np.dtype(_RAWJSON_DTYPES[header["dtype"]])
    expected = dims[0] * dims[1] * dims[2] * dt.itemsize
    with open(bin_path, "rb") as fh:
        buf = fh.read()
    if len(buf) != expected:
        raise FormatError(
            f"{bin_path}: expected {expected} bytes for dims {dims}, got {len(buf)}",
            byte_offset=min(len(buf), expected))
    values = np.frombuffer(buf, dtype=dt).reshape(dims, order="C").astype(np.float64)
    return VolumeGrid(values, header["spacing"], header["origin"], allow_nan=True)


def _write_rawjson(grid, path, dtype):
    json_path, bin_path = _rawjson_paths(path)
    values = grid.values
    if dtype == "int16":
        if np.any(np.isnan(values)):
            raise UsageError("cannot store NaN in an int16 volume")
        values = np.rint(values)
    data = np.ascontiguousarray(values.astype(np.dtype(_RAWJSON_DTYPES[dtype])))
    header = {
        "dims": list(grid.dims),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "dtype": dtype,
    }
    with open(json_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(bin_path, "wb") as fh:
        fh.write(data.tobytes(order="C"))
