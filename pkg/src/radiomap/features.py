"""Named scalar features from intensities, texture matrices, and mask geometry.

Feature names are canonical ``<family>_<Feature>`` at the family level
(``glcm_Correlation``) and ``<imageVariant>_<family>_<Feature>`` once an image
variant enters the picture (``original_glcm_Correlation``). Degenerate values
are explicit: a feature is either finite, or a documented substitution (e.g.
Correlation = 0 on a flat region), or NaN — and in the latter two cases the
feature name carries a reason flag.

Texture features are computed per direction and averaged over nonempty
directions; no parity with any other radiomics implementation is claimed.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage import measure

from .errors import EmptyMaskError, UsageError
from .preprocess import discretize, log_filter
from .texture import glcm, glrlm, ngtdm
from .validation import check_aligned

_EPS = 1e-12
_COARSENESS_CAP = 1e6

FIRSTORDER_NAMES = (
    "Mean", "Variance", "Skewness", "Kurtosis", "Minimum", "Maximum", "Median",
    "Range", "Energy", "RootMeanSquared", "MeanAbsoluteDeviation",
    "Percentile10", "Percentile90", "Entropy", "Uniformity",
)
GLCM_NAMES = ("Correlation", "Imc1", "JointEntropy", "Contrast", "InverseDifferenceMoment")
GLRLM_NAMES = (
    "ShortRunEmphasis", "LongRunEmphasis", "GrayLevelNonUniformity",
    "RunLengthNonUniformity", "RunPercentage",
)
NGTDM_NAMES = ("Strength", "Coarseness", "Contrast", "Busyness", "Complexity")
SHAPE_NAMES = (
    "VoxelVolume", "SurfaceArea", "Sphericity", "SurfaceVolumeRatio",
    "Elongation", "Flatness",
)

FAMILIES = {
    "firstorder": FIRSTORDER_NAMES,
    "glcm": GLCM_NAMES,
    "glrlm": GLRLM_NAMES,
    "ngtdm": NGTDM_NAMES,
    "shape": SHAPE_NAMES,
}


class FeatureVector:
    """Ordered (name, value) pairs with per-feature degeneracy flags."""

    def __init__(self, names, values, flags=None, meta=None):
        self.names = list(names)
        if len(set(self.names)) != len(self.names):
            raise UsageError("feature names must be unique")
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (len(self.names),):
            raise UsageError("values length must match names")
        self.flags = dict(flags or {})
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def items(self):
        return list(zip(self.names, self.values.tolist()))

    def as_dict(self):
        return dict(self.items())

    @classmethod
    def from_mapping(cls, values, flags=None, prefix="", meta=None):
        names = [prefix + n for n in values]
        flg = {prefix + n: r for n, r in (flags or {}).items()}
        return cls(names, list(values.values()), flg, meta)

    @classmethod
    def concat(cls, parts, meta=None):
        names, values, flags = [], [], {}
        for p in parts:
            names.extend(p.names)
            values.extend(p.values.tolist())
            flags.update(p.flags)
        return cls(names, values, flags, meta)

    def prefixed(self, prefix):
        return FeatureVector(
            [prefix + n for n in self.names], self.values,
            {prefix + n: r for n, r in self.flags.items()}, self.meta)

    def to_json_dict(self):
        out = {"features": {}, "flags": self.flags, "meta": self.meta}
        for n, v in zip(self.names, self.values):
            out["features"][n] = None if math.isnan(v) else float(v)
        return out

    def csv_cells(self):
        """NaN serializes as an empty cell; reasons live in the JSON form."""
        return ["" if math.isnan(v) else format(float(v), ".12g") for v in self.values]


def _quantile_sorted(vs, q):
    """Linear-interpolation quantile on a pre-sorted array (numpy 'linear')."""
    pos = (vs.size - 1) * q
    lo = int(math.floor(pos))
    frac = pos - lo
    if lo + 1 >= vs.size:
        return float(vs[lo])
    return float(vs[lo] + frac * (vs[lo + 1] - vs[lo]))


def first_order_features(grid, mask, disc):
    """Intensity statistics over in-mask voxels; entropy/uniformity use ``disc`` levels."""
    fg = mask.foreground()
    if not fg.any():
        raise EmptyMaskError("first_order_features requires a nonempty mask")
    v = grid.values[fg].astype(np.float64)
    n = v.size
    mean = float(v.mean())
    centered = v - mean
    var = float((centered ** 2).mean())
    std = math.sqrt(var)
    flags = {}
    if std < _EPS:
        skew = kurt = float("nan")
        flags["Skewness"] = "zero_variance"
        flags["Kurtosis"] = "zero_variance"
    else:
        skew = float((centered ** 3).mean() / std ** 3)
        kurt = float((centered ** 4).mean() / std ** 4) - 3.0

    lv = disc.levels[fg]
    p = np.bincount(lv, minlength=disc.ng + 1)[1:] / n
    p_pos = p[p > 0]
    entropy = float(-(p_pos * np.log2(p_pos)).sum())
    uniformity = float((p ** 2).sum())

    vs = np.sort(v)
    energy = float((v ** 2).sum())
    values = {
        "Mean": mean,
        "Variance": var,
        "Skewness": skew,
        "Kurtosis": kurt,
        "Minimum": float(vs[0]),
        "Maximum": float(vs[-1]),
        "Median": _quantile_sorted(vs, 0.5),
        "Range": float(vs[-1] - vs[0]),
        "Energy": energy,
        "RootMeanSquared": math.sqrt(energy / n),
        "MeanAbsoluteDeviation": float(np.abs(centered).mean()),
        "Percentile10": _quantile_sorted(vs, 0.10),
        "Percentile90": _quantile_sorted(vs, 0.90),
        "Entropy": entropy,
        "Uniformity": uniformity,
    }
    return FeatureVector.from_mapping(values, flags, prefix="firstorder_")


def _safe_log2(x, positive):
    return np.log2(np.where(positive, x, 1.0))


def glcm_features(g):
    """Per-direction GLCM features averaged over nonempty directions.

    Correlation = (sum ij p(i,j) - mu_x mu_y) / (sigma_x sigma_y), 0 and
    flagged when sigma_x*sigma_y vanishes. Imc1 = (HXY - HXY1)/max(HX, HY)
    with log2(0) terms treated as 0, 0 and flagged when max(HX, HY) = 0.
    """
    if g.is_empty:
        values = {n: float("nan") for n in GLCM_NAMES}
        flags = {n: "empty_glcm" for n in GLCM_NAMES}
        return FeatureVector.from_mapping(values, flags, prefix="glcm_")

    p = g.probs[g.nonempty]  # (D, Ng, Ng)
    ng = g.ng
    i = np.arange(1, ng + 1, dtype=np.float64)
    px = p.sum(axis=2)
    py = p.sum(axis=1)
    mu_x = (px * i).sum(axis=1)
    mu_y = (py * i).sum(axis=1)
    sig_x = np.sqrt((((i[None, :] - mu_x[:, None]) ** 2) * px).sum(axis=1))
    sig_y = np.sqrt((((i[None, :] - mu_y[:, None]) ** 2) * py).sum(axis=1))
    sig_prod = sig_x * sig_y

    ij = i[:, None] * i[None, :]
    d2 = (i[:, None] - i[None, :]) ** 2
    flags = {}
    corr_num = (p * ij).sum(axis=(1, 2)) - mu_x * mu_y
    degenerate = sig_prod < _EPS
    corr = np.where(degenerate, 0.0, corr_num / np.where(degenerate, 1.0, sig_prod))
    if degenerate.any():
        flags["Correlation"] = "degenerate"

    pz = p > 0
    hxy = -(p * _safe_log2(p, pz)).sum(axis=(1, 2))
    hx = -(px * _safe_log2(px, px > 0)).sum(axis=1)
    hy = -(py * _safe_log2(py, py > 0)).sum(axis=1)
    pxy = px[:, :, None] * py[:, None, :]
    hxy1 = -(p * _safe_log2(pxy, pz)).sum(axis=(1, 2))
    hmax = np.maximum(hx, hy)
    flat = hmax < _EPS
    imc1 = np.where(flat, 0.0, (hxy - hxy1) / np.where(flat, 1.0, hmax))
    if flat.any():
        flags["Imc1"] = "degenerate"

    values = {
        "Correlation": float(corr.mean()),
        "Imc1": float(imc1.mean()),
        "JointEntropy": float(hxy.mean()),
        "Contrast": float((p * d2).sum(axis=(1, 2)).mean()),
        "InverseDifferenceMoment": float((p / (1.0 + d2)).sum(axis=(1, 2)).mean()),
    }
    return FeatureVector.from_mapping(values, flags, prefix="glcm_")


def glrlm_features(g):
    """Run-emphasis and non-uniformity features averaged over directions."""
    if g.is_empty:
        values = {n: float("nan") for n in GLRLM_NAMES}
        flags = {n: "empty_glrlm" for n in GLRLM_NAMES}
        return FeatureVector.from_mapping(values, flags, prefix="glrlm_")
    mats = g.matrices  # (D, Ng, Rmax)
    r2 = np.arange(1, mats.shape[2] + 1, dtype=np.float64) ** 2
    nr = mats.sum(axis=(1, 2))
    live = nr > 0
    m = mats[live]
    nrl = nr[live]
    per_level = m.sum(axis=2)
    per_length = m.sum(axis=1)
    values = {
        "ShortRunEmphasis": float(((m / r2[None, None, :]).sum(axis=(1, 2)) / nrl).mean()),
        "LongRunEmphasis": float(((m * r2[None, None, :]).sum(axis=(1, 2)) / nrl).mean()),
        "GrayLevelNonUniformity": float(((per_level ** 2).sum(axis=1) / nrl).mean()),
        "RunLengthNonUniformity": float(((per_length ** 2).sum(axis=1) / nrl).mean()),
        "RunPercentage": float((nrl / g.n_voxels).mean()),
    }
    return FeatureVector.from_mapping(values, prefix="glrlm_")


def ngtdm_features(m):
    """Neighborhood-tone features; single-level volumes take documented substitutions."""
    if m.is_empty:
        values = {n: float("nan") for n in NGTDM_NAMES}
        flags = {n: "empty_ngtdm" for n in NGTDM_NAMES}
        return FeatureVector.from_mapping(values, flags, prefix="ngtdm_")

    active = np.flatnonzero(m.p_i > 0)
    i = (active + 1).astype(np.float64)
    p = m.p_i[active]
    s = m.s_i[active]
    n_total = float(m.n_total)
    s_sum = float(m.s_i.sum())
    ps_sum = float((p * s).sum())
    flags = {}

    d2 = (i[:, None] - i[None, :]) ** 2
    strength = float(((p[:, None] + p[None, :]) * d2).sum()) / (_EPS + s_sum)

    coarseness = 1.0 / (_EPS + ps_sum)
    if coarseness > _COARSENESS_CAP:
        coarseness = _COARSENESS_CAP
        flags["Coarseness"] = "capped"

    ngp = active.size
    if ngp > 1:
        contrast = (float((p[:, None] * p[None, :] * d2).sum()) / (ngp * (ngp - 1))) \
            * (s_sum / n_total)
    else:
        contrast = 0.0
        flags["Contrast"] = "single_level"

    busy_den = float(np.abs(i[:, None] * p[:, None] - i[None, :] * p[None, :]).sum())
    if busy_den < _EPS:
        busyness = 0.0
        flags["Busyness"] = "single_level"
    else:
        busyness = ps_sum / busy_den

    pspj = p[:, None] * s[:, None] + p[None, :] * s[None, :]
    complexity = float((np.abs(i[:, None] - i[None, :]) * pspj
                        / (p[:, None] + p[None, :])).sum()) / n_total

    values = {
        "Strength": strength,
        "Coarseness": coarseness,
        "Contrast": contrast,
        "Busyness": busyness,
        "Complexity": complexity,
    }
    return FeatureVector.from_mapping(values, flags, prefix="ngtdm_")


_MESH_SMOOTH_SIGMA = 0.7  # voxels; kills the staircase without eating large shapes


def mask_surface_area(mask):
    """Surface area (mm^2) from a marching-cubes triangulation of the mask.

    The binary mask is zero-padded, lightly Gaussian-smoothed (0.7 voxels) so
    the 0.5-level triangulation follows the shape instead of the voxel
    staircase, and meshed in physical coordinates. Structures too thin to
    survive smoothing fall back to the raw binary isosurface. The triangle
    area is rescaled by (voxel volume / mesh volume)^(2/3), i.e. the mesh is
    notionally grown to enclose exactly the voxel-count volume; this keeps
    area and volume mutually consistent, so Sphericity can never exceed 1.
    """
    padded = np.pad(mask.foreground().astype(np.float64), 4)
    field = gaussian_filter(padded, sigma=_MESH_SMOOTH_SIGMA, mode="constant",
                            truncate=4.0)
    if field.max() <= 0.5:
        field = padded
    verts, faces, _, _ = measure.marching_cubes(field, level=0.5, spacing=mask.spacing)
    area = float(measure.mesh_surface_area(verts, faces))
    tri = verts[faces]
    mesh_volume = abs(float(
        np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum())) / 6.0
    voxel_volume = mask.count() * mask.spacing[0] * mask.spacing[1] * mask.spacing[2]
    return area * (voxel_volume / mesh_volume) ** (2.0 / 3.0)


def shape_features(mask):
    """Geometry-only features of the mask foreground."""
    count = mask.count()
    if count == 0:
        raise EmptyMaskError("shape_features requires a nonempty mask")
    volume = count * mask.spacing[0] * mask.spacing[1] * mask.spacing[2]
    area = mask_surface_area(mask)
    sphericity = (36.0 * math.pi * volume ** 2) ** (1.0 / 3.0) / area

    flags = {}
    if count < 2:
        elongation = flatness = float("nan")
        flags["Elongation"] = "too_few_voxels"
        flags["Flatness"] = "too_few_voxels"
    else:
        coords = np.argwhere(mask.foreground()).astype(np.float64) * mask.spacing
        eig = np.linalg.eigvalsh(np.cov(coords.T))
        eig = np.clip(eig, 0.0, None)
        lam3, lam2, lam1 = eig  # ascending
        if lam1 < _EPS:
            elongation = flatness = float("nan")
            flags["Elongation"] = "degenerate_axes"
            flags["Flatness"] = "degenerate_axes"
        else:
            elongation = math.sqrt(lam2 / lam1)
            flatness = math.sqrt(lam3 / lam1)

    values = {
        "VoxelVolume": volume,
        "SurfaceArea": area,
        "Sphericity": sphericity,
        "SurfaceVolumeRatio": area / volume,
        "Elongation": elongation,
        "Flatness": flatness,
    }
    return FeatureVector.from_mapping(values, flags, prefix="shape_")


@dataclass(frozen=True)
class ExtractionConfig:
    """Global-extraction settings: image variants and discretization."""

    log_sigmas: tuple = ()
    discretization: str = "fixed_bin_width"
    bin_width: float = 25.0
    bin_count: int = 32

    def variant_names(self):
        return ["original"] + [f"log_sigma_{s:g}mm" for s in self.log_sigmas]


def _texture_vector(grid, mask, config):
    disc = discretize(grid, mask, config.discretization,
                      bin_width=config.bin_width, bin_count=config.bin_count)
    return FeatureVector.concat([
        first_order_features(grid, mask, disc),
        glcm_features(glcm(disc)),
        glrlm_features(glrlm(disc)),
        ngtdm_features(ngtdm(disc)),
    ])


def extract_global(grid, mask, config=None):
    """Full feature vector: per-variant intensity+texture features plus shape.

    Shape features are image-variant independent and appear once. Name order
    is deterministic: variants in configured order, families in catalog
    order, then shape.
    """
    config = config or ExtractionConfig()
    check_aligned(grid, mask)
    parts = [_texture_vector(grid, mask, config).prefixed("original_")]
    for sigma in config.log_sigmas:
        variant = log_filter(grid, sigma)
        parts.append(_texture_vector(variant, mask, config).prefixed(f"log_sigma_{sigma:g}mm_"))
    parts.append(shape_features(mask))
    meta = {"n_features": sum(len(p) for p in parts),
            "variants": config.variant_names()}
    return FeatureVector.concat(parts, meta=meta)
