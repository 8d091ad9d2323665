"""Voxel-wise sliding-window parametric maps.

Each in-mask voxel gets the value of a named feature computed over the
kernel^3 window centered on it, clipped to the volume and intersected with
the mask; windows with fewer than ``min_window`` in-mask voxels are NaN.
Window intensities are re-discretized per window (count-based binning keeps
the level count stable across windows).

Two code paths share the same per-window feature kernel:

* ``extract_map_naive`` recomputes discretization and the feature's texture
  matrix independently for every feature — the reference cost profile.
* ``extract_map_fast`` discretizes once per window, builds each needed matrix
  family once, reads all requested features from it, and parallelizes over
  disjoint chunks of voxels. Values are identical to the naive path and
  independent of the worker count.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .features import (FAMILIES, first_order_features, glcm_features,
                       glrlm_features, ngtdm_features)
from .grid_io import MaskGrid, VolumeGrid
from .preprocess import discretize
from .stats import welch_t_test
from .texture import glcm, glrlm, ngtdm
from .validation import check_aligned, check_odd_kernel, check_threads

DEFAULT_MAP_FEATURES = (
    "firstorder_Mean",
    "glcm_Correlation", "glcm_Imc1", "glcm_Contrast", "glcm_JointEntropy",
    "glrlm_ShortRunEmphasis", "glrlm_LongRunEmphasis",
    "ngtdm_Strength",
)

MIN_WINDOW_VOXELS = 8


@dataclass
class ParametricMap:
    feature_name: str
    grid: VolumeGrid
    kernel: int
    defined_mask: np.ndarray

    @property
    def values(self):
        return self.grid.values


def map_feature_names():
    """All non-shape catalog features available for maps."""
    return [f"{fam}_{name}" for fam in ("firstorder", "glcm", "glrlm", "ngtdm")
            for name in FAMILIES[fam]]


def parse_map_feature(name):
    fam, _, feat = name.partition("_")
    if fam == "shape":
        raise UsageError(f"shape features have no voxel-wise map: {name}")
    if fam not in FAMILIES or feat not in FAMILIES[fam]:
        raise UsageError(f"unknown map feature {name!r}; see map_feature_names()")
    return fam


def _window_feature_values(wgrid, wmask, families, disc_mode, bin_count, bin_width):
    """Compute whole families over one window ROI; returns name -> value."""
    disc = discretize(wgrid, wmask, disc_mode, bin_width=bin_width, bin_count=bin_count)
    out = {}
    for fam in families:
        if fam == "firstorder":
            fv = first_order_features(wgrid, wmask, disc)
        elif fam == "glcm":
            fv = glcm_features(glcm(disc))
        elif fam == "glrlm":
            fv = glrlm_features(glrlm(disc))
        else:
            fv = ngtdm_features(ngtdm(disc))
        out.update(zip(fv.names, fv.values.tolist()))
    return out


def _window_slices(center, half, dims):
    return tuple(slice(max(0, c - half), min(n, c + half + 1))
                 for c, n in zip(center, dims))


def _compute_voxels(values, labels, spacing, coords, features, kernel,
                    disc_mode, bin_count, bin_width, grouped, min_window):
    """Feature values for each voxel in ``coords``; shape (len(coords), n_features).

    ``grouped=True`` is the fast path (shared discretization and matrices);
    ``grouped=False`` recomputes everything per feature, independently.
    """
    half = kernel // 2
    dims = values.shape
    fams = [parse_map_feature(f) for f in features]
    fam_set = sorted(set(fams))
    out = np.full((len(coords), len(features)), np.nan, dtype=np.float64)
    for row, (x, y, z) in enumerate(coords):
        sl = _window_slices((x, y, z), half, dims)
        wlab = labels[sl]
        if np.count_nonzero(wlab) < min_window:
            continue
        wgrid = VolumeGrid(values[sl], spacing)
        wmask = MaskGrid(wlab, spacing)
        if grouped:
            vals = _window_feature_values(
                wgrid, wmask, fam_set, disc_mode, bin_count, bin_width)
            for col, feat in enumerate(features):
                out[row, col] = vals[feat]
        else:
            for col, (feat, fam) in enumerate(zip(features, fams)):
                vals = _window_feature_values(
                    wgrid, wmask, [fam], disc_mode, bin_count, bin_width)
                out[row, col] = vals[feat]
    return out


_WORKER_STATE = {}


def _init_worker(values, labels, spacing, features, kernel, disc_mode,
                 bin_count, bin_width, min_window):
    _WORKER_STATE["args"] = (values, labels, spacing, features, kernel,
                             disc_mode, bin_count, bin_width, min_window)


def _run_chunk(coords):
    (values, labels, spacing, features, kernel,
     disc_mode, bin_count, bin_width, min_window) = _WORKER_STATE["args"]
    return _compute_voxels(values, labels, spacing, coords, features, kernel,
                           disc_mode, bin_count, bin_width, grouped=True,
                           min_window=min_window)


def _assemble_maps(grid, mask, coords, results, features, kernel, min_window):
    maps = []
    half = kernel // 2
    counts = np.zeros(grid.dims, dtype=np.int64)
    fg = mask.foreground()
    for (x, y, z) in coords:
        sl = _window_slices((x, y, z), half, grid.dims)
        counts[x, y, z] = np.count_nonzero(mask.labels[sl])
    defined = fg & (counts >= min_window)
    for col, feat in enumerate(features):
        vol = np.full(grid.dims, np.nan, dtype=np.float64)
        for row, (x, y, z) in enumerate(coords):
            vol[x, y, z] = results[row, col]
        out = VolumeGrid(vol, grid.spacing, grid.origin, allow_nan=True)
        maps.append(ParametricMap(feat, out, kernel, defined))
    return maps


def extract_map_naive(grid, mask, feature, kernel=5, disc_mode="fixed_bin_count",
                      bin_count=32, bin_width=25.0, min_window=MIN_WINDOW_VOXELS):
    """Reference single-feature map: every window recomputed from scratch."""
    kernel = check_odd_kernel(kernel)
    parse_map_feature(feature)
    check_aligned(grid, mask)
    coords = np.argwhere(mask.foreground())
    results = _compute_voxels(grid.values, mask.labels, grid.spacing, coords,
                              [feature], kernel, disc_mode, bin_count, bin_width,
                              grouped=False, min_window=min_window)
    return _assemble_maps(grid, mask, coords, results, [feature], kernel, min_window)[0]


def extract_map_fast(grid, mask, features, kernel=5, disc_mode="fixed_bin_count",
                     bin_count=32, bin_width=25.0, threads=1,
                     min_window=MIN_WINDOW_VOXELS):
    """Parallel multi-feature maps, voxel-identical to the naive path.

    Work is split into disjoint chunks of in-mask voxels; each worker owns its
    chunk and results merge by voxel index, so output does not depend on the
    worker count.
    """
    kernel = check_odd_kernel(kernel)
    threads = check_threads(threads)
    features = list(features)
    for f in features:
        parse_map_feature(f)
    check_aligned(grid, mask)
    coords = np.argwhere(mask.foreground())

    if threads == 1 or len(coords) < 64:
        results = _compute_voxels(grid.values, mask.labels, grid.spacing, coords,
                                  features, kernel, disc_mode, bin_count, bin_width,
                                  grouped=True, min_window=min_window)
    else:
        chunks = np.array_split(coords, threads * 4)
        chunks = [c for c in chunks if len(c)]
        init = (grid.values, mask.labels, grid.spacing, features, kernel,
                disc_mode, bin_count, bin_width, min_window)
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=init) as pool:
            parts = list(pool.map(_run_chunk, chunks))
        results = np.vstack(parts)
    return _assemble_maps(grid, mask, coords, results, features, kernel, min_window)


# --- benchmark harness -------------------------------------------------------

@dataclass
class BenchConfig:
    sizes: tuple = (64,)
    kernel: int = 5
    features: tuple = DEFAULT_MAP_FEATURES
    thread_counts: tuple = (1, 8)
    repetitions: int = 5
    mask_radius_mm: float = 12.0
    seed: int = 0


@dataclass
class BenchReport:
    config: dict
    rows: list = field(default_factory=list)         # per (size, strategy, threads, rep)
    summaries: list = field(default_factory=list)    # per (size, strategy, threads)
    comparisons: list = field(default_factory=list)  # naive vs fast, per (size, threads)

    def to_json_dict(self):
        return {"config": self.config, "summaries": self.summaries,
                "comparisons": self.comparisons, "timings": self.rows}

    def csv_lines(self):
        lines = ["size,strategy,threads,rep,seconds,seconds_per_feature"]
        for r in self.rows:
            lines.append("{size},{strategy},{threads},{rep},{seconds:.6f},"
                         "{seconds_per_feature:.6f}".format(**r))
        return lines


def bench_maps(config=None):
    """Time naive vs fast map extraction on textured phantoms.

    Reports mean/std wall time per feature for each (strategy, threads) and a
    Welch t-test between the naive and fast timing samples.
    """
    from .phantoms import PhantomSpec, make_phantom

    config = config or BenchConfig()
    if config.repetitions < 2:
        raise UsageError("bench_maps needs repetitions >= 2 to estimate variance")
    features = list(config.features)
    report = BenchReport(config={
        "sizes": list(config.sizes), "kernel": config.kernel,
        "features": features, "thread_counts": list(config.thread_counts),
        "repetitions": config.repetitions, "mask_radius_mm": config.mask_radius_mm,
        "seed": config.seed,
    })

    for size in config.sizes:
        spec = PhantomSpec(kind="textured_blob", dims=(size, size, size),
                           size_mm=config.mask_radius_mm, seed=config.seed)
        grid, mask = make_phantom(spec)
        samples = {}

        def timed(run, strategy, threads):
            times = []
            for rep in range(config.repetitions):
                t0 = time.perf_counter()
                run()
                dt = time.perf_counter() - t0
                times.append(dt)
                report.rows.append({
                    "size": size, "strategy": strategy, "threads": threads,
                    "rep": rep, "seconds": dt,
                    "seconds_per_feature": dt / len(features)})
            samples[(strategy, threads)] = np.array(times)

        def run_naive():
            for f in features:
                extract_map_naive(grid, mask, f, kernel=config.kernel)

        timed(run_naive, "naive", 1)
        for threads in config.thread_counts:
            timed(lambda: extract_map_fast(grid, mask, features,
                                           kernel=config.kernel, threads=threads),
                  "fast", threads)

        for (strategy, threads), times in samples.items():
            report.summaries.append({
                "size": size, "strategy": strategy, "threads": threads,
                "mean_s": float(times.mean()), "std_s": float(times.std(ddof=1)),
                "mean_per_feature_s": float(times.mean() / len(features)),
                "std_per_feature_s": float(times.std(ddof=1) / len(features)),
                "median_s": float(np.median(times)),
            })
        naive_times = samples[("naive", 1)]
        for threads in config.thread_counts:
            fast_times = samples[("fast", threads)]
            t, df, p = welch_t_test(naive_times, fast_times)
            report.comparisons.append({
                "size": size, "threads": threads,
                "speedup": float(np.median(naive_times) / np.median(fast_times)),
                "welch_t": t, "welch_df": df, "p_value": p,
            })
    return report
