import numpy as np
import pytest

from radiomap import (ExtractionConfig, MaskGrid, UsageError, VolumeGrid,
                      extract_global, extract_map_fast, extract_map_naive)
from radiomap.parametric import BenchConfig, bench_maps, map_feature_names
from radiomap.preprocess import crop
from radiomap.preprocess import RoiBox


def full_pair(values, spacing=(1, 1, 1)):
    values = np.asarray(values, dtype=np.float64)
    return (VolumeGrid(values, spacing),
            MaskGrid(np.ones(values.shape, dtype=np.int32), spacing))


def blob_case(rng, dims=(12, 12, 12)):
    values = rng.normal(60, 25, dims)
    labels = np.zeros(dims, dtype=np.int32)
    core = tuple(slice(2, d - 2) for d in dims)
    labels[core] = (rng.random(tuple(d - 4 for d in dims)) < 0.8).astype(np.int32)
    labels[tuple(d // 2 for d in dims)] = 1
    return VolumeGrid(values, (1, 1, 1)), MaskGrid(labels, (1, 1, 1))


def test_constant_volume_mean_map_is_intensity():
    grid, mask = full_pair(np.full((9, 9, 9), 42.0))
    pm = extract_map_naive(grid, mask, "firstorder_Mean", kernel=5)
    assert np.all(pm.values[pm.defined_mask] == 42.0)
    assert np.isnan(pm.values[~pm.defined_mask]).all()


def test_constant_volume_entropy_map_zero():
    grid, mask = full_pair(np.full((9, 9, 9), 42.0))
    pm = extract_map_naive(grid, mask, "firstorder_Entropy", kernel=5)
    assert np.all(pm.values[pm.defined_mask] == 0.0)


def test_center_value_equals_crop_and_global_oracle(rng):
    values = np.cumsum(rng.standard_normal((9, 9, 9)), axis=0) * 10 + 60
    grid, mask = full_pair(values)
    pm = extract_map_naive(grid, mask, "glcm_Contrast", kernel=5)
    box = RoiBox((2, 2, 2), (5, 5, 5), (5.0, 5.0, 5.0))
    sub_grid, sub_mask = crop(grid, box), crop(mask, box)
    cfg = ExtractionConfig(discretization="fixed_bin_count", bin_count=32)
    expected = extract_global(sub_grid, sub_mask, cfg)["original_glcm_Contrast"]
    assert pm.values[4, 4, 4] == expected  # same code path, bit-exact


def test_fast_equals_naive_per_feature(rng):
    features = ["firstorder_Mean", "glcm_Correlation",
                "glrlm_LongRunEmphasis", "ngtdm_Strength"]
    grid, mask = blob_case(rng)
    fast = extract_map_fast(grid, mask, features, kernel=3, threads=1)
    for pm_fast in fast:
        pm_naive = extract_map_naive(grid, mask, pm_fast.feature_name, kernel=3)
        assert np.array_equal(pm_fast.values, pm_naive.values, equal_nan=True)
        assert np.array_equal(pm_fast.defined_mask, pm_naive.defined_mask)


def test_thread_count_invariance(rng):
    features = ["firstorder_Mean", "glcm_Contrast"]
    grid, mask = blob_case(rng, dims=(10, 10, 10))
    maps = {t: extract_map_fast(grid, mask, features, kernel=3, threads=t)
            for t in (1, 2, 8)}
    for t in (2, 8):
        for a, b in zip(maps[1], maps[t]):
            assert a.values.tobytes() == b.values.tobytes()  # byte-identical


def test_insufficient_window_is_nan():
    values = np.arange(27, dtype=float).reshape(3, 3, 3)
    labels = np.zeros((3, 3, 3), dtype=np.int32)
    labels[1, 1, 1] = 1  # window of 1 voxel < 8
    pm = extract_map_naive(VolumeGrid(values, (1, 1, 1)),
                           MaskGrid(labels, (1, 1, 1)), "firstorder_Mean", kernel=3)
    assert np.isnan(pm.values[1, 1, 1])
    assert not pm.defined_mask.any()


def test_mask_monotonicity(rng):
    grid, mask = blob_case(rng, dims=(12, 12, 12))
    pm_full = extract_map_naive(grid, mask, "firstorder_Mean", kernel=3)
    shrunk = mask.labels.copy()
    shrunk[:, :, 8:] = 0  # drop a slab
    small = MaskGrid(shrunk, (1, 1, 1))
    pm_small = extract_map_naive(grid, small, "firstorder_Mean", kernel=3)
    # voxels whose full window was inside (old mask intersect new mask) keep values
    inner = np.zeros_like(shrunk, dtype=bool)
    for (x, y, z) in np.argwhere(shrunk > 0):
        if x < 1 or y < 1 or z < 1 or x > 10 or y > 10 or z > 6:
            continue
        window_old = mask.labels[x - 1:x + 2, y - 1:y + 2, z - 1:z + 2]
        window_new = shrunk[x - 1:x + 2, y - 1:y + 2, z - 1:z + 2]
        if np.array_equal(window_old, window_new):
            inner[x, y, z] = True
    assert inner.any()
    assert np.array_equal(pm_full.values[inner], pm_small.values[inner], equal_nan=True)


def test_map_feature_catalog_and_errors(rng):
    grid, mask = blob_case(rng, dims=(8, 8, 8))
    names = map_feature_names()
    assert "glcm_Correlation" in names and all(not n.startswith("shape") for n in names)
    with pytest.raises(UsageError):
        extract_map_naive(grid, mask, "shape_Sphericity")
    with pytest.raises(UsageError):
        extract_map_naive(grid, mask, "glcm_NotAFeature")
    with pytest.raises(UsageError):
        extract_map_naive(grid, mask, "firstorder_Mean", kernel=4)
    with pytest.raises(UsageError):
        extract_map_fast(grid, mask, ["firstorder_Mean"], threads=0)


def test_bench_rejects_single_repetition():
    with pytest.raises(UsageError):
        bench_maps(BenchConfig(sizes=(16,), repetitions=1))


def test_bench_small_smoke():
    config = BenchConfig(sizes=(16,), kernel=3,
                         features=("firstorder_Mean", "glcm_Contrast"),
                         thread_counts=(2,), repetitions=2, mask_radius_mm=4.0)
    report = bench_maps(config)
    assert len(report.rows) == 2 * 2  # naive + one fast config, 2 reps each
    assert report.comparisons[0]["speedup"] > 0
    assert 0.0 <= report.comparisons[0]["p_value"] <= 1.0
    lines = report.csv_lines()
    assert lines[0].startswith("size,strategy,threads")
    assert len(lines) == 5
