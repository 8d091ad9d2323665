import json
import os
import subprocess
import sys

import numpy as np
import pytest

from radiomap import MaskGrid, ScoredCases, VolumeGrid, write_mask, write_volume
from radiomap.cli import main
from radiomap.phantoms import write_cohort_volumes
from radiomap.selection import FeatureTable
from radiomap import make_cohort


@pytest.fixture
def case_dir(tmp_path):
    rng = np.random.default_rng(0)
    vol_dir = tmp_path / "vols"
    labels = write_cohort_volumes(str(vol_dir), n_pos=1, n_neg=1,
                                  dims=(16, 16, 16), radius_range_mm=(5.0, 6.0), seed=0)
    return vol_dir, labels


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_extract_two_cases(case_dir, tmp_path):
    vol_dir, labels = case_dir
    out = tmp_path / "features.csv"
    assert main(["extract", "--input", str(vol_dir), "--labels", labels,
                 "--out", str(out)]) == 0
    table = FeatureTable.from_csv(str(out))
    assert table.n_cases == 2
    assert table.matrix.shape[1] == 36


def test_extract_rerun_byte_identical(case_dir, tmp_path):
    vol_dir, labels = case_dir
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["extract", "--input", str(vol_dir), "--labels", labels, "--out", str(a)])
    main(["extract", "--input", str(vol_dir), "--labels", labels, "--out", str(b)])
    assert read(a) == read(b)


def test_extract_missing_mask_skips_case(case_dir, tmp_path):
    vol_dir, labels = case_dir
    os.remove(vol_dir / "case0001_mask.nii.gz")
    out = tmp_path / "features.csv"
    assert main(["extract", "--input", str(vol_dir), "--labels", labels,
                 "--out", str(out)]) == 0
    assert FeatureTable.from_csv(str(out)).n_cases == 1


def test_extract_no_cases_is_data_error(tmp_path):
    (tmp_path / "labels.csv").write_text("case_id,label,lesion_size_voxels\nx,1,10\n")
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = main(["extract", "--input", str(empty), "--labels",
               str(tmp_path / "labels.csv"), "--out", str(tmp_path / "o.csv")])
    assert rc == 2


def test_map_writes_one_file_per_feature(case_dir, tmp_path):
    vol_dir, _ = case_dir
    out = tmp_path / "maps"
    rc = main(["map", "--input", str(vol_dir), "--out", str(out),
               "--features", "firstorder_Mean,glcm_Contrast", "--kernel", "3"])
    assert rc == 0
    files = sorted(os.listdir(out))
    assert files == [
        "case0000_firstorder_Mean_k3.nii", "case0000_glcm_Contrast_k3.nii",
        "case0001_firstorder_Mean_k3.nii", "case0001_glcm_Contrast_k3.nii"]


def test_map_threads_do_not_change_bytes(case_dir, tmp_path):
    vol_dir, _ = case_dir
    out1, out2 = tmp_path / "m1", tmp_path / "m2"
    args = ["map", "--input", str(vol_dir), "--features", "firstorder_Mean",
            "--kernel", "3"]
    main(args + ["--out", str(out1), "--threads", "1"])
    main(args + ["--out", str(out2), "--threads", "4"])
    for name in os.listdir(out1):
        assert read(out1 / name) == read(out2 / name)


def test_map_even_kernel_usage_error(case_dir, tmp_path):
    vol_dir, _ = case_dir
    rc = main(["map", "--input", str(vol_dir), "--out", str(tmp_path / "m"),
               "--features", "firstorder_Mean", "--kernel", "4"])
    assert rc == 1


def test_map_shape_feature_usage_error(case_dir, tmp_path):
    vol_dir, _ = case_dir
    rc = main(["map", "--input", str(vol_dir), "--out", str(tmp_path / "m"),
               "--features", "shape_Sphericity"])
    assert rc == 1


def test_select_recovers_planted_and_is_deterministic(tmp_path):
    table = make_cohort(40, 40, n_features=12, n_signal=2, effect=2.0, seed=8)
    csv_path = tmp_path / "t.csv"
    table.to_csv(str(csv_path))
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    for out in (out1, out2):
        rc = main(["select", "--table", str(csv_path), "--out", str(out),
                   "--seed", "4", "--folds", "5"])
        assert rc == 0
    assert read(out1) == read(out2)
    report = json.loads(read(out1))
    assert {"signal_0", "signal_1"} <= set(report["final_selected"])


def test_select_single_class_is_data_error(tmp_path):
    table = make_cohort(12, 0, n_features=4, seed=0)
    csv_path = tmp_path / "t.csv"
    table.to_csv(str(csv_path))
    rc = main(["select", "--table", str(csv_path), "--out", str(tmp_path / "r.json")])
    assert rc == 2


def test_eval_worked_example(tmp_path):
    s = ScoredCases(["a", "b", "c", "d"], np.array([0.1, 0.4, 0.35, 0.8]),
                    np.array([0, 0, 1, 1]))
    path = tmp_path / "s.csv"
    s.to_csv(str(path))
    out = tmp_path / "m.json"
    assert main(["eval", "--scores", str(path), "--out", str(out)]) == 0
    metrics = json.loads(read(out))
    assert metrics["model_a"]["auroc"] == pytest.approx(0.75)
    assert metrics["model_a"]["ap"] == pytest.approx(0.8333, abs=1e-4)


def test_eval_identical_files_p_one(tmp_path):
    s = ScoredCases(["a", "b", "c", "d"], np.array([0.1, 0.4, 0.35, 0.8]),
                    np.array([0, 0, 1, 1]))
    path = tmp_path / "s.csv"
    s.to_csv(str(path))
    out = tmp_path / "m.json"
    rc = main(["eval", "--scores", str(path), "--scores-b", str(path),
               "--out", str(out), "--n-perm", "200"])
    assert rc == 0
    metrics = json.loads(read(out))
    assert metrics["paired_test"]["p_auroc"] == 1.0
    assert metrics["paired_test"]["p_ap"] == 1.0


def test_eval_mismatched_ids_error(tmp_path):
    a = ScoredCases(["a", "b"], np.array([0.1, 0.9]), np.array([0, 1]))
    b = ScoredCases(["x", "y"], np.array([0.1, 0.9]), np.array([0, 1]))
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(str(pa))
    b.to_csv(str(pb))
    rc = main(["eval", "--scores", str(pa), "--scores-b", str(pb),
               "--out", str(tmp_path / "m.json")])
    assert rc == 1


def test_bench_single_rep_is_usage_error(tmp_path):
    rc = main(["bench", "--out", str(tmp_path / "b"), "--sizes", "12",
               "--reps", "1"])
    assert rc == 1


def test_config_file_with_flag_override(tmp_path):
    table = make_cohort(20, 20, n_features=6, n_signal=2, effect=2.0, seed=1)
    csv_path = tmp_path / "t.csv"
    table.to_csv(str(csv_path))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"folds": 4, "seed": 11, "target": 3}))
    out = tmp_path / "r.json"
    rc = main(["select", "--table", str(csv_path), "--out", str(out),
               "--config", str(cfg), "--target", "2"])  # flag wins over config
    assert rc == 0
    report = json.loads(read(out))
    assert len(report["folds"]) == 4
    assert len(report["final_selected"]) == 2


def test_extract_with_roi_crop(case_dir, tmp_path):
    vol_dir, labels = case_dir
    out = tmp_path / "roi.csv"
    rc = main(["extract", "--input", str(vol_dir), "--labels", labels,
               "--out", str(out), "--roi", "10,10,10"])
    assert rc == 0
    table = FeatureTable.from_csv(str(out))
    assert table.n_cases == 2


def test_phantom_subcommand_regenerates_fixtures(tmp_path):
    rc = main(["phantom", "--kind", "cohort", "--out", str(tmp_path / "fx"),
               "--n-pos", "1", "--n-neg", "1", "--dim", "12"])
    assert rc == 0
    assert (tmp_path / "fx" / "labels.csv").exists()


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "radiomap.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "0.1.0"
