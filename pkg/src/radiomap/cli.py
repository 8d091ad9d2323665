"""Batch command-line front end.

Subcommands: extract, map, select, eval, bench (plus the fixture-regeneration
helper ``phantom``). A JSON config file can preload any option; explicit flags
win. Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Per-case failures inside a batch are logged and skipped, never silently.
"""

import argparse
import csv
import glob
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import DataError, RadiomapError, UsageError
from .features import ExtractionConfig, extract_global
from .grid_io import read_mask, read_volume, write_volume
from .metrics import ScoredCases, auroc, average_precision, paired_permutation_test
from .parametric import (BenchConfig, DEFAULT_MAP_FEATURES, bench_maps,
                         extract_map_fast, parse_map_feature)
from .phantoms import PhantomSpec, make_phantom, write_cohort_volumes
from .preprocess import crop, roi_from_mask
from .selection import FeatureTable, select_features_cv
from .validation import check_odd_kernel

log = logging.getLogger("radiomap")

_IMAGE_EXTS = ("_image.nii.gz", "_image.nii", "_image.json")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(sub):
    sub.add_argument("--config", help="JSON file preloading options (flags win)")
    sub.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = _Parser(prog="radiomap", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("extract", help="global feature table from a case directory")
    _add_common(p)
    p.add_argument("--input", required=True, help="dir of <case>_image/<case>_mask files")
    p.add_argument("--labels", required=True, help="CSV: case_id,label,lesion_size_voxels")
    p.add_argument("--out", required=True, help="output FeatureTable CSV")
    p.add_argument("--sigmas", default=None, help="comma-separated LoG sigmas in mm")
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--bin-count", type=int, default=None)
    p.add_argument("--disc", choices=["fixed_bin_width", "fixed_bin_count"], default=None)
    p.add_argument("--roi", default=None,
                   help="crop a fixed physical box (mm, e.g. 100,50,15) around the mask centroid")

    p = subs.add_parser("map", help="voxel-wise parametric maps")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--features", default=None, help="comma-separated map features")
    p.add_argument("--kernel", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--bin-count", type=int, default=None)
    p.add_argument("--roi", default=None,
                   help="crop a fixed physical box (mm) around the mask centroid")
    p.add_argument("--out", required=True, help="output directory for map volumes")

    p = subs.add_parser("select", help="FDR + SVM-RFE feature selection with CV")
    _add_common(p)
    p.add_argument("--table", required=True, help="FeatureTable CSV")
    p.add_argument("--out", required=True, help="SelectionReport JSON")
    p.add_argument("--scores", default=None, help="optional out-of-fold scores CSV")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--bin-size", type=int, default=None)

    p = subs.add_parser("eval", help="AUROC/AP for one or two score files")
    _add_common(p)
    p.add_argument("--scores", required=True, help="CSV: case_id,score,label")
    p.add_argument("--scores-b", default=None, help="second model for a paired test")
    p.add_argument("--n-perm", type=int, default=None)
    p.add_argument("--out", required=True, help="metrics JSON")

    p = subs.add_parser("bench", help="naive-vs-fast parametric map benchmark")
    _add_common(p)
    p.add_argument("--sizes", default=None, help="comma-separated cube edge sizes")
    p.add_argument("--kernel", type=int, default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--threads", default=None, help="comma-separated fast-path thread counts")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--out", required=True, help="output dir for bench.json / bench.csv")

    p = subs.add_parser("phantom", help="regenerate synthetic fixtures")
    _add_common(p)
    p.add_argument("--kind", default="cohort",
                   choices=["cohort", "ball", "box", "line", "textured_blob"])
    p.add_argument("--out", required=True)
    p.add_argument("--n-pos", type=int, default=None)
    p.add_argument("--n-neg", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--size-mm", type=float, default=None)
    return parser


_DEFAULTS = {
    "extract": {"sigmas": "", "bin_width": 25.0, "bin_count": 32,
                "disc": "fixed_bin_width", "roi": None, "seed": 0},
    "map": {"features": ",".join(DEFAULT_MAP_FEATURES), "kernel": 5, "threads": 1,
            "bin_count": 32, "roi": None, "seed": 0},
    "select": {"q": 0.05, "C": 1.0, "target": 10, "folds": 10, "bin_size": 500,
               "seed": 0, "scores": None},
    "eval": {"n_perm": 1000, "seed": 0, "scores_b": None},
    "bench": {"sizes": "64", "kernel": 5, "features": ",".join(DEFAULT_MAP_FEATURES),
              "threads": "1,8", "reps": 5, "seed": 0},
    "phantom": {"n_pos": 20, "n_neg": 20, "dim": 32, "size_mm": 10.0, "seed": 0},
}


def _merge_config(args):
    """Fill unset options from --config JSON, then from built-in defaults."""
    values = vars(args)
    config = {}
    if values.get("config"):
        try:
            with open(values["config"]) as fh:
                config = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {values['config']}")
        except json.JSONDecodeError as exc:
            raise DataError(f"config file {values['config']} is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise DataError("config file must hold a JSON object")
    defaults = _DEFAULTS.get(values["command"], {})
    for key, default in {**defaults, **{k: defaults.get(k) for k in config}}.items():
        if values.get(key) is None:
            values[key] = config.get(key, defaults.get(key, default))
    return args


def _parse_list(text, cast):
    if text is None or text == "":
        return []
    return [cast(part) for part in str(text).split(",") if part != ""]


def _read_labels(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["case_id", "label", "lesion_size_voxels"]:
            raise DataError(f"{path}: expected header case_id,label,lesion_size_voxels")
        rows = {}
        for row in reader:
            if row:
                rows[row[0]] = (int(row[1]), int(row[2]))
    if not rows:
        raise DataError(f"{path}: no cases listed")
    return rows


def _discover_cases(input_dir):
    cases = {}
    for ext in _IMAGE_EXTS:
        for path in sorted(glob.glob(os.path.join(input_dir, "*" + ext))):
            cid = os.path.basename(path)[: -len(ext)]
            mask_path = path[: -len(ext)] + ext.replace("_image", "_mask")
            cases.setdefault(cid, (path, mask_path))
    if not cases:
        raise DataError(f"no <case>_image volumes found in {input_dir}")
    return cases


def _apply_roi(grid, mask, roi_arg):
    if not roi_arg:
        return grid, mask
    box = roi_from_mask(mask, _parse_list(roi_arg, float))
    return crop(grid, box), crop(mask, box)


def cmd_extract(args):
    labels = _read_labels(args.labels)
    cases = _discover_cases(args.input)
    sigmas = tuple(_parse_list(args.sigmas, float))
    config = ExtractionConfig(log_sigmas=sigmas, discretization=args.disc,
                              bin_width=args.bin_width, bin_count=args.bin_count)
    ids, rows, names = [], [], None
    failures = 0
    for cid in sorted(set(cases) & set(labels)):
        image_path, mask_path = cases[cid]
        try:
            grid = read_volume(image_path)
            mask = read_mask(mask_path)
            grid, mask = _apply_roi(grid, mask, args.roi)
            fv = extract_global(grid, mask, config)
        except (RadiomapError, OSError) as exc:
            log.warning("case %s skipped: %s", cid, exc)
            failures += 1
            continue
        if names is None:
            names = fv.names
        ids.append(cid)
        rows.append(fv.values)
    skipped_labels = sorted(set(labels) - set(cases))
    for cid in skipped_labels:
        log.warning("case %s listed in labels but has no volume; skipped", cid)
    if not ids:
        raise DataError("no case could be processed")
    table = FeatureTable(
        ids, names, np.vstack(rows),
        np.array([labels[c][0] for c in ids]),
        np.array([labels[c][1] for c in ids]))
    table.to_csv(args.out)
    log.info("wrote %d cases x %d features to %s (%d failures)",
             len(ids), len(names), args.out, failures)
    return 0


def cmd_map(args):
    features = _parse_list(args.features, str)
    if not features:
        raise UsageError("no map features given")
    for feature in features:  # usage errors before any processing
        parse_map_feature(feature)
    kernel = check_odd_kernel(args.kernel)
    cases = _discover_cases(args.input)
    os.makedirs(args.out, exist_ok=True)
    for cid in sorted(cases):
        image_path, mask_path = cases[cid]
        try:
            grid = read_volume(image_path)
            mask = read_mask(mask_path)
            grid, mask = _apply_roi(grid, mask, args.roi)
            maps = extract_map_fast(grid, mask, features, kernel=kernel,
                                    bin_count=args.bin_count, threads=args.threads)
        except (DataError, OSError) as exc:
            log.warning("case %s skipped: %s", cid, exc)
            continue
        for pm in maps:
            out_path = os.path.join(args.out, f"{cid}_{pm.feature_name}_k{kernel}.nii")
            write_volume(pm.grid, out_path)
    return 0


def cmd_select(args):
    table = FeatureTable.from_csv(args.table)
    report = select_features_cv(table, q=args.q, C=args.C, target=args.target,
                                folds=args.folds, seed=args.seed,
                                bin_size=args.bin_size)
    with open(args.out, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.scores:
        ids = [cid for cid in table.case_ids if cid in report.oof_scores]
        labels = {cid: int(l) for cid, l in zip(table.case_ids, table.labels)}
        sc = ScoredCases(ids, np.array([report.oof_scores[c] for c in ids]),
                         np.array([labels[c] for c in ids]))
        sc.to_csv(args.scores)
    return 0


def cmd_eval(args):
    a = ScoredCases.from_csv(args.scores)
    out = {"model_a": {"auroc": auroc(a), "ap": average_precision(a),
                       "n_cases": len(a.case_ids)}}
    if args.scores_b:
        b = ScoredCases.from_csv(args.scores_b)
        out["model_b"] = {"auroc": auroc(b), "ap": average_precision(b),
                          "n_cases": len(b.case_ids)}
        out["paired_test"] = {
            "n_perm": args.n_perm, "seed": args.seed,
            "p_auroc": paired_permutation_test(a, b, "auroc", args.n_perm, args.seed),
            "p_ap": paired_permutation_test(a, b, "ap", args.n_perm, args.seed),
        }
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_bench(args):
    config = BenchConfig(
        sizes=tuple(_parse_list(args.sizes, int)),
        kernel=check_odd_kernel(args.kernel),
        features=tuple(_parse_list(args.features, str)),
        thread_counts=tuple(_parse_list(args.threads, int)),
        repetitions=args.reps, seed=args.seed)
    report = bench_maps(config)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "bench.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "bench.csv"), "w") as fh:
        fh.write("\n".join(report.csv_lines()) + "\n")
    for row in report.comparisons:
        log.info("size %d, %d threads: speedup %.2fx (p=%.4g)",
                 row["size"], row["threads"], row["speedup"], row["p_value"])
    return 0


def cmd_phantom(args):
    if args.kind == "cohort":
        write_cohort_volumes(args.out, n_pos=args.n_pos, n_neg=args.n_neg,
                             dims=(args.dim,) * 3, seed=args.seed)
    else:
        spec = PhantomSpec(kind=args.kind, dims=(args.dim,) * 3,
                           size_mm=args.size_mm, seed=args.seed)
        grid, mask = make_phantom(spec)
        os.makedirs(args.out, exist_ok=True)
        write_volume(grid, os.path.join(args.out, f"{args.kind}_image.nii.gz"))
        write_volume(mask.as_volume(), os.path.join(args.out, f"{args.kind}_mask.nii.gz"),
                     dtype="int16")
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "map": cmd_map,
    "select": cmd_select,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "phantom": cmd_phantom,
}


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RadiomapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
