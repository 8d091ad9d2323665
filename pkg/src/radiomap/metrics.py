"""Case-level evaluation: AUROC, average precision, and a paired
case-swap permutation test for comparing two score sets."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .validation import check_binary_labels


@dataclass
class ScoredCases:
    case_ids: list
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.case_ids) == self.scores.size == self.labels.size):
            raise UsageError("case_ids, scores, labels must have equal length")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "score", "label"])
            for cid, s, l in zip(self.case_ids, self.scores, self.labels):
                writer.writerow([cid, format(float(s), ".12g"), int(l)])

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["case_id", "score", "label"]:
                raise DataError(f"{path}: expected header case_id,score,label")
            ids, scores, labels = [], [], []
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                scores.append(float(row[1]))
                labels.append(int(row[2]))
        if not ids:
            raise DataError(f"{path}: no data rows")
        return cls(ids, np.array(scores), np.array(labels))


def _average_ranks(scores):
    """1-based ranks with ties assigned the mean rank of the tied block."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[i:j + 1] = (i + j) / 2.0 + 1.0
        i = j + 1
    out = np.empty_like(ranks)
    out[order] = ranks
    return out


def auroc(scored):
    """Mann-Whitney AUROC: (correctly ordered pairs + half the ties) / (P*N)."""
    y = check_binary_labels(scored.labels)
    ranks = _average_ranks(scored.scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scored):
    """Step-sum AP over descending score thresholds, ties grouped."""
    y = np.asarray(scored.labels)
    if set(np.unique(y).tolist()) - {0, 1}:
        raise DataError("labels must be binary 0/1")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("average_precision requires at least one positive")
    order = np.argsort(-scored.scores, kind="stable")
    s = scored.scores[order]
    yy = y[order]
    # threshold group boundaries: last index of each tie block
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.append(boundary, s.size - 1)
    tp = np.cumsum(yy)[ends]
    fp = np.cumsum(1 - yy)[ends]
    recall = tp / n_pos
    precision = tp / (tp + fp)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev_recall) * precision).sum())


_METRICS = {"auroc": auroc, "ap": average_precision}


def paired_permutation_test(a, b, metric="auroc", n_perm=1000, seed=0):
    """Two-sided paired permutation test on the metric difference.

    The null randomly swaps (a_i, b_i) per case; p = (1 + #{|d_perm| >=
    |d_obs|}) / (1 + n_perm). Deterministic for a given seed.
    """
    if metric not in _METRICS:
        raise UsageError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    if n_perm < 100:
        raise UsageError(f"n_perm must be >= 100, got {n_perm}")
    if a.case_ids != b.case_ids or not np.array_equal(a.labels, b.labels):
        raise UsageError("paired test requires identical case ids and labels")
    fn = _METRICS[metric]
    observed = abs(fn(a) - fn(b))

    rng = np.random.default_rng(seed)
    n = a.scores.size
    count = 0
    sa, sb = a.scores, b.scores
    for _ in range(n_perm):
        swap = rng.random(n) < 0.5
        pa = np.where(swap, sb, sa)
        pb = np.where(swap, sa, sb)
        d = abs(fn(ScoredCases(a.case_ids, pa, a.labels))
                - fn(ScoredCases(b.case_ids, pb, b.labels)))
        if d >= observed:
            count += 1
    return (1 + count) / (1 + n_perm)
