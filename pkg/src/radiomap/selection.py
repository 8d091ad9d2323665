"""Feature-selection pipeline: z-scoring, univariate FDR filter, SVM-RFE,
cross-validated selection, and lesion-size-stratified folds.

All fitting statistics (imputation medians, standardization, p-values, RFE)
come from training cases only; held-out cases are never touched before
evaluation. ``select_features_cv`` accepts a ``trace`` list that records the
exact case ids used at each stage so leakage can be asserted in tests.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .errors import ConvergenceError, DataError, StratificationError, UsageError
from .stats import t_pvalue_two_sided
from .validation import check_binary_labels

_CONST_STD = 1e-12


@dataclass
class FeatureTable:
    """cases x features matrix with labels and lesion sizes."""

    case_ids: list
    feature_names: list
    matrix: np.ndarray
    labels: np.ndarray
    lesion_sizes: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.lesion_sizes = np.asarray(self.lesion_sizes, dtype=np.int64)
        n, p = self.matrix.shape
        if len(self.case_ids) != n or len(self.labels) != n or len(self.lesion_sizes) != n:
            raise UsageError("row count mismatch in FeatureTable")
        if len(self.feature_names) != p:
            raise UsageError("feature name count mismatch in FeatureTable")

    @property
    def n_cases(self):
        return self.matrix.shape[0]

    def rows(self, index):
        return FeatureTable(
            [self.case_ids[i] for i in index], list(self.feature_names),
            self.matrix[index], self.labels[index], self.lesion_sizes[index])

    def columns(self, names):
        idx = [self.feature_names.index(n) for n in names]
        return FeatureTable(list(self.case_ids), list(names),
                            self.matrix[:, idx], self.labels, self.lesion_sizes)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "label", "lesion_size_voxels"] + self.feature_names)
            for i, cid in enumerate(self.case_ids):
                cells = ["" if math.isnan(v) else format(v, ".12g") for v in self.matrix[i]]
                writer.writerow([cid, int(self.labels[i]), int(self.lesion_sizes[i])] + cells)

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:3] != ["case_id", "label", "lesion_size_voxels"]:
                raise DataError(
                    f"{path}: expected header starting case_id,label,lesion_size_voxels")
            names = header[3:]
            ids, labels, sizes, rows = [], [], [], []
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                labels.append(int(row[1]))
                sizes.append(int(row[2]))
                rows.append([float(c) if c != "" else float("nan") for c in row[3:]])
        if not ids:
            raise DataError(f"{path}: no data rows")
        return cls(ids, names, np.array(rows, dtype=np.float64),
                   np.array(labels), np.array(sizes))


def impute_median(table, medians=None):
    """Replace NaNs column-wise; medians default to the table's own columns."""
    X = table.matrix.copy()
    if medians is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
            medians = np.nanmedian(X, axis=0)
        medians = np.where(np.isnan(medians), 0.0, medians)
    nan_r, nan_c = np.nonzero(np.isnan(X))
    X[nan_r, nan_c] = medians[nan_c]
    out = FeatureTable(list(table.case_ids), list(table.feature_names), X,
                       table.labels, table.lesion_sizes)
    return out, medians


@dataclass
class ZScoreParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask of features flagged constant on train


def zscore_fit_apply(train, apply_to=None):
    """Standardize with train-only statistics (population std).

    Constant train columns map to 0 everywhere and are flagged in the params.
    Returns (params, standardized_train, standardized_apply_or_None).
    """
    if train.n_cases == 0:
        raise UsageError("zscore_fit_apply requires a nonempty training table")
    if apply_to is not None and apply_to.feature_names != train.feature_names:
        raise UsageError("feature name mismatch between train and apply tables")
    mean = train.matrix.mean(axis=0)
    std = train.matrix.std(axis=0)  # population
    constant = std < _CONST_STD
    safe = np.where(constant, 1.0, std)
    params = ZScoreParams(mean, std, constant)

    def apply(table):
        Z = (table.matrix - mean) / safe
        Z[:, constant] = 0.0
        return FeatureTable(list(table.case_ids), list(table.feature_names), Z,
                            table.labels, table.lesion_sizes)

    return params, apply(train), (apply(apply_to) if apply_to is not None else None)


def pointbiserial_pvalues(table):
    """Pearson correlation of each feature against the binary label.

    Two-sided p from t = r*sqrt((n-2)/(1-r^2)) on n-2 degrees of freedom;
    zero-variance features get r = 0, p = 1.
    """
    y = check_binary_labels(table.labels)
    n = table.n_cases
    if n < 4:
        raise DataError(f"pointbiserial needs n >= 4 cases, got {n}")
    X = table.matrix
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((xc ** 2).sum(axis=0))
    sy = math.sqrt((yc ** 2).sum())
    denom = sx * sy
    r = np.divide((xc * yc[:, None]).sum(axis=0), denom,
                  out=np.zeros(X.shape[1]), where=denom > 0)
    r = np.clip(r, -1.0, 1.0)
    p = np.ones_like(r)
    for k in range(r.size):
        if denom[k] <= 0:
            continue
        rr = r[k]
        if abs(rr) >= 1.0:
            p[k] = 0.0
        else:
            t = rr * math.sqrt((n - 2) / (1.0 - rr * rr))
            p[k] = t_pvalue_two_sided(t, n - 2)
    return r, p


def bh_fdr(pvalues, q=0.05):
    """Benjamini-Hochberg step-up; returns kept indices in ascending order."""
    if not 0.0 < q < 1.0:
        raise UsageError(f"q must be in (0, 1), got {q}")
    p = np.asarray(pvalues, dtype=np.float64)
    m = p.size
    if m == 0:
        return np.array([], dtype=np.intp)
    order = np.argsort(p, kind="stable")
    thresholds = q * (np.arange(1, m + 1) / m)
    passing = np.flatnonzero(p[order] <= thresholds)
    if passing.size == 0:
        return np.array([], dtype=np.intp)
    k = passing[-1] + 1
    return np.sort(order[:k])


# --- linear SVM (SMO over the dual, exact unpenalized bias) -----------------

def svm_objective(w, b, X, y, C):
    """Primal soft-margin objective 0.5*||w||^2 + C * sum hinge."""
    yy = _signed_labels(y)
    margins = yy * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


def _signed_labels(y):
    y = np.asarray(y)
    uniq = set(np.unique(y).tolist())
    if uniq <= {0, 1}:
        return 2.0 * y.astype(np.float64) - 1.0
    if uniq <= {-1, 1}:
        return y.astype(np.float64)
    raise DataError(f"labels must be 0/1 or -1/+1, found {sorted(uniq)}")


def _optimal_bias(f, yy, C):
    """Exact minimizer of the hinge sum over the bias for fixed weights.

    The hinge sum is piecewise linear in b with breakpoints y_i - f_i; the
    minimum is attained at (an interval of) breakpoints. Returns the midpoint
    of the minimizing breakpoint range for a deterministic, symmetric choice.
    """
    bp = yy - f
    pos = np.sort(bp[yy > 0])
    neg = np.sort(bp[yy < 0])
    cand = np.unique(bp)
    # sum_{pos breakpoints > b} (bp - b): suffix sums over sorted pos
    pos_cum = np.concatenate([[0.0], np.cumsum(pos)])
    total_pos = pos_cum[-1]
    i = np.searchsorted(pos, cand, side="right")
    pos_cost = (total_pos - pos_cum[i]) - cand * (pos.size - i)
    # sum_{neg breakpoints < b} (b - bp)
    neg_cum = np.concatenate([[0.0], np.cumsum(neg)])
    j = np.searchsorted(neg, cand, side="left")
    neg_cost = cand * j - neg_cum[j]
    h = pos_cost + neg_cost
    best = h.min()
    hits = np.flatnonzero(h <= best)
    return float((cand[hits[0]] + cand[hits[-1]]) / 2.0)


def svm_train(X, y, C=1.0, tol=1e-6, max_iter=200_000):
    """Train a linear soft-margin SVM; returns (weights, bias).

    Deterministic sequential minimal optimization over the dual with
    maximal-violating-pair selection; converged when the duality gap drops
    below tol * max(1, |primal|). Non-convergence raises ConvergenceError
    carrying the final gap. Decision score is w.x + b.
    """
    X = np.asarray(X, dtype=np.float64)
    yy = _signed_labels(y)
    if C <= 0:
        raise UsageError(f"C must be > 0, got {C}")
    n = X.shape[0]
    if n < 2 or (yy > 0).all() or (yy < 0).all():
        raise DataError("svm_train requires both classes present")

    # beta_i = y_i * alpha_i in [lo_i, hi_i]; w = X^T beta; G_i = w.x_i - y_i
    beta = np.zeros(n)
    lo = np.where(yy > 0, 0.0, -C)
    hi = np.where(yy > 0, C, 0.0)
    w = np.zeros(X.shape[1])
    G = -yy.copy()
    sq = (X * X).sum(axis=1)
    check_every = max(n, 32)
    gap = math.inf

    for it in range(1, max_iter + 1):
        can_up = beta < hi - 1e-12
        can_dn = beta > lo + 1e-12
        if not can_up.any() or not can_dn.any():
            break
        Gi = np.where(can_up, G, math.inf)
        Gj = np.where(can_dn, G, -math.inf)
        i = int(np.argmin(Gi))
        j = int(np.argmax(Gj))
        violation = G[j] - G[i]
        if violation <= 1e-14:
            break
        denom = sq[i] + sq[j] - 2.0 * float(X[i] @ X[j])
        lam = min(hi[i] - beta[i], beta[j] - lo[j])
        if denom > 1e-12:
            lam = min(lam, violation / denom)
        if lam <= 0.0:
            break
        beta[i] += lam
        beta[j] -= lam
        diff = X[i] - X[j]
        w += lam * diff
        G += lam * (X @ diff)

        if it % check_every == 0:
            gap = _duality_gap(w, G, beta, yy, C)
            if gap <= tol * max(1.0, abs(gap + _dual_value(w, beta))):
                break
    gap = _duality_gap(w, G, beta, yy, C)
    primal = gap + _dual_value(w, beta)
    if gap > tol * max(1.0, abs(primal)):
        raise ConvergenceError(
            f"SVM did not converge within {max_iter} pair updates", gap=gap)
    b = _optimal_bias(G + yy, yy, C)  # f_i = G_i + y_i
    return w, b


def _dual_value(w, beta):
    return float(np.abs(beta).sum()) - 0.5 * float(w @ w)


def _duality_gap(w, G, beta, yy, C):
    f = G + yy
    b = _optimal_bias(f, yy, C)
    primal = 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - yy * (f + b)).sum())
    return primal - _dual_value(w, beta)


def rfe(X, y, C=1.0, target=10, feature_names=None, tol=1e-6):
    """Recursive feature elimination: drop the smallest-|w| feature per round.

    Ties break toward the earlier column. Returns surviving names in original
    column order; if fewer features than ``target`` exist, returns all with a
    warning.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    if feature_names is None:
        feature_names = [f"f{k}" for k in range(p)]
    if target < 1:
        raise UsageError(f"target must be >= 1, got {target}")
    if p < target:
        warnings.warn(f"only {p} features available for RFE target {target}", stacklevel=2)
        return list(feature_names)
    active = list(range(p))
    while len(active) > target:
        w, _ = svm_train(X[:, active], y, C=C, tol=tol)
        drop = int(np.argmin(np.abs(w)))  # first index wins ties
        active.pop(drop)
    return [feature_names[k] for k in active]


def stratified_folds(lesion_sizes, labels, folds=5, bin_size=500, seed=0):
    """Deal cases round-robin into folds, stratified by lesion-size bin.

    Positive cases are grouped by floor(size / bin_size); negatives form one
    group. Each group is shuffled by the seed and dealt with a running cursor,
    so per-fold counts within any group differ by at most one.
    """
    labels = check_binary_labels(labels, require_both=False)
    sizes = np.asarray(lesion_sizes, dtype=np.int64)
    n = labels.size
    folds = int(folds)
    if folds < 2:
        raise UsageError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise UsageError(f"folds={folds} exceeds case count {n}")
    if bin_size < 1:
        raise UsageError(f"bin_size must be >= 1, got {bin_size}")

    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=np.int64)
    pos = np.flatnonzero(labels == 1)
    strata = {}
    for idx in pos:
        strata.setdefault(int(sizes[idx] // bin_size), []).append(int(idx))
    groups = [strata[k] for k in sorted(strata)]
    groups.append(np.flatnonzero(labels == 0).tolist())

    cursor = 0
    for members in groups:
        if not members:
            continue
        members = np.array(members)
        members = members[rng.permutation(members.size)]
        for idx in members:
            assignment[idx] = cursor % folds
            cursor += 1
    return assignment


@dataclass
class FoldResult:
    fold: int
    kept_after_fdr: list
    selected: list
    auroc: float
    ap: float
    shortfall: bool


@dataclass
class SelectionReport:
    kept_after_fdr: list
    final_selected: list
    fold_results: list
    best_fold: int
    svm_weights: dict
    svm_bias: float
    shortfall: bool
    oof_scores: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "kept_after_fdr": list(self.kept_after_fdr),
            "final_selected": list(self.final_selected),
            "best_fold": self.best_fold,
            "shortfall": self.shortfall,
            "folds": [
                {"fold": f.fold, "n_kept_after_fdr": len(f.kept_after_fdr),
                 "selected": list(f.selected), "auroc": _json_float(f.auroc),
                 "ap": _json_float(f.ap), "shortfall": f.shortfall}
                for f in self.fold_results
            ],
            "svm_weights": {k: _json_float(v) for k, v in self.svm_weights.items()},
            "svm_bias": _json_float(self.svm_bias),
            "mean_auroc": _json_float(float(np.nanmean(
                [f.auroc for f in self.fold_results]))),
            "mean_ap": _json_float(float(np.nanmean(
                [f.ap for f in self.fold_results]))),
        }


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else v


def select_features_cv(table, q=0.05, C=1.0, target=10, folds=10, seed=0,
                       bin_size=500, trace=None):
    """Cross-validated selection: per fold, impute/standardize/FDR/RFE on the
    training cases, evaluate on the held-out fold, and keep the feature set of
    the best-AUROC fold (ties -> lower fold index).
    """
    from .metrics import ScoredCases, auroc as _auroc, average_precision as _ap

    check_binary_labels(table.labels)
    assignment = stratified_folds(table.lesion_sizes, table.labels, folds=folds,
                                  bin_size=bin_size, seed=seed)
    results = []
    fold_models = {}
    oof = {}
    for f in range(folds):
        test_idx = np.flatnonzero(assignment == f)
        train_idx = np.flatnonzero(assignment != f)
        if test_idx.size == 0 or train_idx.size == 0:
            raise StratificationError(f"fold {f} is empty")
        train = table.rows(train_idx)
        test = table.rows(test_idx)
        for part, who in ((train, "train"), (test, "test")):
            if len(set(part.labels.tolist())) < 2:
                raise StratificationError(f"fold {f}: single class in {who} split")

        train, medians = impute_median(train)
        test, _ = impute_median(test, medians)
        _, train_z, test_z = zscore_fit_apply(train, test)

        _, pvals = pointbiserial_pvalues(train_z)
        kept_idx = bh_fdr(pvals, q)
        kept = [train_z.feature_names[k] for k in kept_idx]
        if trace is not None:
            trace.append({"fold": f, "stage": "fit", "train_ids": list(train.case_ids),
                          "test_ids": list(test.case_ids), "kept_after_fdr": kept})
        if not kept:
            results.append(FoldResult(f, [], [], float("nan"), float("nan"), True))
            continue

        Xtr = train_z.columns(kept).matrix
        with warnings.catch_warnings():
            # shortfall is recorded on the fold result instead
            warnings.simplefilter("ignore", UserWarning)
            selected = rfe(Xtr, train_z.labels, C=C, target=target, feature_names=kept)
        shortfall = len(selected) < target

        w, b = svm_train(train_z.columns(selected).matrix, train_z.labels, C=C)
        scores = test_z.columns(selected).matrix @ w + b
        sc = ScoredCases(list(test.case_ids), scores, test.labels)
        results.append(FoldResult(f, kept, selected, _auroc(sc), _ap(sc), shortfall))
        fold_models[f] = (w, b)
        for cid, s in zip(test.case_ids, scores):
            oof[cid] = float(s)

    aurocs = np.array([r.auroc for r in results])
    if np.all(np.isnan(aurocs)):
        raise DataError("no fold produced a usable feature set")
    best = int(np.nanargmax(aurocs))  # first max wins ties
    best_result = results[best]
    w, b = fold_models[best]
    weights = {name: float(val) for name, val in zip(best_result.selected, w)}
    return SelectionReport(
        kept_after_fdr=best_result.kept_after_fdr,
        final_selected=best_result.selected,
        fold_results=results,
        best_fold=best,
        svm_weights=weights,
        svm_bias=float(b),
        shortfall=best_result.shortfall,
        oof_scores=oof,
    )


# --- sklearn-style estimators ------------------------------------------------

class ZScoreScaler(BaseEstimator, TransformerMixin):
    """Train-statistics standardizer; constant columns transform to zero."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.std_ = X.std(axis=0)
        self.constant_ = self.std_ < _CONST_STD
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        Z = (X - self.mean_) / np.where(self.constant_, 1.0, self.std_)
        Z[:, self.constant_] = 0.0
        return Z


class FdrCorrelationFilter(BaseEstimator, TransformerMixin):
    """Keep features whose label correlation survives BH-FDR at level q."""

    def __init__(self, q=0.05):
        self.q = q

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        table = FeatureTable([str(i) for i in range(X.shape[0])],
                             [f"f{j}" for j in range(X.shape[1])],
                             X, np.asarray(y), np.zeros(X.shape[0], dtype=np.int64))
        self.r_, self.pvalues_ = pointbiserial_pvalues(table)
        kept = bh_fdr(self.pvalues_, self.q)
        self.support_ = np.zeros(X.shape[1], dtype=bool)
        self.support_[kept] = True
        return self

    def transform(self, X):
        return np.asarray(X)[:, self.support_]


class LinearSvmClassifier(BaseEstimator, ClassifierMixin):
    """Linear soft-margin SVM backed by the deterministic SMO solver."""

    def __init__(self, C=1.0, tol=1e-6, max_iter=200_000):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.coef_, self.intercept_ = svm_train(
            X, y, C=self.C, tol=self.tol, max_iter=self.max_iter)
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)


class SvmRfe(BaseEstimator, TransformerMixin):
    """Recursive elimination down to ``target`` features by smallest |w|."""

    def __init__(self, C=1.0, target=10, tol=1e-6):
        self.C = C
        self.target = target
        self.tol = tol

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        p = X.shape[1]
        n_keep = min(self.target, p)
        # sklearn convention: 1 = selected, larger rank = eliminated earlier.
        self.ranking_ = np.ones(p, dtype=np.int64)
        active = list(range(p))
        rank = p - n_keep + 1
        while len(active) > n_keep:
            w, _ = svm_train(X[:, active], y, C=self.C, tol=self.tol)
            drop = int(np.argmin(np.abs(w)))
            self.ranking_[active[drop]] = rank
            rank -= 1
            active.pop(drop)
        self.support_ = np.zeros(p, dtype=bool)
        self.support_[active] = True
        return self

    def transform(self, X):
        return np.asarray(X)[:, self.support_]
