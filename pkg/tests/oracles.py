"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written as plain scans and definition-level
formulas, sharing no code with the package's fast paths.
"""

import math

import numpy as np


def glcm_bruteforce(levels, directions):
    """Pair counting by explicit voxel loops; returns (counts, probs) stacks."""
    ng = int(levels.max())
    nx, ny, nz = levels.shape
    counts = np.zeros((len(directions), ng, ng))
    for k, (dx, dy, dz) in enumerate(directions):
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    a = levels[x, y, z]
                    if a == 0:
                        continue
                    px, py, pz = x + dx, y + dy, z + dz
                    if not (0 <= px < nx and 0 <= py < ny and 0 <= pz < nz):
                        continue
                    b = levels[px, py, pz]
                    if b == 0:
                        continue
                    counts[k, a - 1, b - 1] += 1
                    counts[k, b - 1, a - 1] += 1
    probs = np.zeros_like(counts)
    for k in range(len(directions)):
        s = counts[k].sum()
        if s > 0:
            probs[k] = counts[k] / s
    return counts, probs


def glrlm_bruteforce(levels, directions, rmax=None):
    """Maximal-run counting by walking each line voxel by voxel."""
    ng = int(levels.max())
    nx, ny, nz = levels.shape
    rmax = rmax or max(levels.shape)
    mats = np.zeros((len(directions), ng, rmax))

    def inside(p):
        return 0 <= p[0] < nx and 0 <= p[1] < ny and 0 <= p[2] < nz

    for k, d in enumerate(directions):
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    lv = levels[x, y, z]
                    if lv == 0:
                        continue
                    prev = (x - d[0], y - d[1], z - d[2])
                    if inside(prev) and levels[prev] == lv:
                        continue  # not a run start
                    length = 1
                    nxt = (x + d[0], y + d[1], z + d[2])
                    while inside(nxt) and levels[nxt] == lv:
                        length += 1
                        nxt = (nxt[0] + d[0], nxt[1] + d[1], nxt[2] + d[2])
                    mats[k, lv - 1, length - 1] += 1
    return mats


def ngtdm_bruteforce(levels):
    """Per-voxel 26-neighbour scan; returns (n_i, p_i, s_i)."""
    ng = int(levels.max())
    nx, ny, nz = levels.shape
    n_i = np.zeros(ng, dtype=np.int64)
    s_i = np.zeros(ng)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                lv = levels[x, y, z]
                if lv == 0:
                    continue
                total, cnt = 0, 0
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dz in (-1, 0, 1):
                            if dx == dy == dz == 0:
                                continue
                            px, py, pz = x + dx, y + dy, z + dz
                            if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz:
                                nb = levels[px, py, pz]
                                if nb > 0:
                                    total += int(nb)
                                    cnt += 1
                if cnt == 0:
                    continue
                n_i[lv - 1] += 1
                s_i[lv - 1] += abs(float(lv) - total / cnt)
    tot = n_i.sum()
    p_i = n_i / tot if tot else np.zeros(ng)
    return n_i, p_i, s_i


def glcm_feature_oracle(probs):
    """Definition-level GLCM features for one normalized matrix."""
    ng = probs.shape[0]
    px = [sum(probs[i][j] for j in range(ng)) for i in range(ng)]
    py = [sum(probs[i][j] for i in range(ng)) for j in range(ng)]
    mu_x = sum((i + 1) * px[i] for i in range(ng))
    mu_y = sum((j + 1) * py[j] for j in range(ng))
    sig_x = math.sqrt(sum((i + 1 - mu_x) ** 2 * px[i] for i in range(ng)))
    sig_y = math.sqrt(sum((j + 1 - mu_y) ** 2 * py[j] for j in range(ng)))
    corr = 0.0
    if sig_x * sig_y >= 1e-12:
        s = sum((i + 1) * (j + 1) * probs[i][j] for i in range(ng) for j in range(ng))
        corr = (s - mu_x * mu_y) / (sig_x * sig_y)
    hxy = -sum(probs[i][j] * math.log2(probs[i][j])
               for i in range(ng) for j in range(ng) if probs[i][j] > 0)
    hx = -sum(p * math.log2(p) for p in px if p > 0)
    hy = -sum(p * math.log2(p) for p in py if p > 0)
    hxy1 = -sum(probs[i][j] * math.log2(px[i] * py[j])
                for i in range(ng) for j in range(ng) if probs[i][j] > 0)
    imc1 = (hxy - hxy1) / max(hx, hy) if max(hx, hy) >= 1e-12 else 0.0
    contrast = sum((i - j) ** 2 * probs[i][j] for i in range(ng) for j in range(ng))
    idm = sum(probs[i][j] / (1 + (i - j) ** 2) for i in range(ng) for j in range(ng))
    return {"Correlation": corr, "Imc1": imc1, "JointEntropy": hxy,
            "Contrast": contrast, "InverseDifferenceMoment": idm}


def glrlm_feature_oracle(mats, n_voxels):
    """Definition-level run features averaged over directions with runs."""
    vals = {"ShortRunEmphasis": [], "LongRunEmphasis": [],
            "GrayLevelNonUniformity": [], "RunLengthNonUniformity": [],
            "RunPercentage": []}
    for mat in mats:
        nr = mat.sum()
        if nr == 0:
            continue
        ng, rmax = mat.shape
        vals["ShortRunEmphasis"].append(
            sum(mat[i][r] / (r + 1) ** 2 for i in range(ng) for r in range(rmax)) / nr)
        vals["LongRunEmphasis"].append(
            sum(mat[i][r] * (r + 1) ** 2 for i in range(ng) for r in range(rmax)) / nr)
        vals["GrayLevelNonUniformity"].append(
            sum(mat[i].sum() ** 2 for i in range(ng)) / nr)
        vals["RunLengthNonUniformity"].append(
            sum(mat[:, r].sum() ** 2 for r in range(rmax)) / nr)
        vals["RunPercentage"].append(nr / n_voxels)
    return {k: float(np.mean(v)) for k, v in vals.items()}


def ngtdm_feature_oracle(n_i, p_i, s_i):
    """Definition-level NGTDM features, epsilon-guarded like the spec."""
    eps = 1e-12
    ng = len(p_i)
    n_total = float(n_i.sum())
    act = [i for i in range(ng) if p_i[i] > 0]
    strength = sum((p_i[i] + p_i[j]) * ((i - j) ** 2)
                   for i in act for j in act) / (eps + float(s_i.sum()))
    ps = sum(p_i[i] * s_i[i] for i in act)
    coarseness = min(1.0 / (eps + ps), 1e6)
    ngp = len(act)
    if ngp > 1:
        contrast = (sum(p_i[i] * p_i[j] * (i - j) ** 2 for i in act for j in act)
                    / (ngp * (ngp - 1))) * (float(s_i.sum()) / n_total)
    else:
        contrast = 0.0
    busy_den = sum(abs((i + 1) * p_i[i] - (j + 1) * p_i[j]) for i in act for j in act)
    busyness = ps / busy_den if busy_den >= eps else 0.0
    complexity = sum(abs(i - j) * (p_i[i] * s_i[i] + p_i[j] * s_i[j])
                     / (p_i[i] + p_i[j]) for i in act for j in act) / n_total
    return {"Strength": strength, "Coarseness": coarseness, "Contrast": contrast,
            "Busyness": busyness, "Complexity": complexity}


def firstorder_oracle(v, levels, ng):
    """Plain-formula first-order statistics."""
    v = [float(x) for x in v]
    n = len(v)
    mean = sum(v) / n
    var = sum((x - mean) ** 2 for x in v) / n
    std = math.sqrt(var)
    out = {
        "Mean": mean, "Variance": var,
        "Minimum": min(v), "Maximum": max(v), "Range": max(v) - min(v),
        "Energy": sum(x * x for x in v),
        "RootMeanSquared": math.sqrt(sum(x * x for x in v) / n),
        "MeanAbsoluteDeviation": sum(abs(x - mean) for x in v) / n,
    }
    out["Skewness"] = (sum((x - mean) ** 3 for x in v) / n / std ** 3
                       if std >= 1e-12 else float("nan"))
    out["Kurtosis"] = (sum((x - mean) ** 4 for x in v) / n / std ** 4 - 3.0
                       if std >= 1e-12 else float("nan"))
    vs = sorted(v)
    for name, q in (("Percentile10", 0.1), ("Median", 0.5), ("Percentile90", 0.9)):
        pos = (n - 1) * q
        lo = int(math.floor(pos))
        frac = pos - lo
        out[name] = vs[lo] + frac * (vs[lo + 1] - vs[lo]) if lo + 1 < n else vs[lo]
    hist = [0] * ng
    for l in levels:
        hist[l - 1] += 1
    probs = [h / n for h in hist]
    out["Entropy"] = -sum(p * math.log2(p) for p in probs if p > 0)
    out["Uniformity"] = sum(p * p for p in probs)
    return out


def log_filter_dense_oracle(values, sigma_mm, spacing):
    """Dense (non-separable) LoG: explicit 3D Gaussian kernel under mirror
    padding, then the 6-neighbour physical Laplacian, scaled by sigma^2."""
    sig_vox = [sigma_mm / s for s in spacing]
    taps = []
    for sv in sig_vox:
        radius = max(1, int(math.ceil(4.0 * sv)))
        x = np.arange(-radius, radius + 1, dtype=np.float64)
        k = np.exp(-0.5 * (x / sv) ** 2)
        taps.append(k / k.sum())
    kernel = taps[0][:, None, None] * taps[1][None, :, None] * taps[2][None, None, :]
    radii = [(t.size - 1) // 2 for t in taps]

    padded = np.pad(values, [(r, r) for r in radii], mode="reflect")
    blurred = np.zeros_like(values)
    nx, ny, nz = values.shape
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                region = padded[x:x + kernel.shape[0],
                                y:y + kernel.shape[1],
                                z:z + kernel.shape[2]]
                blurred[x, y, z] = (region * kernel).sum()

    lap_padded = np.pad(blurred, 1, mode="reflect")
    lap = np.zeros_like(blurred)
    for axis in range(3):
        up = np.roll(lap_padded, -1, axis=axis)[1:-1, 1:-1, 1:-1]
        dn = np.roll(lap_padded, 1, axis=axis)[1:-1, 1:-1, 1:-1]
        lap += (up - 2 * blurred + dn) / spacing[axis] ** 2
    return lap * sigma_mm ** 2


def auroc_bruteforce(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def average_precision_bruteforce(scores, labels):
    """Threshold sweep over unique scores in descending order."""
    n_pos = sum(labels)
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s >= t and l == 1)
        fp = sum(1 for s, l in zip(scores, labels) if s >= t and l == 0)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def incomplete_beta_cf(a, b, x, max_iter=300, tol=1e-14):
    """Regularized incomplete beta via the Lentz continued fraction."""
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    if x > (a + 1) / (a + b + 2):
        return 1.0 - incomplete_beta_cf(b, a, 1.0 - x, max_iter, tol)
    ln_front = (a * math.log(x) + b * math.log(1 - x)
                + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))
    tiny = 1e-300
    f, c, d = 1.0, 1.0, 0.0
    for m in range(max_iter):
        if m == 0:
            num = 1.0
        elif m % 2 == 0:
            k = m // 2
            num = k * (b - k) * x / ((a + 2 * k - 1) * (a + 2 * k))
        else:
            k = (m - 1) // 2
            num = -(a + k) * (a + b + k) * x / ((a + 2 * k) * (a + 2 * k + 1))
        d = 1.0 + num * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + num / (c if abs(c) > tiny else tiny)
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < tol:
            break
    return math.exp(ln_front) * (f - 1.0) / a


def t_sf_oracle(t, df):
    """P(T > t) from the continued-fraction incomplete beta."""
    x = df / (df + t * t)
    tail = 0.5 * incomplete_beta_cf(df / 2.0, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def svm_subgradient_reference(X, y, C, iters=200_000, seed=0):
    """Projected-subgradient descent on the primal soft-margin objective.

    Slow but independent of any dual solver; good enough to compare decision
    signs on the training points.
    """
    X = np.asarray(X, dtype=np.float64)
    yy = 2.0 * np.asarray(y) - 1.0 if set(np.unique(y)) <= {0, 1} else np.asarray(y, float)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    best_w, best_b, best_obj = w.copy(), b, math.inf
    for t in range(1, iters + 1):
        margins = yy * (X @ w + b)
        active = margins < 1.0
        grad_w = w - C * (yy[active][:, None] * X[active]).sum(axis=0)
        grad_b = -C * yy[active].sum()
        eta = 1.0 / (1.0 + 0.01 * t)
        w = w - eta * grad_w / n
        b = b - eta * grad_b / n
        if t % 100 == 0:
            obj = 0.5 * w @ w + C * np.maximum(0, 1 - yy * (X @ w + b)).sum()
            if obj < best_obj:
                best_obj, best_w, best_b = obj, w.copy(), b
    return best_w, best_b
