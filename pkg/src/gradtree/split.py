"""Split finding for model trees.

Three gain computations share one sweep skeleton: the impurity baseline
(information gain / variance reduction), the gradient-norm gain, and the
renormalized gradient-norm gain. Per-sample gradients are computed once per
node; each feature is then scanned in sorted order, accumulating the left-side
gradient sum and obtaining the right side by subtraction from the node total.
An exact retraining gain is provided as a test and benchmark oracle.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Task
from .weak import (
    SCALE_CLIP,
    NormKind,
    TrainingError,
    apply_normalization,
    fit_node_model,
    loss_value,
    params_to_raw,
    predict,
    sample_gradients,
)


@dataclass(frozen=True)
class SplitDecision:
    """One chosen split: feature index, raw-space threshold, and its gain."""

    feature: int
    threshold: float
    gain: float
    left_count: int
    right_count: int


@dataclass(frozen=True)
class FeatureScan:
    """Per-candidate results of sweeping one feature (inspection surface).

    grad_left / grad_right are the raw summed gradients per candidate, before
    any renormalization correction; gains are the final (possibly corrected)
    gain values.
    """

    feature: int
    thresholds: np.ndarray
    left_counts: np.ndarray
    gains: np.ndarray
    grad_left: np.ndarray = None
    grad_right: np.ndarray = None


def enumerate_candidates(values, max_candidates):
    """Candidate thresholds for one feature.

    Midpoints between consecutive distinct sorted values; if there are more
    than max_candidates of those, the midpoints at max_candidates
    empirical-quantile cut positions over the distinct values. Thresholds are
    strictly increasing and every one of them separates the values into two
    nonempty halves. A feature with a single distinct value has no candidates.
    """
    if max_candidates < 1:
        raise ValueError("max_candidates must be positive")
    vals = np.unique(np.asarray(values, dtype=np.float64))
    d = vals.size
    if d < 2:
        return np.empty(0, dtype=np.float64)
    if d - 1 <= max_candidates:
        return (vals[:-1] + vals[1:]) / 2.0
    # Quantile cut positions over the distinct values: strictly increasing
    # because d / (max_candidates + 1) > 1.
    q = np.arange(1, max_candidates + 1, dtype=np.int64)
    ks = (q * d) // (max_candidates + 1)
    return (vals[ks - 1] + vals[ks]) / 2.0


def gradient_gain(g_left, g_right, n_left, n_right, unweighted=False):
    """Approximate gain of a split from the two summed child gradients.

    Default: squared norms weighted by the inverse child sizes (the scale
    factor of the one-step estimate is fixed to 1). With `unweighted`, the
    plain sum of squared norms.
    """
    g_left = np.asarray(g_left, dtype=np.float64)
    g_right = np.asarray(g_right, dtype=np.float64)
    sq_l = float(g_left @ g_left)
    sq_r = float(g_right @ g_right)
    if unweighted:
        return sq_l + sq_r
    return sq_l / n_left + sq_r / n_right


def _candidate_prefixes(x_sorted, max_candidates, min_samples_leaf):
    """Thresholds plus, for each, how many sorted rows fall on its left side."""
    thresholds = enumerate_candidates(x_sorted, max_candidates)
    if thresholds.size == 0:
        return None
    left = np.searchsorted(x_sorted, thresholds, side="right")
    keep = (left >= min_samples_leaf) & (x_sorted.size - left >= min_samples_leaf)
    if not keep.any():
        return None
    return thresholds[keep], left[keep]


def _prefix_sums(values_sorted, bounds):
    """Column sums over [0, bounds[k]) for k = 1..P, plus the full-column total.

    bounds is the strictly increasing array [0, c_1, .., c_P] of candidate
    boundaries; segment sums between consecutive boundaries are accumulated so
    the whole sweep costs one pass regardless of the number of candidates.
    """
    seg = np.add.reduceat(values_sorted, bounds, axis=0)
    pre = np.cumsum(seg[:-1], axis=0)
    total = pre[-1] + seg[-1]
    return pre, total


def _affine_refit_z(count, sums, sqsums):
    mean = sums / count
    var = np.maximum(sqsums / count - mean * mean, 0.0)
    a = 1.0 / np.maximum(np.sqrt(var), SCALE_CLIP)
    return a, -mean * a


def _affine_refit_minmax(lo, hi):
    a = 1.0 / np.maximum(hi - lo, SCALE_CLIP)
    return a, -lo * a


def _renormalized_sq_norm(grads, a, c):
    # Chain rule into the subset's normalized parameter space, applied to the
    # summed gradient: gw[j] -> a[j]*gw[j] + c[j]*gb, gb unchanged.
    gw = a * grads[:, :-1] + c * grads[:, -1:]
    return np.einsum("ij,ij->i", gw, gw) + grads[:, -1] ** 2


def scan_feature_gradient(
    x_raw,
    X_node,
    grads,
    grad_total,
    *,
    feature=0,
    renorm_kind=None,
    min_samples_leaf=1,
    max_candidates=255,
    unweighted_gain=False,
    validate_every=0,
):
    """Gradient-gain sweep over every admissible threshold of one feature.

    x_raw holds the feature's raw values (thresholds live in raw space);
    X_node and grads live in the node's normalized space. When renorm_kind is
    z or minmax, the summed gradients of each candidate subset are corrected
    into that subset's own normalized parameter space; the needed statistics
    are accumulated over the node-space features during the same sweep
    (correcting from node space or raw space yields the same subset-space
    gradient, so the matrix already at hand is used).

    validate_every > 0 recomputes, for every validate_every-th candidate, the
    left/right gradient sums by naive summation and asserts the decomposition
    g_left + g_right == grad_total componentwise within 1e-6.
    """
    x_raw = np.asarray(x_raw, dtype=np.float64)
    n = x_raw.size
    order = np.argsort(x_raw, kind="stable")
    xs = x_raw[order]
    cand = _candidate_prefixes(xs, max_candidates, min_samples_leaf)
    if cand is None:
        return None
    thresholds, left = cand
    n_left = left.astype(np.float64)
    n_right = n - n_left

    grads_sorted = grads[order]
    bounds = np.concatenate(([0], left))
    g_left, _ = _prefix_sums(grads_sorted, bounds)
    g_right = grad_total[None, :] - g_left

    if validate_every:
        for k in range(0, left.size, validate_every):
            naive_total = grads_sorted[: left[k]].sum(axis=0) + grads_sorted[left[k]:].sum(axis=0)
            gap = np.abs(g_left[k] + g_right[k] - naive_total).max()
            if gap >= 1e-6:
                raise AssertionError(
                    f"gradient decomposition broke at candidate {k} "
                    f"of feature {feature}: max deviation {gap:g}"
                )

    if renorm_kind in (None, NormKind.IDENTITY):
        sq_l = np.einsum("ij,ij->i", g_left, g_left)
        sq_r = np.einsum("ij,ij->i", g_right, g_right)
    elif NormKind(renorm_kind) is NormKind.Z:
        X_sorted = X_node[order]
        s1, t1 = _prefix_sums(X_sorted, bounds)
        s2, t2 = _prefix_sums(X_sorted * X_sorted, bounds)
        a_l, c_l = _affine_refit_z(n_left[:, None], s1, s2)
        a_r, c_r = _affine_refit_z(n_right[:, None], t1 - s1, t2 - s2)
        sq_l = _renormalized_sq_norm(g_left, a_l, c_l)
        sq_r = _renormalized_sq_norm(g_right, a_r, c_r)
    else:
        X_sorted = X_node[order]
        seg_min = np.minimum.reduceat(X_sorted, bounds, axis=0)
        seg_max = np.maximum.reduceat(X_sorted, bounds, axis=0)
        lo_l = np.minimum.accumulate(seg_min[:-1], axis=0)
        hi_l = np.maximum.accumulate(seg_max[:-1], axis=0)
        lo_r = np.minimum.accumulate(seg_min[::-1], axis=0)[::-1][1:]
        hi_r = np.maximum.accumulate(seg_max[::-1], axis=0)[::-1][1:]
        a_l, c_l = _affine_refit_minmax(lo_l, hi_l)
        a_r, c_r = _affine_refit_minmax(lo_r, hi_r)
        sq_l = _renormalized_sq_norm(g_left, a_l, c_l)
        sq_r = _renormalized_sq_norm(g_right, a_r, c_r)

    if unweighted_gain:
        gains = sq_l + sq_r
    else:
        gains = sq_l / n_left + sq_r / n_right

    return FeatureScan(feature, thresholds, left, gains, g_left, g_right)


def _map_features(fn, n_features, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n_features)))
    return [fn(j) for j in range(n_features)]


def _pick_best(scans, n_rows):
    """Deterministic argmax over per-feature scans.

    Ties keep the lowest feature index, then the lowest threshold: scans are
    visited in feature order and each scan's first-maximum candidate is taken,
    with strict > comparison across features.
    """
    best = None
    for scan in scans:
        if scan is None:
            continue
        k = int(np.argmax(scan.gains))
        gain = float(scan.gains[k])
        if best is None or gain > best.gain:
            left = int(scan.left_counts[k])
            best = SplitDecision(scan.feature, float(scan.thresholds[k]), gain, left, n_rows - left)
    return best


def best_split_gradient(
    X,
    y,
    model,
    norm,
    *,
    renormalize,
    min_samples_leaf,
    max_candidates=255,
    unweighted_gain=False,
    threads=1,
    validate_every=0,
):
    """Best split of a node by the gradient-norm gain.

    X holds the node's rows in raw feature space; `model` is the node's
    trained weak model in the space produced by `norm`. Per-sample gradients
    are computed once, then every feature is swept. Returns None when no
    candidate satisfies min_samples_leaf on both sides.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, m = X.shape
    min_samples_leaf = max(1, int(min_samples_leaf))
    if n < 2 * min_samples_leaf:
        return None

    Xn = apply_normalization(norm, X)
    grads = sample_gradients(model, Xn, y)
    finite = np.isfinite(grads).all(axis=1)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise TrainingError(f"non-finite per-sample gradient at view row {row}")
    grad_total = grads.sum(axis=0)
    renorm_kind = norm.kind if renormalize else None

    def scan(j):
        return scan_feature_gradient(
            X[:, j],
            Xn,
            grads,
            grad_total,
            feature=j,
            renorm_kind=renorm_kind,
            min_samples_leaf=min_samples_leaf,
            max_candidates=max_candidates,
            unweighted_gain=unweighted_gain,
            validate_every=validate_every,
        )

    return _pick_best(_map_features(scan, m, threads), n)


def _entropy(p):
    """Binary entropy in bits, elementwise; 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    q = p[inner]
    out[inner] = -(q * np.log2(q) + (1.0 - q) * np.log2(1.0 - q))
    return out


def scan_feature_impurity(
    x_raw,
    y,
    task,
    *,
    feature=0,
    min_samples_leaf=1,
    max_candidates=255,
):
    """Impurity sweep over one feature: information gain for classification,
    variance reduction for regression. Same candidates and prefix bookkeeping
    as the gradient sweep."""
    x_raw = np.asarray(x_raw, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x_raw.size
    order = np.argsort(x_raw, kind="stable")
    xs = x_raw[order]
    cand = _candidate_prefixes(xs, max_candidates, min_samples_leaf)
    if cand is None:
        return None
    thresholds, left = cand
    n_left = left.astype(np.float64)
    n_right = n - n_left
    ys = y[order][:, None]
    bounds = np.concatenate(([0], left))

    if Task(task) is Task.CLASSIFICATION:
        pos_left, pos_total = _prefix_sums(ys, bounds)
        pos_left = pos_left[:, 0]
        pos_total = float(pos_total[0])
        h_parent = float(_entropy(pos_total / n))
        h_left = _entropy(pos_left / n_left)
        h_right = _entropy((pos_total - pos_left) / n_right)
        gains = h_parent - (n_left / n) * h_left - (n_right / n) * h_right
    else:
        s1, t1 = _prefix_sums(ys, bounds)
        s2, t2 = _prefix_sums(ys * ys, bounds)
        s1, s2 = s1[:, 0], s2[:, 0]
        t1, t2 = float(t1[0]), float(t2[0])

        def variance(total, sq, count):
            mean = total / count
            return np.maximum(sq / count - mean * mean, 0.0)

        var_parent = float(variance(t1, t2, n))
        gains = (
            var_parent
            - (n_left / n) * variance(s1, s2, n_left)
            - (n_right / n) * variance(t1 - s1, t2 - s2, n_right)
        )
    gains = np.maximum(gains, 0.0)  # guard fp round-off on pure nodes
    return FeatureScan(feature, thresholds, left, gains)


def best_split_impurity(
    X,
    y,
    task,
    *,
    min_samples_leaf,
    max_candidates=255,
    threads=1,
):
    """Best split by the classical decision-tree criterion, with the same
    candidate enumeration and tie-breaking as the gradient variant."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, m = X.shape
    min_samples_leaf = max(1, int(min_samples_leaf))
    if n < 2 * min_samples_leaf:
        return None

    def scan(j):
        return scan_feature_impurity(
            X[:, j],
            y,
            task,
            feature=j,
            min_samples_leaf=min_samples_leaf,
            max_candidates=max_candidates,
        )

    return _pick_best(_map_features(scan, m, threads), n)


def exact_gain_oracle(X, y, link, split, *, norm_kind, gd):
    """True gain of a split, by actually retraining.

    Trains the parent model on all rows and one child model per side (same
    descent settings, children warm-started from the parent), then returns the
    summed parent loss minus the summed child losses. Used as a test and
    benchmark oracle only; tree construction never calls this.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    mask = X[:, split.feature] <= split.threshold
    if not mask.any() or mask.all():
        raise ValueError("split does not partition the view")

    norm_p, theta_p, _ = fit_node_model(X, y, link, norm_kind, gd)
    raw_parent = params_to_raw(theta_p, norm_p)

    gain = 0.0
    for side in (mask, ~mask):
        X_side, y_side = X[side], y[side]
        _, theta_c, Xn_c = fit_node_model(
            X_side, y_side, link, norm_kind, gd, warm_start_raw=raw_parent
        )
        parent_losses = loss_value(
            link, y_side, predict(theta_p, apply_normalization(norm_p, X_side))
        )
        child_losses = loss_value(link, y_side, predict(theta_c, Xn_c))
        gain += float(np.sum(parent_losses)) - float(np.sum(child_losses))
    return gain
