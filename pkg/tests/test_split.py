import math

import numpy as np
import pytest

from gradtree import (
    GdConfig,
    Link,
    NormalizationParams,
    NormKind,
    Task,
    WeakModelParams,
    apply_normalization,
    best_split_gradient,
    best_split_impurity,
    enumerate_candidates,
    exact_gain_oracle,
    gradient_gain,
    sample_gradients,
)
from gradtree.split import SplitDecision, scan_feature_gradient, scan_feature_impurity
from gradtree.weak import fit_node_model

from conftest import make_classification_dataset, make_regression_dataset


# --- independent oracles: naive per-candidate recomputation ----------------

def naive_z_correction(g, X_subset):
    mu = X_subset.mean(axis=0)
    sd = X_subset.std(axis=0)
    a = 1.0 / np.maximum(sd, 1e-12)
    c = -mu * a
    return np.concatenate([a * g[:-1] + c * g[-1], [g[-1]]])


def naive_minmax_correction(g, X_subset):
    lo = X_subset.min(axis=0)
    hi = X_subset.max(axis=0)
    a = 1.0 / np.maximum(hi - lo, 1e-12)
    c = -lo * a
    return np.concatenate([a * g[:-1] + c * g[-1], [g[-1]]])


def brute_force_gradient_gains(X, y, model, norm, *, renormalize, min_leaf,
                               max_candidates, unweighted=False):
    """Recompute every candidate's gain from scratch with boolean masks."""
    Xn = apply_normalization(norm, X)
    grads = sample_gradients(model, Xn, y)
    per_feature = {}
    for j in range(X.shape[1]):
        rows = []
        for t in enumerate_candidates(X[:, j], max_candidates):
            mask = X[:, j] <= t
            nl, nr = int(mask.sum()), int((~mask).sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            gl = grads[mask].sum(axis=0)
            gr = grads[~mask].sum(axis=0)
            if renormalize and norm.kind is NormKind.Z:
                gl, gr = naive_z_correction(gl, Xn[mask]), naive_z_correction(gr, Xn[~mask])
            elif renormalize and norm.kind is NormKind.MINMAX:
                gl, gr = naive_minmax_correction(gl, Xn[mask]), naive_minmax_correction(gr, Xn[~mask])
            rows.append((float(t), gradient_gain(gl, gr, nl, nr, unweighted), nl, nr))
        if rows:
            per_feature[j] = rows
    return per_feature


def brute_force_best(per_feature):
    best = None
    for j in sorted(per_feature):
        for t, gain, nl, nr in per_feature[j]:
            if best is None or gain > best.gain:
                best = SplitDecision(j, t, gain, nl, nr)
    return best


def naive_entropy(labels):
    p = labels.mean()
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def brute_force_impurity_best(X, y, task, *, min_leaf, max_candidates):
    best = None
    n = len(y)
    for j in range(X.shape[1]):
        for t in enumerate_candidates(X[:, j], max_candidates):
            mask = X[:, j] <= t
            nl, nr = int(mask.sum()), int((~mask).sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            if task is Task.CLASSIFICATION:
                gain = (naive_entropy(y)
                        - nl / n * naive_entropy(y[mask])
                        - nr / n * naive_entropy(y[~mask]))
            else:
                gain = (y.var() - nl / n * y[mask].var() - nr / n * y[~mask].var())
            gain = max(gain, 0.0)
            if best is None or gain > best.gain:
                best = SplitDecision(j, float(t), gain, nl, nr)
    return best


# --- candidate enumeration --------------------------------------------------

def test_candidates_are_midpoints():
    assert np.allclose(enumerate_candidates([1.0, 1.0, 2.0, 3.0], 255), [1.5, 2.5])
    assert enumerate_candidates([7.0, 7.0, 7.0], 255).size == 0


def test_candidates_quantile_bins_near_equal(rng):
    values = rng.uniform(0, 1, size=1000)
    assert np.unique(values).size == 1000
    thresholds = enumerate_candidates(values, 255)
    assert thresholds.size == 255
    assert np.all(np.diff(thresholds) > 0)
    counts = np.diff(np.searchsorted(np.sort(values), thresholds, side="right"),
                     prepend=0, append=1000)
    # oracle: quantile bins over 1000 distinct values may differ by at most ceil(1000/255)
    assert counts.max() - counts.min() <= math.ceil(1000 / 255)
    assert counts.sum() == 1000 and counts.min() >= 1


# --- gain arithmetic ---------------------------------------------------------

def test_gradient_gain_arithmetic():
    assert gradient_gain([3.0, 4.0], [0.0, 0.0], 2, 5) == pytest.approx(12.5)
    assert gradient_gain([1.0, 0.0], [-1.0, 0.0], 1, 1) == pytest.approx(2.0)
    assert gradient_gain([0.0, 0.0], [0.0, 0.0], 3, 4) == 0.0
    assert gradient_gain([3.0, 4.0], [1.0, 1.0], 2, 5,
                         unweighted=True) == pytest.approx(27.0)


def test_scan_two_rows_single_candidate():
    scan = scan_feature_gradient(
        np.array([0.0, 1.0]),
        np.array([[0.0], [1.0]]),
        np.array([[1.0, 0.0], [-1.0, 0.0]]),
        np.array([0.0, 0.0]),
        min_samples_leaf=1,
    )
    assert scan.thresholds.tolist() == [0.5]
    assert scan.gains[0] == pytest.approx(2.0)
    assert scan.left_counts.tolist() == [1]


def test_perfectly_fit_node_all_gains_zero(rng):
    X = rng.normal(size=(40, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 3.0
    model = WeakModelParams(np.array([1.0, -2.0, 0.5]), 3.0, Link.IDENTITY)
    norm = NormalizationParams.identity(3)
    decision = best_split_gradient(X, y, model, norm, renormalize=False,
                                   min_samples_leaf=1, max_candidates=16)
    assert decision.gain == 0.0
    assert decision.feature == 0  # tie-break: lowest feature index
    first_threshold = enumerate_candidates(X[:, 0], 16)[0]
    assert decision.threshold == pytest.approx(first_threshold)  # then lowest threshold


@pytest.mark.parametrize("renormalize,kind,unweighted", [
    (False, NormKind.Z, False),
    (True, NormKind.Z, False),
    (True, NormKind.MINMAX, False),
    (False, NormKind.IDENTITY, False),
    (False, NormKind.Z, True),
    (True, NormKind.Z, True),
])
def test_gradient_split_matches_brute_force_oracle(renormalize, kind, unweighted):
    for seed in range(6):
        ds = make_regression_dataset(seed, n=200, m=4)
        X, y = ds.features, ds.labels
        norm, model, _ = fit_node_model(X, y, Link.IDENTITY, kind, GdConfig(max_epochs=60))
        got = best_split_gradient(X, y, model, norm, renormalize=renormalize,
                                  min_samples_leaf=5, max_candidates=20,
                                  unweighted_gain=unweighted)
        per_feature = brute_force_gradient_gains(
            X, y, model, norm, renormalize=renormalize, min_leaf=5, max_candidates=20,
            unweighted=unweighted)
        expected = brute_force_best(per_feature)
        assert got.feature == expected.feature
        assert got.threshold == pytest.approx(expected.threshold, abs=0)
        assert got.gain == pytest.approx(expected.gain, rel=1e-9)
        assert (got.left_count, got.right_count) == (expected.left_count, expected.right_count)


def test_sweep_gains_equal_from_scratch_recompute():
    ds = make_classification_dataset(1, n=150, m=3)
    X, y = ds.features, ds.labels
    norm, model, Xn = fit_node_model(X, y, Link.LOGISTIC, NormKind.Z, GdConfig(max_epochs=80))
    grads = sample_gradients(model, Xn, y)
    total = grads.sum(axis=0)
    per_feature = brute_force_gradient_gains(
        X, y, model, norm, renormalize=True, min_leaf=3, max_candidates=24)
    for j in range(X.shape[1]):
        scan = scan_feature_gradient(
            X[:, j], Xn, grads, total, feature=j, renorm_kind=NormKind.Z,
            min_samples_leaf=3, max_candidates=24)
        naive = per_feature[j]
        assert scan.gains.size == len(naive)
        for k, (t, gain, nl, _) in enumerate(naive):
            assert scan.thresholds[k] == pytest.approx(t, abs=0)
            assert scan.left_counts[k] == nl
            assert abs(scan.gains[k] - gain) <= 1e-9 * max(1.0, abs(gain))


def test_decomposition_identity_during_sweeps():
    for seed in range(4):
        ds = make_regression_dataset(seed, n=200, m=10)
        X, y = ds.features, ds.labels
        norm, model, Xn = fit_node_model(X, y, Link.IDENTITY, NormKind.Z, GdConfig(max_epochs=40))
        grads = sample_gradients(model, Xn, y)
        total = grads.sum(axis=0)
        for j in range(X.shape[1]):
            # validate_every=16 asserts g_left + g_right == total by naive sums
            scan = scan_feature_gradient(X[:, j], Xn, grads, total, feature=j,
                                         min_samples_leaf=1, max_candidates=255,
                                         validate_every=16)
            gap = np.abs(scan.grad_left + scan.grad_right - total).max()
            assert gap < 1e-6


def test_min_samples_leaf_and_tiny_views(rng):
    X = rng.normal(size=(6, 2))
    y = rng.normal(size=6)
    model = WeakModelParams.zeros(2, Link.IDENTITY)
    norm = NormalizationParams.identity(2)
    assert best_split_gradient(X, y, model, norm, renormalize=False,
                               min_samples_leaf=4) is None
    assert best_split_impurity(X, y, Task.REGRESSION, min_samples_leaf=4) is None


# --- impurity baseline -------------------------------------------------------

def test_information_gain_perfect_split():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    got = best_split_impurity(X, y, Task.CLASSIFICATION, min_samples_leaf=1)
    assert got.threshold == pytest.approx(0.5)
    assert got.gain == pytest.approx(1.0)  # one full bit


def test_pure_labels_all_gains_zero(rng):
    X = rng.normal(size=(30, 2))
    y = np.ones(30)
    got = best_split_impurity(X, y, Task.CLASSIFICATION, min_samples_leaf=1, max_candidates=8)
    assert got.gain == 0.0 and got.feature == 0


def test_variance_reduction_matches_brute_force():
    for seed in range(5):
        ds = make_regression_dataset(seed, n=150, m=3)
        X, y = ds.features, ds.labels
        got = best_split_impurity(X, y, Task.REGRESSION, min_samples_leaf=5, max_candidates=16)
        expected = brute_force_impurity_best(X, y, Task.REGRESSION,
                                             min_leaf=5, max_candidates=16)
        assert got.feature == expected.feature
        assert got.threshold == pytest.approx(expected.threshold, abs=0)
        assert got.gain == pytest.approx(expected.gain, rel=1e-9)


def test_information_gain_matches_brute_force():
    for seed in range(5):
        ds = make_classification_dataset(seed, n=150, m=3)
        X, y = ds.features, ds.labels
        got = best_split_impurity(X, y, Task.CLASSIFICATION, min_samples_leaf=5, max_candidates=16)
        expected = brute_force_impurity_best(X, y, Task.CLASSIFICATION,
                                             min_leaf=5, max_candidates=16)
        assert got.feature == expected.feature
        assert got.threshold == pytest.approx(expected.threshold, abs=0)
        assert got.gain == pytest.approx(expected.gain, rel=1e-9)


def test_y_equals_feature_split_is_variance_optimal(rng):
    x = rng.uniform(0, 10, size=80)
    X = x[:, None]
    got = best_split_impurity(X, x, Task.REGRESSION, min_samples_leaf=1, max_candidates=32)
    expected = brute_force_impurity_best(X, x, Task.REGRESSION, min_leaf=1, max_candidates=32)
    assert (got.feature, got.threshold) == (expected.feature, expected.threshold)
    assert got.gain == pytest.approx(expected.gain, rel=1e-9)


# --- gains are nonnegative ---------------------------------------------------

def test_gains_nonnegative_everywhere():
    for seed in range(4):
        ds = make_classification_dataset(seed, n=120, m=3)
        X, y = ds.features, ds.labels
        norm, model, Xn = fit_node_model(X, y, Link.LOGISTIC,
                                         NormKind.Z, GdConfig(max_epochs=50))
        grads = sample_gradients(model, Xn, y)
        total = grads.sum(axis=0)
        for j in range(X.shape[1]):
            for kind in (None, NormKind.Z, NormKind.MINMAX):
                scan = scan_feature_gradient(X[:, j], Xn, grads, total, feature=j,
                                             renorm_kind=kind, min_samples_leaf=1,
                                             max_candidates=32)
                assert (scan.gains >= 0).all()
            imp = scan_feature_impurity(X[:, j], y, Task.CLASSIFICATION, feature=j,
                                        min_samples_leaf=1, max_candidates=32)
            assert (imp.gains >= 0).all()


# --- exact retraining oracle -------------------------------------------------

def test_exact_gain_zero_residual_node(rng):
    X = rng.normal(size=(60, 2))
    y = X @ np.array([2.0, -1.0]) + 0.25
    split = SplitDecision(0, float(np.median(X[:, 0])), 0.0, 30, 30)
    # tolerance=0 lets descent run to the floor, so the parent fit is exact
    # (up to machine precision) and the children have nothing left to gain
    gain = exact_gain_oracle(X, y, Link.IDENTITY, split,
                             norm_kind=NormKind.Z,
                             gd=GdConfig(max_epochs=3000, tolerance=0.0))
    assert abs(gain) <= 1e-9


def test_exact_gain_zero_when_children_cannot_train(rng):
    X = rng.normal(size=(40, 2))
    y = rng.normal(size=40)
    split = SplitDecision(1, float(np.median(X[:, 1])), 0.0, 20, 20)
    gain = exact_gain_oracle(X, y, Link.IDENTITY, split,
                             norm_kind=NormKind.IDENTITY, gd=GdConfig(max_epochs=0))
    assert gain == 0.0


def test_exact_gain_positive_for_structured_data(rng):
    x = np.linspace(-1, 1, 100)
    y = np.abs(x)  # one kink; children fit exactly, parent cannot
    X = x[:, None]
    split = SplitDecision(0, 0.0, 0.0, 50, 50)
    gain = exact_gain_oracle(X, y, Link.IDENTITY, split,
                             norm_kind=NormKind.Z, gd=GdConfig())
    assert gain > 1.0
