"""Metrics, k-fold cross validation, the criterion-by-depth benchmark grid,
and a synthetic two-feature generator whose classes sit above and below a
V-shaped boundary (a single weak model cannot separate them, a vertical split
plus two weak models can)."""

import io
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, RowIndexSet, Task
from .tree import Criterion, TrainConfig, build_tree


class EvalError(ValueError):
    """Metric or fold construction is undefined for the given input."""


METHOD_LABELS = {
    Criterion.IMPURITY: "mt-dt",
    Criterion.GRADIENT: "mt-g",
    Criterion.GRADIENT_RENORM: "mt-gr",
}


def auc(scores, labels):
    """Area under the ROC curve: the fraction of (positive, negative) pairs
    ranked correctly, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pos = labels == 1.0
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise EvalError("AUC is undefined when only one class is present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def r_squared(y, yhat):
    """Coefficient of determination: 1 - residual / total sum of squares."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.size < 2:
        raise EvalError("r^2 needs at least two samples")
    total = float(np.sum((y - y.mean()) ** 2))
    if total == 0.0:
        raise EvalError("r^2 is undefined when the labels have zero variance")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / total


def kfold_indices(n, k, seed, labels=None, stratified=False):
    """Seeded shuffle into k near-equal test folds (first n % k folds are one
    larger). With stratification, each class is shuffled and dealt separately.
    Folds partition 0..n-1; each is returned sorted."""
    if k < 2:
        raise EvalError("need at least 2 folds")
    if k > n:
        raise EvalError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    if stratified and labels is not None:
        labels = np.asarray(labels)
        folds = [[] for _ in range(k)]
        for value in np.unique(labels):
            members = rng.permutation(np.flatnonzero(labels == value))
            for i in range(k):
                folds[i].extend(members[i::k])
        return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]
    perm = rng.permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds = []
    start = 0
    for size in sizes:
        folds.append(np.sort(perm[start : start + size]).astype(np.int64))
        start += size
    return folds


@dataclass(frozen=True)
class KFoldResult:
    metric: str
    fold_values: tuple
    fold_seconds: tuple

    @property
    def mean(self):
        return float(np.mean(self.fold_values))


def kfold_evaluate(dataset, cfg, k, seed, stratified=False, threads=1):
    """Train on k-1 folds, score the held-out fold, repeat for every fold.

    Classification is scored with AUC on the predicted probabilities,
    regression with r^2. Deterministic for fixed (dataset, cfg, k, seed).
    """
    labels = dataset.labels if dataset.task is Task.CLASSIFICATION else None
    folds = kfold_indices(dataset.n_rows, k, seed, labels=labels, stratified=stratified)
    values = []
    seconds = []
    all_rows = np.arange(dataset.n_rows, dtype=np.int64)
    for i, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(all_rows, test_rows, assume_unique=True)
        y_test = dataset.labels[test_rows]
        if dataset.task is Task.CLASSIFICATION and len(np.unique(y_test)) < 2:
            raise EvalError(
                f"fold {i + 1} holds a single class; "
                "try a different seed or stratified folds"
            )
        started = time.perf_counter()
        tree = build_tree(dataset, RowIndexSet(train_rows), cfg, threads=threads)
        seconds.append(time.perf_counter() - started)
        scores = tree.predict(dataset.features[test_rows])
        if dataset.task is Task.CLASSIFICATION:
            values.append(auc(scores, y_test))
        else:
            values.append(r_squared(y_test, scores))
    metric = "auc" if dataset.task is Task.CLASSIFICATION else "r2"
    return KFoldResult(metric, tuple(values), tuple(seconds))


@dataclass(frozen=True)
class BenchmarkCell:
    method: str
    depth: int
    result: KFoldResult


@dataclass(frozen=True)
class EvalReport:
    dataset_name: str
    task: Task
    metric: str
    k: int
    seed: int
    cells: tuple

    def to_csv(self):
        buf = io.StringIO()
        buf.write("dataset,method,depth,fold,metric,value,train_seconds\n")
        for cell in self.cells:
            for fold, (value, secs) in enumerate(
                zip(cell.result.fold_values, cell.result.fold_seconds), start=1
            ):
                buf.write(
                    f"{self.dataset_name},{cell.method},{cell.depth},"
                    f"{fold},{self.metric},{value!r},{secs!r}\n"
                )
        return buf.getvalue()

    def to_text(self):
        """Aligned method-by-depth grid of fold means, in percent."""
        depths = sorted({c.depth for c in self.cells if c.depth > 0})
        methods = []
        for cell in self.cells:
            if cell.depth > 0 and cell.method not in methods:
                methods.append(cell.method)
        by_key = {(c.method, c.depth): c.result.mean for c in self.cells}

        lines = [
            f"dataset: {self.dataset_name}  task: {self.task.value}  "
            f"metric: {self.metric} (%)  folds: {self.k}  seed: {self.seed}"
        ]
        baseline = next((c for c in self.cells if c.depth == 0), None)
        if baseline is not None:
            lines.append(
                f"baseline {baseline.method} (depth 0): {100 * baseline.result.mean:.1f}"
            )
        header = ["method".ljust(10)] + [f"d={d}".rjust(8) for d in depths]
        lines.append("".join(header))
        for method in methods:
            row = [method.ljust(10)]
            for d in depths:
                mean = by_key.get((method, d))
                row.append(("-" if mean is None else f"{100 * mean:.1f}").rjust(8))
            lines.append("".join(row))
        return "\n".join(lines) + "\n"


def benchmark(dataset, methods, depths, k, seed, base_cfg=None, stratified=False, threads=1):
    """Cross-validated grid over criteria and depths, plus a plain weak-model
    baseline row at depth 0. Cell order follows the input order."""
    base_cfg = base_cfg or TrainConfig()
    cells = []
    baseline_label = "logistic" if dataset.task is Task.CLASSIFICATION else "linear"
    cfg0 = replace(base_cfg, max_depth=0)
    cells.append(
        BenchmarkCell(
            baseline_label, 0, kfold_evaluate(dataset, cfg0, k, seed, stratified, threads)
        )
    )
    for method in methods:
        method = Criterion(method)
        for depth in depths:
            cfg = replace(base_cfg, max_depth=int(depth), criterion=method)
            cells.append(
                BenchmarkCell(
                    METHOD_LABELS[method],
                    int(depth),
                    kfold_evaluate(dataset, cfg, k, seed, stratified, threads),
                )
            )
    metric = "auc" if dataset.task is Task.CLASSIFICATION else "r2"
    return EvalReport(dataset.name, dataset.task, metric, int(k), int(seed), tuple(cells))


def generate_v_dataset(n, gap=0.05, seed=0):
    """Two-feature classification set: label 1 above the fold x2 = |x1|, label
    0 below it, with a margin band of width `gap` kept empty by rejection
    sampling. x1 is uniform on (-1, 1), x2 uniform on (0, 1); class prevalence
    is near one half. Deterministic per seed."""
    if n < 100:
        raise ValueError("need n >= 100")
    if not 0 <= gap < 0.2:
        raise ValueError("gap must be in [0, 0.2)")
    rng = np.random.default_rng(seed)
    xs = np.empty((0, 2))
    ys = np.empty(0)
    while xs.shape[0] < n:
        need = n - xs.shape[0]
        x1 = rng.uniform(-1.0, 1.0, need)
        x2 = rng.uniform(0.0, 1.0, need)
        margin = x2 - np.abs(x1)
        keep = np.abs(margin) > gap / 2.0
        xs = np.vstack([xs, np.column_stack([x1[keep], x2[keep]])])
        ys = np.concatenate([ys, (margin[keep] > 0).astype(np.float64)])
    return Dataset(xs[:n], ys[:n], ("x1", "x2"), Task.CLASSIFICATION, name="v-synthetic")
