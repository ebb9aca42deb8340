"""Model tree construction, prediction, denormalization, and explanation.

Every node (internal or leaf) trains a weak model on its own rows, in its own
normalized feature space, warm-started from the parent's model folded back
through both normalizations. Internal-node models are kept for warm starting
and serialized for inspection; prediction uses leaf models only.
"""

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .data import RowIndexSet, Task
from .split import SplitDecision, best_split_gradient, best_split_impurity
from .weak import (
    GdConfig,
    Link,
    NormalizationParams,
    NormKind,
    WeakModelParams,
    apply_normalization,
    fit_node_model,
    params_to_raw,
    predict as predict_weak,
)

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is not a supported format version."""


class Criterion(str, Enum):
    IMPURITY = "impurity"
    GRADIENT = "gradient"
    GRADIENT_RENORM = "gradient_renorm"


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int = 1
    criterion: Criterion = Criterion.GRADIENT_RENORM
    normalization: NormKind = NormKind.Z
    gd: GdConfig = field(default_factory=GdConfig)
    min_samples_leaf: int = None  # None resolves to max(5, n_features + 1)
    max_candidates: int = 255
    unweighted_gain: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "normalization", NormKind(self.normalization))
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be positive")
        if self.min_samples_leaf is not None and self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")

    def resolve_min_samples_leaf(self, n_features):
        if self.min_samples_leaf is not None:
            return int(self.min_samples_leaf)
        return max(5, n_features + 1)


@dataclass(frozen=True)
class TreeNode:
    """One tree node: trained weak model, its normalization, and per-feature
    statistics of the node's training rows (used for scale-free explanation)."""

    model: WeakModelParams
    norm: NormalizationParams
    n_rows: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    split: SplitDecision = None
    left: "TreeNode" = None
    right: "TreeNode" = None

    @property
    def is_leaf(self):
        return self.split is None

    def depth(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass(frozen=True)
class ModelTree:
    root: TreeNode
    task: Task
    feature_names: tuple
    config: TrainConfig

    @property
    def n_features(self):
        return len(self.feature_names)

    def predict(self, X):
        """Route each sample to a leaf (left iff x_j <= threshold), normalize
        it with the leaf's map, and apply the leaf model. Classification
        returns probabilities in [0, 1]."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X2.shape[1]}"
            )
        if not np.isfinite(X2).all():
            raise ValueError("prediction input must be finite")
        out = np.empty(X2.shape[0], dtype=np.float64)

        def route(node, idx):
            if idx.size == 0:
                return
            if node.is_leaf:
                Xn = apply_normalization(node.norm, X2[idx])
                out[idx] = predict_weak(node.model, Xn)
                return
            go_left = X2[idx, node.split.feature] <= node.split.threshold
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(X2.shape[0]))
        return float(out[0]) if single else out


def _node_stats(X):
    return X.mean(axis=0), X.std(axis=0)


def build_tree(dataset, view=None, cfg=None, threads=1):
    """Grow a model tree on the given rows (all rows when view is None).

    A node splits whenever depth budget remains and some candidate leaves at
    least min_samples_leaf rows on each side, even at gain 0; otherwise it
    becomes a leaf. Deterministic for a fixed dataset and config.
    """
    cfg = cfg or TrainConfig()
    if view is None:
        view = RowIndexSet.full(dataset.n_rows)
    rows = view.indices
    if rows[-1] >= dataset.n_rows:
        raise ValueError("view indexes beyond the dataset")
    link = Link.LOGISTIC if dataset.task is Task.CLASSIFICATION else Link.IDENTITY
    min_leaf = cfg.resolve_min_samples_leaf(dataset.n_features)

    def build(node_rows, depth_left, warm_raw):
        X = dataset.features[node_rows]
        y = dataset.labels[node_rows]
        norm, model, _ = fit_node_model(
            X, y, link, cfg.normalization, cfg.gd, warm_start_raw=warm_raw
        )
        mean, std = _node_stats(X)

        split = left = right = None
        if depth_left > 0 and node_rows.size >= 2 * min_leaf:
            if cfg.criterion is Criterion.IMPURITY:
                split = best_split_impurity(
                    X,
                    y,
                    dataset.task,
                    min_samples_leaf=min_leaf,
                    max_candidates=cfg.max_candidates,
                    threads=threads,
                )
            else:
                split = best_split_gradient(
                    X,
                    y,
                    model,
                    norm,
                    renormalize=cfg.criterion is Criterion.GRADIENT_RENORM,
                    min_samples_leaf=min_leaf,
                    max_candidates=cfg.max_candidates,
                    unweighted_gain=cfg.unweighted_gain,
                    threads=threads,
                )
            if split is not None:
                raw_model = params_to_raw(model, norm)
                mask = X[:, split.feature] <= split.threshold
                left = build(node_rows[mask], depth_left - 1, raw_model)
                right = build(node_rows[~mask], depth_left - 1, raw_model)

        return TreeNode(model, norm, int(node_rows.size), mean, std, split, left, right)

    resolved = replace(cfg, min_samples_leaf=min_leaf)
    root = build(rows, cfg.max_depth, None)
    return ModelTree(root, dataset.task, tuple(dataset.feature_names), resolved)


def denormalize_tree(tree):
    """Equivalent tree operating on raw features only: every node model is
    folded through its normalization, every normalization becomes identity.
    Thresholds are already in raw space and stay unchanged."""
    m = tree.n_features

    def denorm(node):
        raw = params_to_raw(node.model, node.norm)
        return TreeNode(
            raw,
            NormalizationParams.identity(m),
            node.n_rows,
            node.feature_mean,
            node.feature_std,
            node.split,
            denorm(node.left) if node.left else None,
            denorm(node.right) if node.right else None,
        )

    return ModelTree(denorm(tree.root), tree.task, tree.feature_names, tree.config)


def explain(tree, top_k=5):
    """Nested explanation: one rule string per internal node, and per leaf the
    top_k features ranked by the magnitude of their weight expressed in the
    leaf's z-normalized space (those weights are comparable across features)."""
    if top_k < 1:
        raise ValueError("top_k must be positive")
    names = tree.feature_names

    def describe(node):
        if node.is_leaf:
            raw = params_to_raw(node.model, node.norm)
            wz = raw.weights * node.feature_std
            order = np.argsort(-np.abs(wz), kind="stable")[:top_k]
            return {
                "kind": "leaf",
                "n_rows": node.n_rows,
                "weights": [
                    {"feature": names[j], "weight": float(wz[j])} for j in order
                ],
            }
        s = node.split
        return {
            "kind": "split",
            "rule": f"{names[s.feature]} <= {s.threshold:g}",
            "feature": names[s.feature],
            "threshold": s.threshold,
            "gain": s.gain,
            "n_rows": node.n_rows,
            "left": describe(node.left),
            "right": describe(node.right),
        }

    return {"task": tree.task.value, "top_k": int(top_k), "root": describe(tree.root)}


def render_explanation(explanation):
    """Plain-text rendering of an explain() structure."""
    lines = []

    def emit(node, indent):
        pad = "  " * indent
        if node["kind"] == "leaf":
            ranked = ", ".join(
                f"{w['feature']}={w['weight']:+.4g}" for w in node["weights"]
            )
            lines.append(f"{pad}leaf (n={node['n_rows']}): {ranked}")
            return
        lines.append(f"{pad}if {node['rule']}:  (n={node['n_rows']}, gain={node['gain']:.6g})")
        emit(node["left"], indent + 1)
        lines.append(f"{pad}else:")
        emit(node["right"], indent + 1)

    emit(explanation["root"], 0)
    return "\n".join(lines) + "\n"


def _node_to_dict(node):
    out = {
        "model": {
            "weights": node.model.weights.tolist(),
            "bias": node.model.bias,
            "link": node.model.link.value,
        },
        "norm": {
            "kind": node.norm.kind.value,
            "scale": node.norm.scale.tolist(),
            "offset": node.norm.offset.tolist(),
        },
        "n_rows": node.n_rows,
        "stats": {
            "mean": np.asarray(node.feature_mean, dtype=np.float64).tolist(),
            "std": np.asarray(node.feature_std, dtype=np.float64).tolist(),
        },
    }
    if node.split is not None:
        s = node.split
        out["split"] = {
            "feature": s.feature,
            "threshold": s.threshold,
            "gain": s.gain,
            "left_count": s.left_count,
            "right_count": s.right_count,
        }
        out["left"] = _node_to_dict(node.left)
        out["right"] = _node_to_dict(node.right)
    return out


def _node_from_dict(d):
    model = WeakModelParams(
        np.asarray(d["model"]["weights"], dtype=np.float64),
        d["model"]["bias"],
        Link(d["model"]["link"]),
    )
    norm = NormalizationParams(
        NormKind(d["norm"]["kind"]),
        np.asarray(d["norm"]["scale"], dtype=np.float64),
        np.asarray(d["norm"]["offset"], dtype=np.float64),
    )
    split = left = right = None
    if "split" in d:
        s = d["split"]
        split = SplitDecision(
            int(s["feature"]),
            float(s["threshold"]),
            float(s["gain"]),
            int(s["left_count"]),
            int(s["right_count"]),
        )
        left = _node_from_dict(d["left"])
        right = _node_from_dict(d["right"])
    stats = d.get("stats", {})
    mean = np.asarray(stats.get("mean", []), dtype=np.float64)
    std = np.asarray(stats.get("std", []), dtype=np.float64)
    return TreeNode(model, norm, int(d["n_rows"]), mean, std, split, left, right)


def config_to_dict(cfg):
    return {
        "max_depth": cfg.max_depth,
        "criterion": cfg.criterion.value,
        "normalization": cfg.normalization.value,
        "gd": {
            "learning_rate": cfg.gd.learning_rate,
            "max_epochs": cfg.gd.max_epochs,
            "tolerance": cfg.gd.tolerance,
            "batch": cfg.gd.batch,
        },
        "min_samples_leaf": cfg.min_samples_leaf,
        "max_candidates": cfg.max_candidates,
        "unweighted_gain": cfg.unweighted_gain,
        "seed": cfg.seed,
    }


def config_from_dict(d):
    gd = d.get("gd", {})
    return TrainConfig(
        max_depth=int(d["max_depth"]),
        criterion=Criterion(d["criterion"]),
        normalization=NormKind(d["normalization"]),
        gd=GdConfig(
            learning_rate=float(gd.get("learning_rate", 0.1)),
            max_epochs=int(gd.get("max_epochs", 500)),
            tolerance=float(gd.get("tolerance", 1e-8)),
            batch=gd.get("batch", "full"),
        ),
        min_samples_leaf=d.get("min_samples_leaf"),
        max_candidates=int(d.get("max_candidates", 255)),
        unweighted_gain=bool(d.get("unweighted_gain", False)),
        seed=int(d.get("seed", 0)),
    )


def to_json(tree):
    """Serialize a tree to JSON text. Floats keep full round-trip precision;
    identical trees always produce identical bytes."""
    doc = {
        "format_version": FORMAT_VERSION,
        "task": tree.task.value,
        "feature_names": list(tree.feature_names),
        "config": config_to_dict(tree.config),
        "root": _node_to_dict(tree.root),
    }
    return json.dumps(doc, indent=2) + "\n"


def from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a model file: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} (expected {FORMAT_VERSION})"
        )
    return ModelTree(
        _node_from_dict(doc["root"]),
        Task(doc["task"]),
        tuple(doc["feature_names"]),
        config_from_dict(doc["config"]),
    )


def save_model(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(tree))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())
