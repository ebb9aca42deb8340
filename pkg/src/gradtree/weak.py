"""Linear and logistic weak models.

Losses, per-sample gradients, full-batch gradient descent with warm starting,
and the per-feature affine normalization used by every tree node (fit, apply,
and conversion of model parameters between raw and normalized space).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

# Probability clip for cross-entropy; keeps the loss finite at saturation.
PROB_CLIP = 1e-12
# Lower clamp on normalization denominators; keeps constant features finite.
SCALE_CLIP = 1e-12


class Link(str, Enum):
    IDENTITY = "identity"
    LOGISTIC = "logistic"


class NormKind(str, Enum):
    IDENTITY = "identity"
    Z = "z"
    MINMAX = "minmax"


class TrainingError(RuntimeError):
    """Gradient descent produced a non-finite training loss."""


@dataclass(frozen=True)
class WeakModelParams:
    """Linear model y = f(w.x + b) with f = identity or the logistic function."""

    weights: np.ndarray
    bias: float
    link: Link

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a 1-D vector")
        b = float(self.bias)
        if not (np.isfinite(w).all() and np.isfinite(b)):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "link", Link(self.link))

    @classmethod
    def zeros(cls, n_features, link):
        return cls(np.zeros(n_features), 0.0, link)

    @property
    def n_features(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class NormalizationParams:
    """Per-feature affine map x_norm = scale * x + offset, scale > 0."""

    kind: NormKind
    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        scale = np.ascontiguousarray(self.scale, dtype=np.float64)
        offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        if scale.shape != offset.shape or scale.ndim != 1:
            raise ValueError("scale and offset must be 1-D vectors of equal length")
        if not (np.isfinite(scale).all() and np.isfinite(offset).all()):
            raise ValueError("normalization parameters must be finite")
        if not (scale > 0).all():
            raise ValueError("normalization scales must be positive")
        scale.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "kind", NormKind(self.kind))

    @classmethod
    def identity(cls, n_features):
        return cls(NormKind.IDENTITY, np.ones(n_features), np.zeros(n_features))


@dataclass(frozen=True)
class GdConfig:
    """Full-batch gradient descent settings.

    Training stops after max_epochs, or as soon as the per-epoch improvement
    of the mean loss drops below `tolerance`.
    """

    learning_rate: float = 0.1
    max_epochs: int = 500
    tolerance: float = 1e-8
    batch: str = "full"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be nonnegative")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.batch != "full":
            raise ValueError("only full-batch gradient descent is supported")


def predict(params, X):
    """Model output for a sample matrix (n, m) or a single sample vector."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    z = np.atleast_2d(X) @ params.weights + params.bias
    out = expit(z) if params.link is Link.LOGISTIC else z
    return float(out[0]) if single else out


def loss_value(link, y, yhat):
    """Pointwise loss: squared error (identity) or cross-entropy (logistic).

    Logistic predictions are clipped to [PROB_CLIP, 1 - PROB_CLIP] so the
    loss stays finite. Works elementwise on arrays.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if Link(link) is Link.LOGISTIC:
        p = np.clip(yhat, PROB_CLIP, 1.0 - PROB_CLIP)
        out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    else:
        out = (y - yhat) ** 2
    return float(out) if out.ndim == 0 else out


def mean_loss(params, X, y):
    return float(np.mean(loss_value(params.link, y, predict(params, X))))


def sample_gradients(params, X, y):
    """Per-sample loss gradients, one row per sample.

    Row layout: (d/dw_1 .. d/dw_m, d/db). Squared error gives
    2*(yhat - y)*(x, 1); cross-entropy through the logistic link gives
    (yhat - y)*(x, 1).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    yhat = predict(params, X)
    coef = yhat - y
    if params.link is Link.IDENTITY:
        coef = 2.0 * coef
    n, m = X.shape
    grads = np.empty((n, m + 1), dtype=np.float64)
    grads[:, :m] = coef[:, None] * X
    grads[:, m] = coef
    return grads


def sample_gradient(params, x, y):
    """Gradient of the loss at one sample, ordered (w_1..w_m, b)."""
    return sample_gradients(params, np.asarray(x, dtype=np.float64)[None, :], [y])[0]


def train_weak_model(X, y, init, cfg):
    """Full-batch gradient descent on the mean loss, starting from `init`.

    Deterministic. Returns the best parameters seen, so the resulting
    training loss never exceeds the loss at `init`; if no step improves,
    `init` itself is returned. Raises TrainingError (naming the epoch) if the
    loss becomes non-finite, which signals a divergent learning rate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty view")
    if X.shape[1] != init.n_features:
        raise ValueError(f"init has {init.n_features} weights for {X.shape[1]} features")

    w = init.weights.copy()
    b = init.bias
    link = init.link
    n = X.shape[0]

    def current_loss(wv, bv):
        # Overflow here just means divergence, which the caller reports.
        with np.errstate(over="ignore", invalid="ignore"):
            z = X @ wv + bv
            yhat = expit(z) if link is Link.LOGISTIC else z
            return float(np.mean(loss_value(link, y, yhat)))

    best_w, best_b = w.copy(), b
    best = prev = current_loss(w, b)
    if not np.isfinite(best):
        raise TrainingError("non-finite training loss at initialization")

    lr = cfg.learning_rate
    for epoch in range(1, cfg.max_epochs + 1):
        grad = sample_gradients(WeakModelParams(w, b, link), X, y).sum(axis=0) / n
        w = w - lr * grad[:-1]
        b = b - lr * grad[-1]
        loss = current_loss(w, b)
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite training loss at epoch {epoch}; lower the learning rate"
            )
        if loss < best:
            best = loss
            best_w, best_b = w.copy(), b
        if prev - loss < cfg.tolerance:
            break
        prev = loss
    return WeakModelParams(best_w, best_b, link)


def fit_normalization(X, kind):
    """Fit a per-feature affine normalization on the rows of X.

    z: maps to zero mean, unit (population) standard deviation.
    minmax: maps the observed range onto [0, 1].
    Denominators are clamped below by SCALE_CLIP so constant features stay finite.
    """
    kind = NormKind(kind)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    m = X.shape[1]
    if kind is NormKind.IDENTITY:
        return NormalizationParams.identity(m)
    if kind is NormKind.Z:
        mu = X.mean(axis=0)
        sigma = X.std(axis=0)
        scale = 1.0 / np.maximum(sigma, SCALE_CLIP)
        return NormalizationParams(kind, scale, -mu * scale)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    scale = 1.0 / np.maximum(span, SCALE_CLIP)
    return NormalizationParams(kind, scale, -lo * scale)


def apply_normalization(norm, X):
    X = np.asarray(X, dtype=np.float64)
    if norm.kind is NormKind.IDENTITY:
        return X
    return X * norm.scale + norm.offset


def params_to_raw(params, norm):
    """Fold a normalization into the model: predictions on raw features match
    the normalized model's predictions on normalized features."""
    w = norm.scale * params.weights
    b = params.bias + float(params.weights @ norm.offset)
    return WeakModelParams(w, b, params.link)


def params_to_normalized(params, norm):
    """Inverse of params_to_raw: express a raw-space model in normalized space."""
    w = params.weights / norm.scale
    b = params.bias - float(w @ norm.offset)
    return WeakModelParams(w, b, params.link)


def fit_node_model(X, y, link, norm_kind, gd, warm_start_raw=None):
    """Fit one tree node: normalization on the node's rows, then gradient
    descent in that normalized space.

    `warm_start_raw` is a raw-space model (typically the parent node's model
    folded through its own normalization); it is converted into this node's
    normalized space and used as the descent start. Returns
    (norm, model, normalized_X).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    norm = fit_normalization(X, norm_kind)
    Xn = apply_normalization(norm, X)
    if warm_start_raw is None:
        init = WeakModelParams.zeros(X.shape[1], link)
    else:
        init = params_to_normalized(warm_start_raw, norm)
    model = train_weak_model(Xn, y, init, gd)
    return norm, model, Xn
