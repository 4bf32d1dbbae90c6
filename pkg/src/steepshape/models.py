"""Small dense networks trained with per-example weighted losses.

The trainer consumes a WeightedDataset: the loss is sum_i w_i * L_i over
the dataset, and a mini-batch rescales its weights so the batch sum equals
batch_size / N, which keeps the effective learning rate independent of the
weight profile.  Uniform weights therefore reproduce plain training, and
integer-ratio weights match training on a correspondingly duplicated
dataset.  Everything is float64 numpy; losses are computed from logits for
stability.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .dataset import WeightedDataset

LOSSES = ("weighted_mse", "weighted_bce", "weighted_cce")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softmax")


class DivergenceError(RuntimeError):
    """Training loss left the reals; carries the offending epoch."""

    def __init__(self, epoch: int, message: str):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class MlpSpec:
    """layer_widths = (n_inputs, hidden..., n_outputs); relu hidden layers."""

    layer_widths: tuple
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("layer_widths needs >= 2 positive entries")
        if self.hidden_activation != "relu":
            raise ValueError("only relu hidden layers are supported")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "weighted_mse"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    # tensorflow-style Adam defaults
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-7
    # order-independent correctly rounded gradient reduction; slow, intended
    # for equivalence tests where summation grouping must not matter
    exact_reduction: bool = False

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list = field(default_factory=list)  # W_l with shape (fan_in, fan_out)
    biases: list = field(default_factory=list)

    def logits(self, points: np.ndarray) -> np.ndarray:
        """Pre-activation of the output layer."""
        z = np.atleast_2d(np.asarray(points, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = np.maximum(z @ w + b, 0.0)
        return z @ self.weights[-1] + self.biases[-1]

    def predict(self, points: np.ndarray) -> np.ndarray:
        return _output_activation(self.logits(points), self.spec.output_activation)

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.spec.layer_widths),
            "hidden_activation": self.spec.hidden_activation,
            "output_activation": self.spec.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        spec = MlpSpec(
            tuple(d["layer_widths"]), d["hidden_activation"], d["output_activation"]
        )
        return cls(
            spec,
            [np.asarray(w, dtype=float) for w in d["weights"]],
            [np.asarray(b, dtype=float) for b in d["biases"]],
        )


def save_json(model: MlpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_json(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        return MlpModel.from_dict(json.load(fh))


def _output_activation(logits: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return logits
    if kind == "sigmoid":
        return expit(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_params(spec: MlpSpec, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(spec, weights, biases)


def _check_loss_pairing(loss: str, output_activation: str) -> None:
    if loss == "weighted_bce" and output_activation != "sigmoid":
        raise ValueError("weighted_bce requires a sigmoid output")
    if loss == "weighted_cce" and output_activation != "softmax":
        raise ValueError("weighted_cce requires a softmax output")
    if loss == "weighted_mse" and output_activation == "softmax":
        raise ValueError("weighted_mse with softmax output is not supported")


def _per_example_loss(logits: np.ndarray, labels: np.ndarray, loss: str, kind: str):
    """L_i per row and dL_i/dlogits, both before example weighting."""
    n_out = logits.shape[1]
    if loss == "weighted_mse":
        pred = _output_activation(logits, kind)
        err = pred - labels
        per = np.sum(err * err, axis=1) / n_out
        dpred = 2.0 * err / n_out
        if kind == "sigmoid":
            return per, dpred * pred * (1.0 - pred)
        return per, dpred
    if loss == "weighted_bce":
        # softplus form, stable for large |logits|
        per = np.sum(
            np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits))),
            axis=1,
        ) / n_out
        return per, (expit(logits) - labels) / n_out
    per = logsumexp(logits, axis=1) - np.sum(logits * labels, axis=1)
    return per, _output_activation(logits, "softmax") - labels


def loss_and_gradients(
    model: MlpModel,
    points: np.ndarray,
    labels: np.ndarray,
    example_weights: np.ndarray,
    loss: str,
    exact_reduction: bool = False,
):
    """Weighted loss sum_i w_i L_i and its parameter gradients.

    Returns (loss_value, weight_grads, bias_grads) with grads matching the
    shapes of model.weights / model.biases.  With exact_reduction the batch
    sums are computed per example and combined with math.fsum, so the result
    is independent of row order and of how examples are grouped; this is
    what makes integer-ratio weights bitwise-equivalent to duplicated rows
    (for power-of-two ratios, where the weight scaling itself is exact).
    """
    _check_loss_pairing(loss, model.spec.output_activation)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    w = np.asarray(example_weights, dtype=float).ravel()
    if exact_reduction:
        return _loss_and_gradients_exact(model, x, y, w, loss)

    acts = [x]
    z = x
    for wl, bl in zip(model.weights[:-1], model.biases[:-1]):
        z = np.maximum(z @ wl + bl, 0.0)
        acts.append(z)
    logits = z @ model.weights[-1] + model.biases[-1]

    per, dlogits = _per_example_loss(logits, y, loss, model.spec.output_activation)
    value = float(w @ per)

    delta = w[:, None] * dlogits
    weight_grads = [None] * len(model.weights)
    bias_grads = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        weight_grads[layer] = acts[layer].T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer].T
            delta[acts[layer] <= 0.0] = 0.0  # relu gate
    return value, weight_grads, bias_grads


def _fsum_over_rows(stack: np.ndarray) -> np.ndarray:
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(stack.shape[1:])


def _loss_and_gradients_exact(model: MlpModel, x, y, w, loss: str):
    # One row at a time so every per-example value is computed with
    # row-count-independent operation shapes, then correctly rounded sums.
    n = x.shape[0]
    n_layers = len(model.weights)
    contrib_w = [np.empty((n, *wl.shape)) for wl in model.weights]
    contrib_b = [np.empty((n, bl.size)) for bl in model.biases]
    per_w = np.empty(n)
    for i in range(n):
        acts = [x[i : i + 1]]
        z = acts[0]
        for wl, bl in zip(model.weights[:-1], model.biases[:-1]):
            z = np.maximum(z @ wl + bl, 0.0)
            acts.append(z)
        logits = z @ model.weights[-1] + model.biases[-1]
        per, dlogits = _per_example_loss(
            logits, y[i : i + 1], loss, model.spec.output_activation
        )
        per_w[i] = w[i] * per[0]
        delta = w[i] * dlogits
        for layer in range(n_layers - 1, -1, -1):
            contrib_w[layer][i] = acts[layer].T @ delta
            contrib_b[layer][i] = delta[0]
            if layer > 0:
                delta = delta @ model.weights[layer].T
                delta[acts[layer] <= 0.0] = 0.0
    value = math.fsum(per_w)
    weight_grads = [_fsum_over_rows(c) for c in contrib_w]
    bias_grads = [_fsum_over_rows(c) for c in contrib_b]
    return value, weight_grads, bias_grads


class _Optimizer:
    def __init__(self, cfg: TrainConfig, model: MlpModel):
        self.cfg = cfg
        if cfg.optimizer == "adam":
            self.t = 0
            self.m = [np.zeros_like(w) for w in model.weights] + [
                np.zeros_like(b) for b in model.biases
            ]
            self.v = [np.zeros_like(p) for p in self.m]

    def step(self, model: MlpModel, weight_grads, bias_grads) -> None:
        params = model.weights + model.biases
        grads = weight_grads + bias_grads
        if self.cfg.optimizer == "sgd":
            for p, g in zip(params, grads):
                p -= self.cfg.learning_rate * g
            return
        self.t += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        correction = np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            p -= (
                self.cfg.learning_rate
                * correction
                * self.m[i]
                / (np.sqrt(self.v[i]) + self.cfg.adam_eps)
            )


def _train_arrays(
    points: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    spec: MlpSpec,
    cfg: TrainConfig,
    initial: MlpModel | None = None,
) -> MlpModel:
    n = points.shape[0]
    rng = np.random.default_rng(cfg.seed)
    model = initial.copy() if initial is not None else init_params(spec, cfg.seed)
    opt = _Optimizer(cfg, model)
    full_batch = cfg.batch_size >= n
    for epoch in range(cfg.epochs):
        if full_batch:
            batches = [np.arange(n)]
        else:
            perm = rng.permutation(n)
            batches = [perm[s : s + cfg.batch_size] for s in range(0, n, cfg.batch_size)]
        epoch_loss = 0.0
        for idx in batches:
            wb = weights[idx]
            if not full_batch:
                wb = wb * ((idx.size / n) / wb.sum())
            value, wg, bg = loss_and_gradients(
                model, points[idx], labels[idx], wb, cfg.loss, cfg.exact_reduction
            )
            epoch_loss += value
            opt.step(model, wg, bg)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch, f"non-finite loss at epoch {epoch}")
    return model


def train(
    ds: WeightedDataset, spec: MlpSpec, cfg: TrainConfig, initial: MlpModel | None = None
) -> MlpModel:
    """Weighted training; deterministic for a fixed seed.

    The parameter init is a function of (spec, cfg.seed) only, so paired
    runs that share a seed start from identical parameters.  Full-batch
    runs keep dataset row order; mini-batches reshuffle each epoch without
    replacement.
    """
    if ds.n_inputs != spec.n_inputs or ds.n_outputs != spec.n_outputs:
        raise ValueError("dataset shape does not match the model spec")
    _check_loss_pairing(cfg.loss, spec.output_activation)
    return _train_arrays(ds.points, ds.labels, ds.weights, spec, cfg, initial)


def fit_linear_head(
    features: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    loss: str = "weighted_mse",
    output_activation: str = "identity",
    cfg: TrainConfig | None = None,
):
    """Weighted affine map from features to labels; returns (W, b).

    The MSE head is the closed-form weighted least-squares solution
    (rank-deficient designs fall back to a small ridge, with a warning).
    Other losses train a single affine layer by gradient descent.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if loss == "weighted_mse" and output_activation == "identity":
        a = np.hstack([x, np.ones((x.shape[0], 1))])
        sq = np.sqrt(w)[:, None]
        beta, _, rank, _ = np.linalg.lstsq(sq * a, sq * y, rcond=None)
        if rank < a.shape[1]:
            warnings.warn(
                "rank-deficient head design; solving with ridge 1e-8",
                RuntimeWarning,
                stacklevel=2,
            )
            g = (sq * a).T @ (sq * a) + 1e-8 * np.eye(a.shape[1])
            beta = np.linalg.solve(g, (sq * a).T @ (sq * y))
        return beta[:-1], beta[-1]
    if cfg is None:
        cfg = TrainConfig(loss=loss, optimizer="adam", learning_rate=1e-2,
                          batch_size=x.shape[0], epochs=500, seed=0)
    spec = MlpSpec((x.shape[1], y.shape[1]), output_activation=output_activation)
    head = _train_arrays(x, y, w, spec, cfg)
    return head.weights[0], head.biases[0]


def feature_extract(model: MlpModel, points: np.ndarray) -> np.ndarray:
    """Activations entering the final affine layer."""
    if model.spec.n_layers < 2:
        raise ValueError("a single affine layer has no feature space")
    z = np.atleast_2d(np.asarray(points, dtype=float))
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = np.maximum(z @ w + b, 0.0)
    return z


@dataclass(frozen=True)
class Metrics:
    l2: float  # mean over rows of the squared error norm
    linf: float  # max over rows of the error norm
    linf_sq: float  # max over rows of the squared error norm
    accuracy: float | None = None  # classification outputs only


def evaluate(model: MlpModel, points: np.ndarray, labels: np.ndarray) -> Metrics:
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    pred = model.predict(points)
    sq = np.sum((pred - y) ** 2, axis=1)
    accuracy = None
    kind = model.spec.output_activation
    if kind == "sigmoid" and y.shape[1] == 1:
        accuracy = float(np.mean((pred[:, 0] > 0.5) == (y[:, 0] > 0.5)))
    elif kind in ("sigmoid", "softmax"):
        accuracy = float(np.mean(pred.argmax(axis=1) == y.argmax(axis=1)))
    return Metrics(
        l2=float(sq.mean()),
        linf=float(np.sqrt(sq.max())),
        linf_sq=float(sq.max()),
        accuracy=accuracy,
    )


def lipschitz_upper_bound(model: MlpModel, iters: int = 100, tol: float = 1e-9) -> float:
    """Product of layer spectral norms (power iteration); relu is 1-Lipschitz."""
    bound = 1.0
    for w in model.weights:
        bound *= _spectral_norm(w, iters, tol)
    return float(bound)


def _spectral_norm(w: np.ndarray, iters: int, tol: float) -> float:
    rng = np.random.default_rng(0)
    v = rng.standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = w @ v
        sigma_new = float(np.linalg.norm(u))
        if sigma_new == 0.0:
            return 0.0
        v = w.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return sigma_new
        v /= nv
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new
        sigma = sigma_new
    return sigma
