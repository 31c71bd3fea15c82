"""Small differentiable classifiers with hand-written forward/backward passes.

Two architectures cover the simulator's needs: plain multinomial logistic
regression (``hidden_dim == 0``) and a one-hidden-layer MLP with relu or
tanh activation.  Backpropagation is written out by hand so the gradients
the aggregation layer operates on can be audited coordinate-by-coordinate
against finite differences; no autodiff framework is involved.

Parameter flattening order is canonical and shared by every consumer of a
flat vector: layer by layer, weights before biases, weight matrices
row-major with shape (fan_in, fan_out).  Concretely:

* logistic regression: ``[W (input_dim x num_classes), b]``
* MLP: ``[W1 (input_dim x hidden), b1, W2 (hidden x num_classes), b2]``
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domains import DomainDataset
from .errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyDataset,
    InvalidSpec,
)
from .numcore import RealMat, RealVec, Rng, ensure_finite

__all__ = [
    "ModelSpec",
    "ParamVector",
    "LossKind",
    "Metrics",
    "init_params",
    "forward",
    "loss_and_grad",
    "sgd_step",
    "evaluate",
]

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; parameter count is a pure function of it."""

    input_dim: int
    hidden_dim: int = 0  # 0 selects logistic regression
    num_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < 1:
            raise InvalidSpec("input_dim must be positive")
        if self.hidden_dim < 0:
            raise InvalidSpec("hidden_dim must be nonnegative")
        if self.num_classes < 2:
            raise InvalidSpec("num_classes must be >= 2")
        if self.activation not in ACTIVATIONS:
            raise InvalidSpec(f"activation must be one of {ACTIVATIONS}")

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        """(fan_in, fan_out) per layer, input to output."""
        if self.hidden_dim == 0:
            return ((self.input_dim, self.num_classes),)
        return (
            (self.input_dim, self.hidden_dim),
            (self.hidden_dim, self.num_classes),
        )

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes)


@dataclass(frozen=True)
class ParamVector:
    """A model's parameters as one flat float64 vector in canonical order."""

    spec: ModelSpec
    values: RealVec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.spec.param_count:
            raise DimensionMismatch(
                f"parameter vector has length {v.shape}, spec wants {self.spec.param_count}"
            )
        object.__setattr__(self, "values", v)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Unflatten into [(W, b), ...] views in canonical order."""
        out = []
        off = 0
        for fi, fo in self.spec.layer_shapes:
            w = self.values[off : off + fi * fo].reshape(fi, fo)
            off += fi * fo
            b = self.values[off : off + fo]
            off += fo
            out.append((w, b))
        return out


def flatten_layers(spec: ModelSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Inverse of :meth:`ParamVector.layers`."""
    parts = []
    for (fi, fo), (w, b) in zip(spec.layer_shapes, layers):
        if w.shape != (fi, fo) or b.shape != (fo,):
            raise DimensionMismatch(f"layer shapes {w.shape}/{b.shape} do not match spec ({fi},{fo})")
        parts.append(np.asarray(w, dtype=np.float64).reshape(-1))
        parts.append(np.asarray(b, dtype=np.float64))
    return np.concatenate(parts)


@dataclass(frozen=True)
class LossKind:
    """Cross-entropy, optionally with per-class positive weights.

    ``weighted_cross_entropy`` scales each sample's loss by the weight of
    its true class before taking the batch mean; all-ones weights reproduce
    plain cross-entropy exactly.
    """

    kind: str = "cross_entropy"
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("cross_entropy", "weighted_cross_entropy"):
            raise InvalidSpec(f"unknown loss kind {self.kind!r}")
        if self.kind == "weighted_cross_entropy":
            if not self.class_weights:
                raise InvalidSpec("weighted_cross_entropy requires class_weights")
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
            if any(w <= 0 for w in self.class_weights):
                raise InvalidSpec("class weights must all be positive")
        elif self.class_weights is not None:
            raise InvalidSpec("cross_entropy takes no class_weights")

    def sample_weights(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        if self.kind == "cross_entropy":
            return np.ones(labels.shape[0])
        if len(self.class_weights) != num_classes:
            raise DimensionMismatch(
                f"{len(self.class_weights)} class weights for {num_classes} classes"
            )
        return np.asarray(self.class_weights)[labels]


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    loss: float


def init_params(spec: ModelSpec, rng: Rng) -> ParamVector:
    """Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
    parts = []
    for fi, fo in spec.layer_shapes:
        s = np.sqrt(6.0 / (fi + fo))
        parts.append(np.asarray(rng.uniform(-s, s, size=(fi, fo))).reshape(-1))
        parts.append(np.zeros(fo))
    return ParamVector(spec=spec, values=np.concatenate(parts))


def _check_batch(spec: ModelSpec, x: RealMat) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"batch shape {x.shape} does not match input_dim={spec.input_dim}")
    return x


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def forward(params: ParamVector, x: RealMat) -> RealMat:
    """Per-sample class logits, shape (rows, num_classes)."""
    x = _check_batch(params.spec, x)
    layers = params.layers()
    if params.spec.hidden_dim == 0:
        (w, b), = layers
        return x @ w + b
    (w1, b1), (w2, b2) = layers
    h = _activate(params.spec.activation, x @ w1 + b1)
    return h @ w2 + b2


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(
    params: ParamVector,
    x: RealMat,
    labels: np.ndarray,
    loss: LossKind = LossKind(),
) -> tuple[float, RealVec]:
    """Mean (weighted) cross-entropy over the batch and its gradient.

    The gradient comes back flattened in canonical parameter order, ready
    for exchange with the aggregation layer.
    """
    spec = params.spec
    x = _check_batch(spec, x)
    n = x.shape[0]
    if n == 0:
        raise EmptyBatch("loss_and_grad needs at least one sample")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionMismatch(f"labels shape {labels.shape} does not match batch rows {n}")
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise InvalidSpec(f"labels outside [0, {spec.num_classes})")

    weights = loss.sample_weights(labels, spec.num_classes)

    if spec.hidden_dim == 0:
        (w, b), = params.layers()
        pre1 = h = None
        logits = x @ w + b
    else:
        (w1, b1), (w2, b2) = params.layers()
        pre1 = x @ w1 + b1
        h = _activate(spec.activation, pre1)
        logits = h @ w2 + b2

    logp = _log_softmax(logits)
    total = float(np.sum(weights * -logp[np.arange(n), labels]) / n)

    # d(loss)/d(logits): softmax minus one-hot, row-scaled by weight / n.
    dz = np.exp(logp)
    dz[np.arange(n), labels] -= 1.0
    dz *= (weights / n)[:, None]

    if spec.hidden_dim == 0:
        grad = np.concatenate([(x.T @ dz).reshape(-1), dz.sum(axis=0)])
    else:
        dw2 = h.T @ dz
        db2 = dz.sum(axis=0)
        dh = dz @ w2.T
        da = dh * _activate_grad(spec.activation, pre1, h)
        dw1 = x.T @ da
        db1 = da.sum(axis=0)
        grad = np.concatenate([dw1.reshape(-1), db1, dw2.reshape(-1), db2])

    ensure_finite(grad, "gradient")
    return total, grad


def sgd_step(params: ParamVector, grad: RealVec, lr: float) -> ParamVector:
    """One gradient-descent step ``w <- w - lr * grad``."""
    if lr <= 0:
        raise InvalidSpec("learning rate must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise DimensionMismatch(f"gradient length {grad.shape} vs params {params.values.shape}")
    new_values = ensure_finite(params.values - lr * grad, "updated parameters")
    return replace(params, values=new_values)


def evaluate(params: ParamVector, dataset: DomainDataset, loss: LossKind = LossKind()) -> Metrics:
    """Accuracy (argmax, ties broken toward the lowest class index) and mean loss."""
    if dataset.num_rows == 0:
        raise EmptyDataset(f"domain {dataset.domain_id!r} has no rows")
    logits = forward(params, dataset.features)
    preds = np.argmax(logits, axis=1)  # np.argmax returns the first maximum
    accuracy = float(np.mean(preds == dataset.labels))
    weights = loss.sample_weights(dataset.labels, params.spec.num_classes)
    logp = _log_softmax(logits)
    n = dataset.num_rows
    mean_loss = float(np.sum(weights * -logp[np.arange(n), dataset.labels]) / n)
    return Metrics(accuracy=accuracy, loss=mean_loss)
