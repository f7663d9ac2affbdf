"""Dense softmax classifier with flat parameters and exact analytic gradients.

Model parameters live in a single flat float64 vector (:class:`ParamVector`)
so that everything a federation does with them (averaging, mixing, distance
penalties) is plain array arithmetic. The learner itself is a small MLP with
rectifier hidden layers and a softmax output.

Losses are described as lists of terms (cross-entropy, two consistency
distances, and a parameter-space penalty); :func:`loss_and_gradient` evaluates
the weighted sum and backpropagates an exact gradient for it. All batch
losses are means over rows, so batch size does not rescale gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError

# Floor applied to probabilities before any log or division.
PROB_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Parameter storage
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 parameter vector plus per-piece (rows, cols) shapes."""

    values: np.ndarray
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        shapes = tuple((int(r), int(c)) for r, c in self.shapes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shapes", shapes)
        expected = sum(r * c for r, c in shapes)
        if values.size != expected:
            raise InvalidInputError(
                f"parameter vector has {values.size} entries but the shape "
                f"spec requires {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("parameter vector contains non-finite entries")

    @property
    def size(self) -> int:
        return self.values.size

    def unpack(self) -> list[np.ndarray]:
        """Split the flat vector into one array per (rows, cols) piece."""
        pieces = []
        offset = 0
        for rows, cols in self.shapes:
            pieces.append(self.values[offset : offset + rows * cols].reshape(rows, cols))
            offset += rows * cols
        return pieces

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.shapes)


def pack(pieces: Sequence[np.ndarray]) -> ParamVector:
    """Flatten a list of 2-D arrays into a ParamVector."""
    shapes = tuple((p.shape[0], p.shape[1]) for p in pieces)
    values = np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in pieces])
    return ParamVector(values, shapes)


def linear_combine(terms: Sequence[tuple[float, ParamVector]]) -> ParamVector:
    """Elementwise weighted sum of parameter vectors with identical shapes."""
    if not terms:
        raise InvalidInputError("linear_combine needs at least one term")
    shapes = terms[0][1].shapes
    for _, vec in terms:
        if vec.shapes != shapes:
            raise InvalidInputError("linear_combine requires identical shape specs")
    out = np.zeros_like(terms[0][1].values)
    for coeff, vec in terms:
        out += float(coeff) * vec.values
    return ParamVector(out, shapes)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def shape_spec(layer_dims: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """Weight and bias shapes for a dense net: per layer (in, out) then (1, out)."""
    spec: list[tuple[int, int]] = []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        spec.append((d_in, d_out))
        spec.append((1, d_out))
    return tuple(spec)


@dataclass(frozen=True, eq=False)
class MlpModel:
    """A dense classifier: rectifier hidden layers, softmax output."""

    layer_dims: tuple[int, ...]
    params: ParamVector

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InvalidInputError(f"bad layer dims {dims}")
        if self.params.shapes != shape_spec(dims):
            raise InvalidInputError("parameter shapes do not match layer dims")

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed) -> "MlpModel":
        """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
        rng = np.random.default_rng(seed)
        pieces = []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = 1.0 / np.sqrt(d_in)
            pieces.append(rng.uniform(-lim, lim, size=(d_in, d_out)))
            pieces.append(rng.uniform(-lim, lim, size=(1, d_out)))
        return cls(tuple(int(d) for d in layer_dims), pack(pieces))

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> "MlpModel":
        spec = shape_spec(layer_dims)
        n = sum(r * c for r, c in spec)
        return cls(tuple(int(d) for d in layer_dims), ParamVector(np.zeros(n), spec))

    def with_params(self, params: ParamVector) -> "MlpModel":
        return MlpModel(self.layer_dims, params)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        pieces = self.params.unpack()
        return [(pieces[i], pieces[i + 1]) for i in range(0, len(pieces), 2)]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]


@dataclass(frozen=True, eq=False)
class Batch:
    """A batch of inputs with optional integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise InvalidInputError("batch inputs must be a nonempty 2-D matrix")
        object.__setattr__(self, "inputs", inputs)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if labels.size != inputs.shape[0]:
                raise InvalidInputError("batch labels do not align with inputs")
            if labels.size and labels.min() < 0:
                raise InvalidInputError("batch labels must be nonnegative")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and labels.max() >= num_classes:
        raise InvalidInputError(
            f"label {labels.max()} out of range for {num_classes} classes"
        )
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _as_matrix(inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InvalidInputError("inputs must be a vector or a 2-D matrix")
    return x


def _forward_cache(model: MlpModel, inputs: np.ndarray):
    """Forward pass keeping per-layer pre-activations and activations."""
    x = _as_matrix(inputs)
    if x.shape[1] != model.layer_dims[0]:
        raise InvalidInputError(
            f"inputs have {x.shape[1]} columns, model expects {model.layer_dims[0]}"
        )
    layers = model.layers()
    acts = [x]
    pre = []
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = _softmax(z) if i == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(a)
    return acts[-1], acts, pre


def forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Class probabilities for each input row; rows sum to 1."""
    probs, _, _ = _forward_cache(model, inputs)
    return probs


def _backprop(model: MlpModel, acts, pre, dprobs: np.ndarray) -> np.ndarray:
    """Exact gradient of a scalar loss given dLoss/dprobs; returns flat values."""
    layers = model.layers()
    probs = acts[-1]
    # Through the softmax: dz = p * (g - sum(g*p)).
    g = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
    grads: list[np.ndarray] = [None] * (2 * len(layers))  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0, keepdims=True)
        if i > 0:
            g = (g @ w.T) * (pre[i - 1] > 0.0)
    return np.concatenate([p.ravel() for p in grads])


# ---------------------------------------------------------------------------
# Matrix-level loss primitives
# ---------------------------------------------------------------------------


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _check_rows_are_distributions(p: np.ndarray, what: str) -> None:
    if np.any(p < -1e-9):
        raise InvalidInputError(f"{what}: negative probabilities")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise InvalidInputError(f"{what}: rows do not sum to 1")


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of -sum(target * ln(prob)), prob floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _check_same_shape(probs, targets, "cross_entropy")
    _check_rows_are_distributions(probs, "cross_entropy")
    return float(-(targets * np.log(np.maximum(probs, PROB_FLOOR))).sum(axis=1).mean())


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over rows of sum(p * ln(p/q)) with both clamped at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_same_shape(p, q, "kl_divergence")
    _check_rows_are_distributions(p, "kl_divergence")
    _check_rows_are_distributions(q, "kl_divergence")
    pc = np.maximum(p, PROB_FLOOR)
    qc = np.maximum(q, PROB_FLOOR)
    return float((pc * np.log(pc / qc)).sum(axis=1).mean())


def sq_prob_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over rows of the squared Euclidean distance between rows."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_same_shape(p, q, "sq_prob_distance")
    return float(((p - q) ** 2).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# Composite losses with exact gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CrossEntropyTerm:
    """weight * mean CE between model predictions on `inputs` and `targets`."""

    weight: float
    inputs: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True, eq=False)
class KlConsistencyTerm:
    """weight * mean KL(f(inputs) || f(perturbed))."""

    weight: float
    inputs: np.ndarray
    perturbed: np.ndarray


@dataclass(frozen=True, eq=False)
class SquaredConsistencyTerm:
    """weight * mean squared distance between f(first) and f(second)."""

    weight: float
    first: np.ndarray
    second: np.ndarray


@dataclass(frozen=True, eq=False)
class ParamDistanceTerm:
    """weight * squared parameter distance to `reference` (sum or mean)."""

    weight: float
    reference: ParamVector
    reduction: str = "mean"


LossTerm = Union[CrossEntropyTerm, KlConsistencyTerm, SquaredConsistencyTerm, ParamDistanceTerm]


def loss_and_gradient(model: MlpModel, terms: Sequence[LossTerm]) -> tuple[float, ParamVector]:
    """Value and exact analytic gradient of a weighted sum of loss terms.

    Terms with weight exactly 0 contribute nothing and are skipped, so the
    result is independent of their data arguments.
    """
    total = 0.0
    grad = np.zeros(model.params.size)
    for term in terms:
        w = float(term.weight)
        if w == 0.0:
            continue
        if isinstance(term, CrossEntropyTerm):
            probs, acts, pre = _forward_cache(model, term.inputs)
            targets = np.asarray(term.targets, dtype=np.float64)
            _check_same_shape(probs, targets, "cross-entropy term")
            n = probs.shape[0]
            pc = np.maximum(probs, PROB_FLOOR)
            total += w * float(-(targets * np.log(pc)).sum(axis=1).mean())
            dprobs = w * (-targets / pc) / n
            grad += _backprop(model, acts, pre, dprobs)
        elif isinstance(term, KlConsistencyTerm):
            p, acts_p, pre_p = _forward_cache(model, term.inputs)
            q, acts_q, pre_q = _forward_cache(model, term.perturbed)
            _check_same_shape(p, q, "KL consistency term")
            n = p.shape[0]
            pc = np.maximum(p, PROB_FLOOR)
            qc = np.maximum(q, PROB_FLOOR)
            ratio = np.log(pc / qc)
            total += w * float((pc * ratio).sum(axis=1).mean())
            grad += _backprop(model, acts_p, pre_p, w * (ratio + 1.0) / n)
            grad += _backprop(model, acts_q, pre_q, w * (-pc / qc) / n)
        elif isinstance(term, SquaredConsistencyTerm):
            a, acts_a, pre_a = _forward_cache(model, term.first)
            b, acts_b, pre_b = _forward_cache(model, term.second)
            _check_same_shape(a, b, "squared consistency term")
            n = a.shape[0]
            diff = a - b
            total += w * float((diff ** 2).sum(axis=1).mean())
            grad += _backprop(model, acts_a, pre_a, w * 2.0 * diff / n)
            grad += _backprop(model, acts_b, pre_b, w * -2.0 * diff / n)
        elif isinstance(term, ParamDistanceTerm):
            if term.reference.shapes != model.params.shapes:
                raise InvalidInputError("parameter distance term: shape mismatch")
            diff = model.params.values - term.reference.values
            if term.reduction == "mean":
                denom = diff.size
            elif term.reduction == "sum":
                denom = 1
            else:
                raise InvalidInputError(f"unknown reduction {term.reduction!r}")
            total += w * float((diff ** 2).sum()) / denom
            grad += w * 2.0 * diff / denom
        else:
            raise InvalidInputError(f"unknown loss term {type(term).__name__}")
    return total, ParamVector(grad, model.params.shapes)


def loss_value(model: MlpModel, terms: Sequence[LossTerm]) -> float:
    return loss_and_gradient(model, terms)[0]


def gradient(model: MlpModel, terms: Sequence[LossTerm]) -> ParamVector:
    """Exact gradient of the composite loss w.r.t. every model parameter."""
    return loss_and_gradient(model, terms)[1]


def sgd_step(model: MlpModel, grad: ParamVector, eta: float) -> MlpModel:
    """One plain gradient step: params - eta * grad. Returns a new model."""
    if grad.shapes != model.params.shapes:
        raise InvalidInputError("gradient shapes do not match model parameters")
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0:
        raise InvalidInputError(f"bad learning rate {eta}")
    return model.with_params(
        ParamVector(model.params.values - eta * grad.values, model.params.shapes)
    )
