"""Scalar training objectives for the two semi-supervised federation scenarios.

The mixed method trains two models per round: an unsupervised one on
pseudo-labeled and augmented data, and a supervised one on labeled data. The
pseudo-label cross-entropy term is phased in over rounds by an arctan ramp
(`lambda_t`), while the consistency term is phased out; a parameter-space
penalty keeps the unsupervised model close to the supervised one.

The plain scenario losses used by the single-model baselines (cross-entropy
plus KL consistency) live here too. Every objective returns
``(value, gradient)`` with the gradient taken via the exact engine in `nn`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .nn import (
    Batch,
    CrossEntropyTerm,
    KlConsistencyTerm,
    MlpModel,
    ParamDistanceTerm,
    ParamVector,
    SquaredConsistencyTerm,
    loss_and_gradient,
    one_hot,
)


@dataclass(frozen=True)
class SslHyperparams:
    """Knobs of the semi-supervised objectives.

    `participation` (client fraction), `num_clients`, `batch_unlabeled` and
    `epochs_unlabeled` only enter through the `lambda_t` ramp.
    """

    lambda_s: float = 10.0
    lambda_l2: float = 15.0
    participation: float = 0.05
    num_clients: int = 100
    batch_unlabeled: int = 100
    epochs_unlabeled: int = 1
    consistency_kind: str = "squared"

    def __post_init__(self):
        if not (0.0 < self.participation <= 1.0):
            raise InvalidInputError(f"participation {self.participation} not in (0, 1]")
        if self.participation * self.num_clients < 1.0:
            raise InvalidInputError("participation * num_clients must be >= 1")
        if self.lambda_s < 0 or self.lambda_l2 < 0:
            raise InvalidInputError("loss weights must be nonnegative")
        if min(self.num_clients, self.batch_unlabeled, self.epochs_unlabeled) < 1:
            raise InvalidInputError("counts must be positive")
        if self.consistency_kind not in ("kl", "squared"):
            raise InvalidInputError(f"unknown consistency kind {self.consistency_kind!r}")


def lambda_t(hp: SslHyperparams, t: int) -> float:
    """Pseudo-label weight for round t: (2/pi) * arctan(F*K*t / (2*B*E)).

    0 at t = 0, strictly increasing, approaches 1 as t grows.
    """
    if t < 0:
        raise InvalidInputError(f"round index {t} is negative")
    num = hp.participation * hp.num_clients * t
    den = 2.0 * hp.batch_unlabeled * hp.epochs_unlabeled
    return float(2.0 / np.pi * np.arctan(num / den))


def _checked_targets(inputs: np.ndarray, targets: np.ndarray, num_classes: int, what: str) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (np.atleast_2d(inputs).shape[0], num_classes):
        raise InvalidInputError(f"{what}: target matrix shape {targets.shape} is wrong")
    if np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidInputError(f"{what}: target rows must sum to 1")
    return targets


def unsup_loss_at_weight(
    model: MlpModel,
    sup_params: ParamVector,
    u_batch: Batch,
    pseudo: np.ndarray,
    aug1: np.ndarray,
    aug2: np.ndarray,
    lambda_l2: float,
    pseudo_weight: float,
    consistency_kind: str = "squared",
) -> tuple[float, ParamVector]:
    """Unsupervised objective with an explicit pseudo-label weight.

    pseudo_weight * CE(pseudo, f(u))
    + (1 - pseudo_weight) * consistency(f(aug1), f(aug2))
    + lambda_l2 * mean squared parameter distance to the supervised model.
    """
    pseudo = _checked_targets(u_batch.inputs, pseudo, model.num_classes, "unsup_loss")
    if consistency_kind == "kl":
        consistency = KlConsistencyTerm(1.0 - pseudo_weight, aug1, aug2)
    else:
        consistency = SquaredConsistencyTerm(1.0 - pseudo_weight, aug1, aug2)
    terms = [
        CrossEntropyTerm(pseudo_weight, u_batch.inputs, pseudo),
        consistency,
        ParamDistanceTerm(lambda_l2, sup_params, reduction="mean"),
    ]
    return loss_and_gradient(model, terms)


def unsup_loss(
    model: MlpModel,
    sup_params: ParamVector,
    u_batch: Batch,
    pseudo: np.ndarray,
    aug1: np.ndarray,
    aug2: np.ndarray,
    hp: SslHyperparams,
    t: int,
) -> tuple[float, ParamVector]:
    """Unsupervised-model objective at round t: the pseudo-label weight
    follows the lambda_t ramp, trading consistency for pseudo-label CE."""
    return unsup_loss_at_weight(
        model,
        sup_params,
        u_batch,
        pseudo,
        aug1,
        aug2,
        hp.lambda_l2,
        lambda_t(hp, t),
        hp.consistency_kind,
    )


def sup_loss(model: MlpModel, s_batch: Batch, hp: SslHyperparams) -> tuple[float, ParamVector]:
    """Supervised-model objective: lambda_s * mean CE against one-hot labels."""
    if s_batch.labels is None:
        raise InvalidInputError("sup_loss requires a labeled batch")
    targets = one_hot(s_batch.labels, model.num_classes)
    return loss_and_gradient(model, [CrossEntropyTerm(hp.lambda_s, s_batch.inputs, targets)])


def baseline_client_loss_lac(
    model: MlpModel, s_batch: Batch, u_batch: Batch, aug: np.ndarray
) -> tuple[float, ParamVector]:
    """Single-model client loss when labels live on the client.

    Mean CE on the labeled batch plus mean KL between predictions on the
    unlabeled batch and on its augmented copy, both with weight 1.
    """
    if s_batch.labels is None:
        raise InvalidInputError("labels-at-client baseline needs a labeled batch")
    targets = one_hot(s_batch.labels, model.num_classes)
    terms = [
        CrossEntropyTerm(1.0, s_batch.inputs, targets),
        KlConsistencyTerm(1.0, u_batch.inputs, aug),
    ]
    return loss_and_gradient(model, terms)


def baseline_client_loss_las(
    model: MlpModel, u_batch: Batch, pseudo: np.ndarray, aug: np.ndarray
) -> tuple[float, ParamVector]:
    """Single-model client loss when labels live on the server only.

    Mean CE against pseudo-labels plus the same KL consistency term.
    """
    pseudo = _checked_targets(u_batch.inputs, pseudo, model.num_classes, "baseline_client_loss_las")
    terms = [
        CrossEntropyTerm(1.0, u_batch.inputs, pseudo),
        KlConsistencyTerm(1.0, u_batch.inputs, aug),
    ]
    return loss_and_gradient(model, terms)


def server_loss(model: MlpModel, s_batch: Batch) -> tuple[float, ParamVector]:
    """Plain mean cross-entropy of the model on the server's labeled batch."""
    if s_batch.labels is None:
        raise InvalidInputError("server_loss requires a labeled batch")
    targets = one_hot(s_batch.labels, model.num_classes)
    return loss_and_gradient(model, [CrossEntropyTerm(1.0, s_batch.inputs, targets)])
