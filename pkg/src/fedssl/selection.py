"""Pseudo-label generation and unlabeled-sample selection strategies.

Pseudo-labels are one-hot votes at the argmax of class probabilities summed
over several augmented copies of a sample (the first copy is always the
untouched sample). Which samples get pseudo-labeled is decided by one of
three strategies: highest prediction entropy ("uncertainty"), lowest
("min_entropy"), or a uniform random draw.

All tie-breaks are deterministic: argmax ties resolve to the lowest class
index and entropy ties to the lowest pool index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .nn import PROB_FLOOR, MlpModel, forward

Augmenter = Callable[[np.ndarray, np.random.Generator], np.ndarray]

STRATEGY_KINDS = ("uncertainty", "min_entropy", "random")


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    n: int = 100

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise InvalidInputError(f"unknown selection strategy {self.kind!r}")
        if self.n < 1:
            raise InvalidInputError("selection size must be positive")


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Information entropy of each probability row, in nats."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if np.any(probs < -1e-9) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidInputError("entropy requires probability rows summing to 1")
    clipped = np.maximum(probs, PROB_FLOOR)
    return -(probs * np.log(clipped)).sum(axis=1)


def entropy(prob_row: np.ndarray) -> float:
    """Entropy of one distribution; 0 for a one-hot row, ln(c) for uniform."""
    return float(entropy_rows(prob_row)[0])


def pseudo_label(
    model: MlpModel, u: np.ndarray, num_augmentations: int, augmenter: Augmenter, rng: np.random.Generator
) -> np.ndarray:
    """One-hot label at the argmax of predictions summed over augmented copies.

    The vote uses the raw sample plus `num_augmentations - 1` augmented copies
    drawn with `rng`. Ties go to the lowest class index.
    """
    return pseudo_label_batch(model, np.atleast_2d(u), num_augmentations, augmenter, rng)[0]


def pseudo_label_batch(
    model: MlpModel,
    inputs: np.ndarray,
    num_augmentations: int,
    augmenter: Augmenter,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized pseudo-labeling: one one-hot row per input row."""
    if num_augmentations < 1:
        raise InvalidInputError("need at least one copy for the argmax vote")
    inputs = np.atleast_2d(inputs)
    summed = forward(model, inputs)
    for _ in range(num_augmentations - 1):
        summed = summed + forward(model, augmenter(inputs, rng))
    picks = summed.argmax(axis=1)  # ties resolve to the lowest index
    out = np.zeros_like(summed)
    out[np.arange(inputs.shape[0]), picks] = 1.0
    return out


def select(
    model: MlpModel, pool: np.ndarray, strategy: SelectionStrategy, rng: np.random.Generator
) -> np.ndarray:
    """Indices of the strategy's n picks from the unlabeled pool.

    Uncertainty keeps the n highest-entropy samples, min_entropy the n lowest
    (entropy ties break toward the lower pool index); random draws uniformly
    without replacement. The result is deterministic given the model, the
    pool order, and the generator state.
    """
    pool = np.atleast_2d(pool)
    if strategy.n > pool.shape[0]:
        raise InvalidInputError(
            f"cannot select {strategy.n} samples from a pool of {pool.shape[0]}"
        )
    if strategy.kind == "random":
        return np.sort(rng.choice(pool.shape[0], size=strategy.n, replace=False))
    scores = entropy_rows(forward(model, pool))
    if strategy.kind == "uncertainty":
        order = np.argsort(-scores, kind="stable")
    else:
        order = np.argsort(scores, kind="stable")
    return order[: strategy.n]
