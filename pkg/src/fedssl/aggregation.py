"""Server-side model combination rules.

Two aggregation rules are provided: a plain unweighted mean of the selected
client models, and a frequency-aware rule that down-weights clients in
proportion to how often they have participated so far. On top of either, the
server forms the next global model as a convex mix of the aggregated
unsupervised model, the supervised model and the previous global model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSelectionError, InvalidInputError
from .nn import ParamVector, linear_combine


@dataclass(frozen=True)
class FrequencyTracker:
    """Per-client participation counts, including the current round."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise InvalidInputError("participation counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def fresh(cls, num_clients: int) -> "FrequencyTracker":
        return cls((0,) * num_clients)

    @property
    def num_clients(self) -> int:
        return len(self.counts)


def record_selection(tracker: FrequencyTracker, selected: Sequence[int]) -> FrequencyTracker:
    """New tracker with every selected client's count incremented by one."""
    counts = list(tracker.counts)
    for k in selected:
        if not 0 <= k < len(counts):
            raise InvalidInputError(f"client index {k} out of range")
        counts[k] += 1
    return FrequencyTracker(tuple(counts))


@dataclass(frozen=True)
class MixWeights:
    """Convex weights for (unsupervised, supervised, previous global)."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise InvalidInputError("mix weights must be nonnegative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-12:
            raise InvalidInputError("mix weights must sum to 1")


def fedavg(models: Sequence[ParamVector]) -> ParamVector:
    """Unweighted elementwise mean of the given models."""
    if not models:
        raise InvalidInputError("cannot average zero models")
    return linear_combine([(1.0 / len(models), m) for m in models])


def fedfreq_weights(
    tracker: FrequencyTracker, selected: Sequence[int], participation: float, num_clients: int
) -> np.ndarray:
    """Frequency-based weight per selected client, in `selected` order.

    With p_k the selected client's share of the selected clients' cumulative
    participation counts, the weight is (1 - p_k) / (F*K - 1): clients that
    train more often contribute less. When exactly F*K clients are selected
    the weights sum to 1.
    """
    selected = list(selected)
    expected = participation * num_clients
    if len(selected) < 2 or expected <= 1.0:
        raise DegenerateSelectionError(
            f"freq weights undefined for {len(selected)} selected, F*K={expected}"
        )
    counts = np.array([tracker.counts[k] for k in selected], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise InvalidInputError("tracker must already count the current round")
    shares = counts / total
    return (1.0 - shares) / (expected - 1.0)


def fedfreq(
    models: Sequence[ParamVector],
    tracker: FrequencyTracker,
    selected: Sequence[int],
    participation: float,
    num_clients: int,
) -> ParamVector:
    """Weighted sum of client models using frequency-based weights.

    If rounding of the selection size makes the raw weights miss 1, they are
    rescaled to sum to 1.
    """
    selected = list(selected)
    if len(models) != len(selected):
        raise InvalidInputError("models do not align with the selected clients")
    weights = fedfreq_weights(tracker, selected, participation, num_clients)
    total = weights.sum()
    if abs(total - 1.0) > 1e-9:
        weights = weights / total
    return linear_combine(list(zip(weights.tolist(), models)))


def mix(
    unsup: ParamVector, sup: ParamVector, prev_global: ParamVector, weights: MixWeights
) -> ParamVector:
    """Convex combination alpha*unsup + beta*sup + gamma*prev_global."""
    return linear_combine(
        [(weights.alpha, unsup), (weights.beta, sup), (weights.gamma, prev_global)]
    )
