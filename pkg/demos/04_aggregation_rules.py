"""Aggregation rules: plain averaging vs frequency-aware weighting.

When client sampling is unlucky, some clients train far more often than
others and plain averaging lets them dominate the global model. The
frequency rule weights each selected client by (1 - participation share),
so frequently seen clients count less.
"""

import numpy as np

from fedssl import FrequencyTracker, fedavg, fedfreq, fedfreq_weights, mix, record_selection
from fedssl.aggregation import MixWeights
from fedssl.nn import ParamVector
from fedssl.orchestrator import sample_clients

K, F, rounds = 10, 0.5, 40
tracker = FrequencyTracker.fresh(K)
for t in range(rounds):
    selected = sample_clients(K, F, np.random.default_rng((123, t)))
    tracker = record_selection(tracker, selected.tolist())

print("participation counts after 40 rounds:", tracker.counts)
selected = sorted(np.random.default_rng(9).choice(K, size=5, replace=False).tolist())
weights = fedfreq_weights(tracker, selected, F, K)
print("\nselected clients :", selected)
print("their counts     :", [tracker.counts[k] for k in selected])
print("frequency weights:", np.round(weights, 4), " sum =", round(weights.sum(), 6))
print("(plain averaging would give 0.2 each)")

# With equal counts the two rules coincide exactly.
uniform = FrequencyTracker((3,) * K)
models = [ParamVector(np.random.default_rng(i).normal(size=6), ((2, 3),)) for i in range(5)]
delta = fedfreq(models, uniform, selected, F, K).values - fedavg(models).values
print("\nuniform counts: max |fedfreq - fedavg| =", np.abs(delta).max())

# The per-round global model is a convex mix of three ingredients.
unsup = ParamVector(np.array([1.0, 0.0, 0.0]), ((1, 3),))
sup = ParamVector(np.array([0.0, 1.0, 0.0]), ((1, 3),))
prev_global = ParamVector(np.array([0.0, 0.0, 1.0]), ((1, 3),))
mixed = mix(unsup, sup, prev_global, MixWeights(0.5, 0.3, 0.2))
print("mix(0.5, 0.3, 0.2) of the three unit vectors:", mixed.values)
