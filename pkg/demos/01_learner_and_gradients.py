"""The learner: flat-parameter MLP, loss primitives, exact gradients.

Builds a tiny classifier, walks through the loss pieces used everywhere else
(cross-entropy, KL and squared consistency distances, parameter penalty) and
shows that the analytic gradient of a full composite loss matches central
finite differences coordinate by coordinate.
"""

import numpy as np

from fedssl import (
    Batch,
    MlpModel,
    SslHyperparams,
    cross_entropy,
    forward,
    kl_divergence,
    one_hot,
    sq_prob_distance,
    unsup_loss,
)
from fedssl.nn import ParamVector

rng = np.random.default_rng(0)

model = MlpModel.init((5, 16, 3), seed=0)
print(f"model dims {model.layer_dims}, {model.params.size} parameters")

x = rng.uniform(size=(6, 5))
probs = forward(model, x)
print("forward rows sum to", probs.sum(axis=1))

targets = one_hot(rng.integers(0, 3, size=6), 3)
print(f"cross-entropy vs random one-hots: {cross_entropy(probs, targets):.4f}")
print(f"KL to itself                    : {kl_divergence(probs, probs):.2e}")
shifted = forward(model, np.clip(x + 0.05, 0, 1))
print(f"squared distance after a nudge  : {sq_prob_distance(probs, shifted):.5f}")

# The unsupervised objective combines pseudo-label CE, a consistency term
# and a pull toward the supervised model's parameters.
hp = SslHyperparams(participation=0.5, num_clients=10, batch_unlabeled=32)
sup_params = MlpModel.init((5, 16, 3), seed=1).params
aug1 = np.clip(x + rng.normal(scale=0.05, size=x.shape), 0, 1)
aug2 = np.clip(x + rng.normal(scale=0.05, size=x.shape), 0, 1)
value, grad = unsup_loss(model, sup_params, Batch(x), targets, aug1, aug2, hp, t=5)
print(f"\nunsupervised objective at round 5: {value:.4f}")

# Spot-check the gradient against central differences on a few coordinates.
step = 1e-5
print("coord  analytic      finite-diff")
for i in (0, 37, 80):
    up = model.params.values.copy()
    up[i] += step
    down = model.params.values.copy()
    down[i] -= step
    f = lambda v: unsup_loss(
        model.with_params(ParamVector(v, model.params.shapes)),
        sup_params, Batch(x), targets, aug1, aug2, hp, t=5,
    )[0]
    fd = (f(up) - f(down)) / (2 * step)
    print(f"{i:5d}  {grad.values[i]:+.8f}  {fd:+.8f}")
