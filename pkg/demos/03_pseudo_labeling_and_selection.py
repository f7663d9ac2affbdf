"""Pseudo-labeling by augmented vote, and the three selection strategies.

Shows the ramp that shifts training weight from consistency to pseudo-label
cross-entropy over rounds, how voting over several augmented copies cleans
up pseudo-labels, and what each selection strategy picks from a pool.
"""

import numpy as np

from fedssl import MlpModel, SslHyperparams, gen_synthetic, lambda_t
from fedssl.data import candidate_augmenter
from fedssl.nn import forward
from fedssl.selection import SelectionStrategy, entropy_rows, pseudo_label_batch, select

# The ramp: 0 at round 0, 0.5 where F*K*t = 2*B*E, toward 1 late.
hp = SslHyperparams(participation=0.05, num_clients=100, batch_unlabeled=100)
print("round   0    20    40    100   300   600")
print("ramp  " + "  ".join(f"{lambda_t(hp, t):.2f}" for t in (0, 20, 40, 100, 300, 600)))

# A weakly trained model on blobs: vote quality improves with more copies.
ds = gen_synthetic(num_classes=4, dims=16, samples=600, spread=0.45, seed=3)
model = MlpModel.init((16, 32, 4), seed=0)
from fedssl.nn import Batch, sgd_step
from fedssl.objectives import sup_loss

rng = np.random.default_rng(0)
for _ in range(30):  # a few supervised steps only
    idx = rng.permutation(600)[:32]
    _, grad = sup_loss(model, Batch(ds.features[idx], labels=ds.labels[idx]), hp)
    model = sgd_step(model, grad, 0.01)

aug = candidate_augmenter(image_shape=None, noise_sigma=0.1)
print("\ncopies  pseudo-label accuracy")
for copies in (1, 3, 5, 9):
    pseudo = pseudo_label_batch(model, ds.features, copies, aug, np.random.default_rng(7))
    acc = (pseudo.argmax(axis=1) == ds.labels).mean()
    print(f"{copies:6d}  {acc:.3f}")

# Selection strategies on the same pool.
scores = entropy_rows(forward(model, ds.features))
print(f"\npool entropies: min {scores.min():.3f}, median {np.median(scores):.3f}, max {scores.max():.3f}")
for kind in ("uncertainty", "min_entropy", "random"):
    picked = select(model, ds.features, SelectionStrategy(kind, 100), np.random.default_rng(1))
    print(f"{kind:12s} picks entropy range [{scores[picked].min():.3f}, {scores[picked].max():.3f}]"
          f", pseudo accuracy on picks "
          f"{(pseudo_label_batch(model, ds.features[picked], 3, aug, np.random.default_rng(2)).argmax(axis=1) == ds.labels[picked]).mean():.3f}")
