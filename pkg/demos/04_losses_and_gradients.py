"""The joint loss and its gradient, checked against first principles.

The objective is a weighted sum of two cross-entropies (disc, cup) and a
containment penalty that charges for cup probability sitting outside the
disc. This script evaluates the pieces on hand-crafted cases and then
verifies the autograd gradient against central finite differences.
"""

import math

import numpy as np

from polarseg import tensor as T
from polarseg.losses import LossWeights, bce_loss, containment_loss, joint_loss

# -- hand-checkable values ------------------------------------------------------
target = np.array([[1.0, 0.0], [0.0, 1.0]])
print(f"BCE at p=0.5 everywhere: {float(bce_loss(np.full((2, 2), 0.5), target).data):.6f} "
      f"(ln 2 = {math.log(2):.6f})")
print(f"BCE at perfect prediction: {float(bce_loss(target.copy(), target).data):.2e}")

disc = np.array([[1.0, 1.0], [0.0, 0.0]])
cup_inside = np.array([[1.0, 0.0], [0.0, 0.0]])
cup_outside = np.array([[0.0, 0.0], [1.0, 0.0]])
print(f"containment, cup inside disc:  count={containment_loss(cup_inside, disc, 'count')}")
print(f"containment, one pixel out:    count={containment_loss(cup_outside, disc, 'count')}, "
      f"normalized={containment_loss(cup_outside, disc, 'normalized'):.4f}")

# -- full breakdown -------------------------------------------------------------
rng = np.random.default_rng(7)
logits = T.Tensor(rng.standard_normal((4, 4, 2)), requires_grad=True)
disc_t = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
cup_t = (disc_t * (rng.uniform(size=(4, 4)) > 0.5)).astype(np.float64)
weights = LossWeights(disc=0.5, cup=0.5, containment=0.1)
breakdown = joint_loss(logits, disc_t, cup_t, weights)
print(f"\njoint loss: disc {breakdown.l_disk:.4f} + cup {breakdown.l_cup:.4f} "
      f"+ containment {breakdown.l_contain:.4f} -> total {breakdown.total:.4f}")

# -- gradient vs central differences ---------------------------------------------
breakdown.node.backward()
analytic = logits.grad.copy()
numeric = np.zeros_like(analytic)
h = 1e-6
flat = logits.data.reshape(-1)
nflat = numeric.reshape(-1)
for i in range(flat.size):
    orig = flat[i]
    flat[i] = orig + h
    fp = joint_loss(T.Tensor(logits.data), disc_t, cup_t, weights).total
    flat[i] = orig - h
    fm = joint_loss(T.Tensor(logits.data), disc_t, cup_t, weights).total
    flat[i] = orig
    nflat[i] = (fp - fm) / (2 * h)
rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
print(f"gradient vs finite differences: relative error {rel:.2e}")
