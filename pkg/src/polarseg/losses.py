"""Joint segmentation loss: disc and cup cross-entropies plus a containment penalty.

The containment term scores probability mass assigned to "cup" where "disc"
is absent. Two forms are exposed:

* ``"normalized"`` — mean of ``cup * (1 - disc)`` over all pixels. Computed
  on predicted probabilities this is differentiable and scale-stable, and is
  the form used in the training objective.
* ``"count"`` — plain sum, intended for binary masks, where it equals the
  exact number of cup pixels outside the disc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import InvalidArgumentError

PROB_EPS = 1e-7  # clamp applied to probabilities before logs


@dataclass(frozen=True)
class LossWeights:
    """Weights of the three loss terms, each in [0, 1]."""

    disc: float = 0.5
    cup: float = 0.5
    containment: float = 0.1

    def __post_init__(self):
        for name, v in (("disc", self.disc), ("cup", self.cup), ("containment", self.containment)):
            if not (0.0 <= v <= 1.0):
                raise InvalidArgumentError(f"loss weight {name} must lie in [0, 1], got {v}")


@dataclass
class LossBreakdown:
    """Scalar values of the loss terms; `node` carries the differentiable total."""

    l_disk: float
    l_cup: float
    l_contain: float
    total: float
    node: T.Tensor | None = None


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")


def bce_loss(probs, target) -> T.Tensor:
    """Mean binary cross-entropy; probabilities are clamped to [eps, 1-eps]."""
    probs = probs if isinstance(probs, T.Tensor) else T.Tensor(np.asarray(probs, dtype=np.float64))
    tgt = np.asarray(target, dtype=probs.dtype)
    _check_same_shape(probs.data, tgt)
    p = T.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    ll = T.Tensor(tgt) * T.log(p) + T.Tensor(1.0 - tgt) * T.log(1.0 - p)
    return -ll.mean()


def containment_loss(cup, disc, mode: str = "normalized"):
    """Penalty on cup mass outside the disc.

    With Tensor inputs the result is a Tensor (differentiable); with arrays a
    float (or exact int in count mode over binary masks).
    """
    if mode not in ("normalized", "count"):
        raise InvalidArgumentError(f"unknown containment mode {mode!r}")
    if isinstance(cup, T.Tensor) or isinstance(disc, T.Tensor):
        cup_t = cup if isinstance(cup, T.Tensor) else T.Tensor(np.asarray(cup))
        disc_t = disc if isinstance(disc, T.Tensor) else T.Tensor(np.asarray(disc))
        _check_same_shape(cup_t.data, disc_t.data)
        prod = cup_t * (1.0 - disc_t)
        return prod.mean() if mode == "normalized" else prod.sum()
    cup_a = np.asarray(cup, dtype=np.float64)
    disc_a = np.asarray(disc, dtype=np.float64)
    _check_same_shape(cup_a, disc_a)
    violations = cup_a * (1.0 - disc_a)
    if mode == "count":
        total = violations.sum()
        return int(total) if float(total).is_integer() else float(total)
    return float(violations.mean())


def joint_loss(logits: T.Tensor, disc_target, cup_target,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Weighted sum of disc BCE, cup BCE, and the normalized containment term.

    `logits` has two channels on the last axis: 0 = disc, 1 = cup. Targets
    are binary maps matching the leading shape.
    """
    if not isinstance(logits, T.Tensor):
        logits = T.Tensor(np.asarray(logits))
    if logits.shape[-1] != 2:
        raise InvalidArgumentError(f"expected 2 channels on the last axis, got {logits.shape}")
    disc_t = np.asarray(disc_target)
    cup_t = np.asarray(cup_target)
    _check_same_shape(logits.data[..., 0], disc_t)
    _check_same_shape(logits.data[..., 1], cup_t)

    disc_p = T.sigmoid(logits[..., 0:1])
    cup_p = T.sigmoid(logits[..., 1:2])
    l_disk = bce_loss(disc_p, disc_t[..., None])
    l_cup = bce_loss(cup_p, cup_t[..., None])
    l_contain = containment_loss(cup_p, disc_p, mode="normalized")
    total = weights.disc * l_disk + weights.cup * l_cup + weights.containment * l_contain
    return LossBreakdown(
        l_disk=float(l_disk.data),
        l_cup=float(l_cup.data),
        l_contain=float(l_contain.data),
        total=float(total.data),
        node=total,
    )
