"""Loss-term tests: analytic values, enumeration oracles, gradient checks."""

import math

import numpy as np
import pytest

from polarseg import tensor as T
from polarseg.exceptions import InvalidArgumentError
from polarseg.losses import (
    PROB_EPS,
    LossBreakdown,
    LossWeights,
    bce_loss,
    containment_loss,
    joint_loss,
)


def brute_force_bce(probs, target):
    """Scalar loop evaluation of the mean binary cross-entropy."""
    total = 0.0
    p = np.clip(probs, PROB_EPS, 1 - PROB_EPS).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    for pi, ti in zip(p, t):
        total += ti * math.log(pi) + (1 - ti) * math.log(1 - pi)
    return -total / p.size


class TestBce:
    def test_perfect_prediction(self):
        target = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = float(bce_loss(target.copy(), target).data)
        assert 0.0 <= loss <= 1e-6

    def test_uniform_half_is_ln2(self):
        rng = np.random.default_rng(17)
        for shape in [(2, 2), (5, 3), (7,)]:
            target = (rng.uniform(size=shape) > 0.5).astype(np.float64)
            loss = float(bce_loss(np.full(shape, 0.5), target).data)
            assert abs(loss - math.log(2.0)) < 1e-9

    def test_random_vs_scalar_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            probs = rng.uniform(0.01, 0.99, size=(3, 3))
            target = (rng.uniform(size=(3, 3)) > 0.5).astype(np.float64)
            got = float(bce_loss(probs, target).data)
            assert abs(got - brute_force_bce(probs, target)) < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            bce_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_non_negative(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            probs = rng.uniform(size=(4, 4))
            target = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
            assert float(bce_loss(probs, target).data) >= 0.0


class TestContainment:
    def test_nested_masks_are_free(self):
        disc = np.zeros((6, 6))
        disc[1:5, 1:5] = 1
        cup = np.zeros((6, 6))
        cup[2:4, 2:4] = 1
        assert containment_loss(cup, disc, mode="count") == 0
        assert containment_loss(cup, disc, mode="normalized") == 0.0

    def test_single_violation(self):
        disc = np.zeros((4, 4))
        disc[0:2, 0:2] = 1
        cup = np.zeros((4, 4))
        cup[3, 3] = 1
        assert containment_loss(cup, disc, mode="count") == 1
        assert containment_loss(cup, disc, mode="normalized") == pytest.approx(1 / 16)

    def test_count_matches_pixel_loop(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            disc = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
            cup = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
            expected = 0
            for i in range(4):
                for j in range(4):
                    if cup[i, j] == 1 and disc[i, j] == 0:
                        expected += 1
            assert containment_loss(cup, disc, mode="count") == expected

    def test_zero_iff_contained(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            disc = rng.uniform(size=(5, 5)) > 0.4
            cup = rng.uniform(size=(5, 5)) > 0.6
            value = containment_loss(cup.astype(float), disc.astype(float), mode="count")
            assert (value == 0) == bool(np.all(~cup | disc))

    def test_monotone_in_cup_probability(self):
        rng = np.random.default_rng(41)
        cup = rng.uniform(size=(3, 3))
        disc = rng.uniform(0, 0.999, size=(3, 3))
        base = containment_loss(cup, disc)
        bumped = cup.copy()
        bumped[1, 1] = min(1.0, bumped[1, 1] + 0.1)
        assert containment_loss(bumped, disc) >= base

    def test_tensor_mode_differentiable(self):
        cup = T.Tensor(np.array([[0.7, 0.2]]), requires_grad=True)
        disc = T.Tensor(np.array([[0.1, 0.9]]))
        out = containment_loss(cup, disc)
        out.backward()
        np.testing.assert_allclose(cup.grad, (1 - disc.data) / 2)

    def test_unknown_mode(self):
        with pytest.raises(InvalidArgumentError):
            containment_loss(np.zeros((2, 2)), np.zeros((2, 2)), mode="other")


class TestJointLoss:
    def test_disc_only_weighting(self):
        rng = np.random.default_rng(43)
        logits = T.Tensor(rng.standard_normal((2, 4, 4, 2)))
        disc_t = (rng.uniform(size=(2, 4, 4)) > 0.5).astype(np.float64)
        cup_t = (rng.uniform(size=(2, 4, 4)) > 0.5).astype(np.float64)
        bd = joint_loss(logits, disc_t, cup_t, LossWeights(1.0, 0.0, 0.0))
        assert bd.total == pytest.approx(bd.l_disk, rel=1e-12)

    def test_zero_weights_zero_total(self):
        rng = np.random.default_rng(47)
        logits = T.Tensor(rng.standard_normal((4, 4, 2)))
        disc_t = np.ones((4, 4))
        cup_t = np.zeros((4, 4))
        bd = joint_loss(logits, disc_t, cup_t, LossWeights(0.0, 0.0, 0.0))
        assert bd.total == 0.0

    def test_crafted_half_probability_case(self):
        # logits 0 -> p = 0.5 everywhere; cup target escapes the disc target
        logits = T.Tensor(np.zeros((2, 2, 2)))
        disc_t = np.array([[1.0, 0.0], [0.0, 0.0]])
        cup_t = np.array([[0.0, 1.0], [0.0, 0.0]])
        w = LossWeights(0.5, 0.5, 0.1)
        bd = joint_loss(logits, disc_t, cup_t, w)
        # scalar oracle: both BCE terms are ln2; containment is mean of 0.5*0.5
        expected = 0.5 * math.log(2) + 0.5 * math.log(2) + 0.1 * 0.25
        assert bd.total == pytest.approx(expected, abs=1e-12)
        assert bd.l_contain == pytest.approx(0.25, abs=1e-12)

    def test_breakdown_identity(self):
        rng = np.random.default_rng(53)
        for _ in range(10):
            logits = T.Tensor(rng.standard_normal((3, 3, 2)))
            disc_t = (rng.uniform(size=(3, 3)) > 0.5).astype(np.float64)
            cup_t = (rng.uniform(size=(3, 3)) > 0.5).astype(np.float64)
            w = LossWeights(rng.uniform(), rng.uniform(), rng.uniform())
            bd = joint_loss(logits, disc_t, cup_t, w)
            assert bd.total == pytest.approx(
                w.disc * bd.l_disk + w.cup * bd.l_cup + w.containment * bd.l_contain, rel=1e-12)
            assert min(bd.l_disk, bd.l_cup, bd.l_contain, bd.total) >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(59)
        logits = rng.standard_normal((4, 4, 2))
        disc_t = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
        cup_t = (rng.uniform(size=(4, 4)) > 0.5).astype(np.float64)
        w = LossWeights(0.5, 0.5, 0.1)

        leaf = T.Tensor(logits.copy(), requires_grad=True)
        joint_loss(leaf, disc_t, cup_t, w).node.backward()

        num = np.zeros_like(logits)
        h = 1e-6
        flat = logits.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = joint_loss(T.Tensor(logits), disc_t, cup_t, w).total
            flat[i] = orig - h
            fm = joint_loss(T.Tensor(logits), disc_t, cup_t, w).total
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
        rel = np.linalg.norm(leaf.grad - num) / np.linalg.norm(num)
        assert rel < 1e-6

    def test_weight_validation(self):
        with pytest.raises(InvalidArgumentError):
            LossWeights(disc=1.5)
        with pytest.raises(InvalidArgumentError):
            LossWeights(containment=-0.1)

    def test_channel_count_validation(self):
        with pytest.raises(InvalidArgumentError):
            joint_loss(T.Tensor(np.zeros((2, 2, 3))), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_breakdown_node_backprop(self):
        logits = T.Tensor(np.zeros((2, 2, 2)), requires_grad=True)
        bd = joint_loss(logits, np.ones((2, 2)), np.zeros((2, 2)))
        assert isinstance(bd, LossBreakdown)
        bd.node.backward()
        assert logits.grad is not None and np.all(np.isfinite(logits.grad))
