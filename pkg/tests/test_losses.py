import numpy as np
import pytest

from conftest import fd_logit_grads, naive_softmax
from focalcal.losses import (FAMILIES, LossSpec, batch_logit_grads, batch_values,
                             entropy_bound_check, eval_loss, eval_loss_grad)

ALL_SPECS = [
    LossSpec(family="ce"),
    LossSpec(family="label_smoothing", alpha=0.05),
    LossSpec(family="brier"),
    LossSpec(family="focal", gamma=2.0),
    LossSpec(family="flsd53"),
    LossSpec(family="fcl", gamma=3.0, lam=0.5),
]


class TestLossSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossSpec(family="hinge")
        with pytest.raises(ValueError):
            LossSpec(family="focal", gamma=-1.0)
        with pytest.raises(ValueError):
            LossSpec(family="fcl", lam=-0.5)
        with pytest.raises(ValueError):
            LossSpec(family="label_smoothing", alpha=1.0)

    def test_json_round_trip(self):
        for spec in ALL_SPECS:
            assert LossSpec.from_json(spec.to_json()) == spec


class TestEvalLoss:
    def test_fcl_zero_at_perfect_onehot(self):
        spec = LossSpec(family="fcl", gamma=2.0, lam=0.5)
        assert eval_loss(spec, [1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_fcl_gamma0_lam0_is_ce(self):
        spec = LossSpec(family="fcl", gamma=0.0, lam=0.0)
        assert abs(eval_loss(spec, [0.5, 0.5], [1.0, 0.0]) - np.log(2)) < 1e-15

    def test_fcl_hand_value(self):
        # 0.16*(-ln 0.6) + (0.16 + 0.16) evaluated independently
        spec = LossSpec(family="fcl", gamma=2.0, lam=1.0)
        expected = 0.16 * -np.log(0.6) + 0.32
        assert abs(eval_loss(spec, [0.6, 0.4], [1.0, 0.0]) - expected) < 1e-15

    def test_ce_value(self):
        assert abs(eval_loss(LossSpec(family="ce"), [0.6, 0.4], [1.0, 0.0])
                   + np.log(0.6)) < 1e-15

    def test_brier_sum_convention(self):
        v = eval_loss(LossSpec(family="brier"), [0.6, 0.4], [1.0, 0.0])
        assert abs(v - (0.16 + 0.16)) < 1e-15

    def test_label_smoothing_is_ce_on_smoothed_target(self):
        spec = LossSpec(family="label_smoothing", alpha=0.1)
        p = np.array([0.6, 0.4])
        smoothed = np.array([0.9 * 1.0 + 0.05, 0.05])
        expected = float(-smoothed @ np.log(p))
        assert abs(eval_loss(spec, p, [1.0, 0.0]) - expected) < 1e-15

    def test_flsd_schedule(self):
        # true-class prob below 0.2 uses gamma 5, else gamma 3
        lo = eval_loss(LossSpec(family="flsd53"), [0.1, 0.9], [1.0, 0.0])
        assert abs(lo - 0.9 ** 5 * -np.log(0.1)) < 1e-15
        hi = eval_loss(LossSpec(family="flsd53"), [0.6, 0.4], [1.0, 0.0])
        assert abs(hi - 0.4 ** 3 * -np.log(0.6)) < 1e-15

    def test_lambda_zero_reduction_bitwise(self):
        rng = np.random.default_rng(4)
        probs = rng.dirichlet(np.ones(4), size=50)
        targets = np.eye(4)[rng.integers(0, 4, size=50)]
        for gamma in (0.0, 0.5, 1.0, 3.0):
            a = batch_values(LossSpec(family="fcl", gamma=gamma, lam=0.0), probs, targets)
            b = batch_values(LossSpec(family="focal", gamma=gamma), probs, targets)
            assert np.array_equal(a, b)

    def test_nonnegative_on_onehot_targets(self):
        rng = np.random.default_rng(5)
        probs = rng.dirichlet(np.ones(3), size=100)
        targets = np.eye(3)[rng.integers(0, 3, size=100)]
        for spec in ALL_SPECS:
            assert np.all(batch_values(spec, probs, targets) >= 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            eval_loss(LossSpec(family="ce"), [0.5, 0.5], [1.0, 0.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            eval_loss(LossSpec(family="ce"), [np.nan, 0.5], [1.0, 0.0])

    def test_log_clamp_keeps_value_finite(self):
        v = eval_loss(LossSpec(family="ce"), [0.0, 1.0], [1.0, 0.0])
        assert np.isfinite(v) and v > 0


class TestGradients:
    def test_ce_equal_logits(self):
        ev = eval_loss_grad(LossSpec(family="ce"), [0.0, 0.0], [1.0, 0.0])
        assert np.allclose(ev.grad_logits, [-0.5, 0.5], atol=1e-15)

    def test_ce_grad_is_p_minus_t_exactly(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(20, 3))
        t = np.eye(3)[rng.integers(0, 3, size=20)]
        _, g = batch_logit_grads(LossSpec(family="ce"), z, t)
        assert np.array_equal(g, naive_softmax(z) - t)

    def test_fcl_grad_linearity(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(30, 4))
        t = np.eye(4)[rng.integers(0, 4, size=30)]
        lam = 0.7
        _, g_fcl = batch_logit_grads(LossSpec(family="fcl", gamma=2.0, lam=lam), z, t)
        _, g_f = batch_logit_grads(LossSpec(family="focal", gamma=2.0), z, t)
        _, g_b = batch_logit_grads(LossSpec(family="brier"), z, t)
        assert np.allclose(g_fcl, g_f + lam * g_b, atol=1e-12)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family)
    def test_matches_finite_differences(self, spec):
        rng = np.random.default_rng(8)
        z = rng.normal(size=(50, 4)) * 2.0
        t = np.eye(4)[rng.integers(0, 4, size=50)]
        _, g = batch_logit_grads(spec, z, t)
        fd = fd_logit_grads(lambda zz: batch_logit_grads(spec, zz, t)[0], z)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-6

    def test_soft_target_gradients(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(20, 3))
        t = rng.dirichlet(np.ones(3), size=20)
        for spec in ALL_SPECS:
            _, g = batch_logit_grads(spec, z, t)
            fd = fd_logit_grads(lambda zz: batch_logit_grads(spec, zz, t)[0], z)
            assert np.max(np.abs(g - fd)) < 1e-7

    def test_value_matches_eval_loss(self):
        spec = LossSpec(family="fcl", gamma=1.5, lam=0.3)
        z = np.array([0.4, -1.2, 0.8])
        t = np.array([0.0, 1.0, 0.0])
        ev = eval_loss_grad(spec, z, t)
        assert abs(ev.value - eval_loss(spec, naive_softmax(z), t)) < 1e-12

    def test_non_finite_logits_rejected(self):
        with pytest.raises(ValueError):
            eval_loss_grad(LossSpec(family="ce"), [np.inf, 0.0], [1.0, 0.0])


class TestEntropyBound:
    def test_hand_case(self):
        out = entropy_bound_check([0.5, 0.5], [1.0, 0.0], 1.0)
        assert out["holds"]
        assert abs(out["lhs"] - 0.5 * np.log(2)) < 1e-12
        assert abs(out["rhs"]) < 1e-12

    def test_soft_target_equal_distributions(self):
        p = np.array([0.3, 0.7])
        out = entropy_bound_check(p, p, 2.0)
        assert out["holds"] and out["rhs"] <= 0.0 <= out["lhs"] + 1e-12

    def test_gamma_below_one_rejected(self):
        with pytest.raises(ValueError):
            entropy_bound_check([0.5, 0.5], [1.0, 0.0], 0.5)

    def test_random_sweep(self):
        rng = np.random.default_rng(10)
        probs = rng.dirichlet(np.ones(3), size=500)
        labels = rng.integers(0, 3, size=500)
        for gamma in (1.0, 2.0, 3.0):
            for p, y in zip(probs, labels):
                t = np.zeros(3)
                t[y] = 1.0
                assert entropy_bound_check(p, t, gamma)["holds"]


def test_families_frozen():
    assert FAMILIES == ("ce", "label_smoothing", "brier", "focal", "flsd53", "fcl")
