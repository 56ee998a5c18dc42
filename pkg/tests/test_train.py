import numpy as np
import pytest

from focalcal.data import LabeledPoint, SyntheticConfig, generate, points_to_arrays
from focalcal.losses import LossSpec
from focalcal.train import (MLPConfig, ModelState, decision_grid, forward,
                            init_model, lambda_sweep, loss_and_grads,
                            predictions, split_points, train)


def four_point_xor_free():
    # linearly separable in x0
    pts = [LabeledPoint(x=np.array([-1.0, 0.3]), label=0),
           LabeledPoint(x=np.array([-0.8, -0.2]), label=0),
           LabeledPoint(x=np.array([0.9, 0.1]), label=1),
           LabeledPoint(x=np.array([1.1, -0.4]), label=1)]
    return pts


class TestConfig:
    def test_defaults(self):
        cfg = MLPConfig()
        assert cfg.layers == (2, 10, 10, 2)
        assert cfg.activation == "relu" and cfg.optimizer == "adam"
        assert cfg.epochs == 500 and cfg.lr == 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            MLPConfig(layers=(2,))
        with pytest.raises(ValueError):
            MLPConfig(activation="gelu")
        with pytest.raises(ValueError):
            MLPConfig(epochs=0)
        with pytest.raises(ValueError):
            MLPConfig(lr=0.0)


class TestModelState:
    def test_serialization_bit_exact(self, tmp_path):
        model = init_model(MLPConfig(seed=3))
        path = tmp_path / "m.json"
        model.save(path)
        back = ModelState.load(path)
        for a, b in zip(model.weights, back.weights):
            assert np.array_equal(a, b)
        for a, b in zip(model.biases, back.biases):
            assert np.array_equal(a, b)
        assert back.config == model.config

    def test_init_shapes_and_bounds(self):
        cfg = MLPConfig(layers=(2, 5, 3))
        model = init_model(cfg)
        assert model.weights[0].shape == (2, 5) and model.weights[1].shape == (5, 3)
        for w, fan_in in zip(model.weights, (2, 5)):
            assert np.max(np.abs(w)) <= 1.0 / np.sqrt(fan_in)
        for b in model.biases:
            assert np.all(b == 0.0)


class TestTraining:
    def test_determinism(self):
        pts = generate(SyntheticConfig(kind="moons", n=100, noise=0.2, seed=2))
        tr, _, te = split_points(pts, 2)
        cfg = MLPConfig(seed=2, epochs=30)
        spec = LossSpec(family="ce")
        m1, h1 = train(cfg, spec, tr, te)
        m2, h2 = train(cfg, spec, tr, te)
        for a, b in zip(m1.weights, m2.weights):
            assert np.array_equal(a, b)
        assert h1.epochs == h2.epochs

    def test_separable_reaches_zero_error(self):
        pts = four_point_xor_free()
        model, hist = train(MLPConfig(seed=1, epochs=500, lr=0.05), LossSpec(family="ce"),
                            pts, pts)
        assert hist.epochs[-1]["test_error"] == 0.0

    def test_loss_decreases(self):
        pts = generate(SyntheticConfig(kind="moons", n=200, noise=0.2, seed=4))
        tr, _, te = split_points(pts, 4)
        _, hist = train(MLPConfig(seed=4, epochs=100), LossSpec(family="fcl", gamma=3.0, lam=0.5),
                        tr, te)
        assert hist.epochs[-1]["train_loss"] < hist.epochs[0]["train_loss"]

    def test_history_schema(self):
        pts = four_point_xor_free()
        _, hist = train(MLPConfig(seed=1, epochs=3, lr=0.01), LossSpec(family="ce"), pts, pts)
        assert len(hist.epochs) == 3
        assert set(hist.epochs[0]) == {"epoch", "train_loss", "test_loss",
                                       "test_ece", "test_nll", "test_error"}

    def test_parameter_gradients_match_finite_differences(self):
        pts = generate(SyntheticConfig(kind="moons", n=30, noise=0.2, seed=5))
        xs, ys, _ = points_to_arrays(pts)
        targets = np.eye(2)[ys]
        model = init_model(MLPConfig(seed=5, activation="tanh"))
        spec = LossSpec(family="fcl", gamma=2.0, lam=0.5)
        _, gw, gb = loss_and_grads(model, spec, xs, targets)
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(10):
            layer = int(rng.integers(0, len(model.weights)))
            i = int(rng.integers(0, model.weights[layer].shape[0]))
            j = int(rng.integers(0, model.weights[layer].shape[1]))
            orig = model.weights[layer][i, j]
            model.weights[layer][i, j] = orig + h
            up, _, _ = loss_and_grads(model, spec, xs, targets)
            model.weights[layer][i, j] = orig - h
            dn, _, _ = loss_and_grads(model, spec, xs, targets)
            model.weights[layer][i, j] = orig
            fd = (up - dn) / (2.0 * h)
            assert abs(gw[layer][i, j] - fd) / max(abs(fd), 1.0) < 1e-5

    def test_sgd_path(self):
        pts = four_point_xor_free()
        _, hist = train(MLPConfig(seed=1, epochs=50, optimizer="sgd", lr=0.1),
                        LossSpec(family="ce"), pts, pts)
        assert hist.epochs[-1]["train_loss"] < hist.epochs[0]["train_loss"]

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            train(MLPConfig(), LossSpec(family="ce"), [], four_point_xor_free())


class TestSplit:
    def test_fractions_and_disjointness(self):
        pts = generate(SyntheticConfig(kind="moons", n=100, noise=0.2, seed=6))
        tr, va, te = split_points(pts, 6)
        assert (len(tr), len(va), len(te)) == (60, 20, 20)
        ids = [id(p) for p in tr + va + te]
        assert len(set(ids)) == 100

    def test_seed_determinism(self):
        pts = generate(SyntheticConfig(kind="moons", n=50, noise=0.2, seed=7))
        a = split_points(pts, 7)
        b = split_points(pts, 7)
        for xs, ys in zip(a, b):
            assert all(p is q for p, q in zip(xs, ys))


class TestDecisionGrid:
    def test_row_count(self):
        model = init_model(MLPConfig(seed=8))
        rows = decision_grid(model, (-1.0, 1.0, -1.0, 1.0), 7)
        assert len(rows) == 49

    def test_constant_model_uniform(self):
        model = init_model(MLPConfig(seed=8))
        for w in model.weights:
            w[:] = 0.0
        rows = decision_grid(model, (0.0, 1.0, 0.0, 1.0), 3)
        for r in rows:
            assert np.allclose(r["probs"], 0.5)

    def test_degenerate_bounds(self):
        model = init_model(MLPConfig(seed=8))
        with pytest.raises(ValueError):
            decision_grid(model, (1.0, 1.0, 0.0, 1.0), 3)
        with pytest.raises(ValueError):
            decision_grid(model, (0.0, 1.0, 0.0, 1.0), 1)


class TestSweep:
    def test_row_count_and_lambda_zero_reduction(self):
        pts = generate(SyntheticConfig(kind="moons", n=80, noise=0.2, seed=9))
        cfg = MLPConfig(seed=9, epochs=10)
        rows = lambda_sweep(cfg, [2.0, 3.0], [0.0, 0.5], pts)
        assert len(rows) == 4
        # lambda=0 cell must equal a plain focal-loss training run
        tr, va, te = split_points(pts, 9)
        model_focal, _ = train(cfg, LossSpec(family="focal", gamma=2.0), tr, te)
        xt, yt, _ = points_to_arrays(te)
        from focalcal.metrics import ece
        e = ece(predictions(model_focal, xt, yt))
        row = next(r for r in rows if r["gamma"] == 2.0 and r["lambda"] == 0.0)
        assert row["pre_ece"] == e

    def test_empty_lists_rejected(self):
        with pytest.raises(ValueError):
            lambda_sweep(MLPConfig(), [], [0.5], four_point_xor_free())
