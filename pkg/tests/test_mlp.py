"""MLP 前向、反向传播与训练测试"""

import numpy as np
import pytest

from core.surrogate.metrics import r2
from core.surrogate.mlp import (
    MlpSpec, fit_mlp, init_mlp, loss_and_gradients, mlp_arrays, mlp_from_arrays, predict_mlp,
)

XOR_X = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
XOR_Y = np.array([0.0, 1.0, 1.0, 0.0])


def _numeric_gradient(model, X, y, param, eps=1e-6):
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        old = param[idx]
        param[idx] = old + eps
        plus, _, _ = loss_and_gradients(model, X, y)
        param[idx] = old - eps
        minus, _, _ = loss_and_gradients(model, X, y)
        param[idx] = old
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


# ============================================
# 梯度
# ============================================

class TestGradients:

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        n_features = int(rng.integers(2, 5))
        hidden = tuple(int(h) for h in rng.integers(2, 6, size=int(rng.integers(1, 3))))
        task = "classifier" if seed % 2 == 0 else "regressor"
        spec = MlpSpec(hidden_layers=hidden, task=task, l2=1e-2)
        model = init_mlp(spec, n_features, seed)
        for b in model.biases:
            b += rng.normal(0.0, 0.1, size=b.shape)
        X = rng.normal(size=(12, n_features))
        y = (rng.random(12) > 0.5).astype(float) if task == "classifier" else rng.normal(size=12)

        _, grad_w, grad_b = loss_and_gradients(model, X, y)
        analytic = np.concatenate([g.ravel() for g in grad_w + grad_b])
        numeric = np.concatenate([_numeric_gradient(model, X, y, p).ravel()
                                  for p in model.weights + model.biases])
        rel = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(numeric) + np.linalg.norm(analytic), 1e-12)
        assert rel < 1e-4

    def test_l2_term_in_loss(self):
        spec = MlpSpec(hidden_layers=(3,), task="regressor", l2=0.0)
        model = init_mlp(spec, 2, 0)
        X = np.ones((4, 2))
        y = np.zeros(4)
        plain, _, _ = loss_and_gradients(model, X, y)
        model.spec = MlpSpec(hidden_layers=(3,), task="regressor", l2=0.5)
        penalized, _, _ = loss_and_gradients(model, X, y)
        expected = 0.5 / 8 * sum(float(np.sum(W * W)) for W in model.weights)
        assert penalized - plain == pytest.approx(expected)


# ============================================
# 训练
# ============================================

class TestTraining:

    def test_learns_xor(self):
        spec = MlpSpec(hidden_layers=(8,), task="classifier", learning_rate=0.01, batch_size=4,
                       max_epochs=2000, patience=2000, l2=0.0, validation_fraction=0.0)
        solved = []
        for seed in range(5):
            model = fit_mlp(spec, XOR_X, XOR_Y, seed)
            solved.append(bool(np.all((predict_mlp(model, XOR_X) >= 0.5) == XOR_Y.astype(bool))))
        assert any(solved)

    def test_constant_labels(self):
        X = np.random.default_rng(0).normal(size=(40, 3))
        spec = MlpSpec(hidden_layers=(4,), task="classifier", learning_rate=0.01, batch_size=8,
                       max_epochs=100, patience=100, validation_fraction=0.0)
        model = fit_mlp(spec, X, np.ones(40), seed=1)
        assert np.all(predict_mlp(model, X) >= 0.5)

    def test_constant_regression_target(self):
        X = np.random.default_rng(0).normal(size=(40, 3))
        spec = MlpSpec(hidden_layers=(4,), task="regressor", learning_rate=0.01, batch_size=8,
                       max_epochs=100, patience=100, validation_fraction=0.0)
        model = fit_mlp(spec, X, np.full(40, 3.0), seed=1)
        assert model.target_mean == 3.0 and model.target_std == 1.0
        assert np.all(np.abs(predict_mlp(model, X) - 3.0) < 0.2)

    def test_linear_regression(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 2))
        y = 50.0 + 20.0 * X[:, 0] - 10.0 * X[:, 1]
        spec = MlpSpec(hidden_layers=(16,), task="regressor", learning_rate=0.01, batch_size=32,
                       max_epochs=300, patience=30)
        model = fit_mlp(spec, X[:240], y[:240], seed=0)
        assert r2(predict_mlp(model, X[240:]), y[240:]) > 0.9

    def test_history_and_determinism(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 2))
        y = (X[:, 0] > 0).astype(float)
        spec = MlpSpec(hidden_layers=(4,), max_epochs=15, patience=15)
        a = fit_mlp(spec, X, y, seed=7)
        b = fit_mlp(spec, X, y, seed=7)
        assert len(a.history) == a.epochs_trained == 15
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_early_stopping_keeps_best(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        spec = MlpSpec(hidden_layers=(32, 32), task="regressor", learning_rate=0.05,
                       max_epochs=400, patience=5, validation_fraction=0.2)
        model = fit_mlp(spec, X, y, seed=0)
        assert model.epochs_trained < 400
        assert len(model.history) == model.epochs_trained


class TestValidation:

    @pytest.mark.parametrize("kwargs", [
        {"hidden_layers": ()},
        {"hidden_layers": (4, 0)},
        {"task": "ranking"},
        {"learning_rate": 0.0},
        {"batch_size": 0},
        {"validation_fraction": 1.0},
        {"l2": -1.0},
    ])
    def test_bad_spec(self, kwargs):
        with pytest.raises(ValueError):
            MlpSpec(**kwargs)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fit_mlp(MlpSpec(hidden_layers=(2,)), np.zeros((5, 2)), np.zeros(4))

    def test_nan_rejected(self):
        X = np.zeros((5, 2))
        X[2, 1] = np.nan
        with pytest.raises(ValueError):
            fit_mlp(MlpSpec(hidden_layers=(2,), task="regressor"), X, np.zeros(5))

    def test_classifier_labels(self):
        with pytest.raises(ValueError):
            fit_mlp(MlpSpec(hidden_layers=(2,)), np.zeros((3, 2)), np.array([0.0, 1.0, 2.0]))

    def test_predict_dimension(self):
        model = init_mlp(MlpSpec(hidden_layers=(2,)), 3, 0)
        with pytest.raises(ValueError):
            predict_mlp(model, np.zeros((1, 2)))


def test_arrays_round_trip():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 3))
    spec = MlpSpec(hidden_layers=(5, 3), task="regressor", max_epochs=5)
    model = fit_mlp(spec, X, X.sum(axis=1) * 1e3, seed=0)
    restored = mlp_from_arrays(spec, mlp_arrays(model), model.epochs_trained)
    assert np.array_equal(predict_mlp(restored, X), predict_mlp(model, X))
    assert MlpSpec.from_dict(spec.to_dict()) == spec
