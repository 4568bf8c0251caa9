"""网格搜索、交叉验证划分与评价指标测试"""

import logging

import numpy as np
import pytest

from core.surrogate.forest import ForestSpec
from core.surrogate.metrics import Scaler, accuracy, mae, r2
from core.surrogate.mlp import MlpSpec
from core.surrogate.search import expand_grid, grid_search, kfold_indices


# ============================================
# 交叉验证与网格
# ============================================

class TestKfold:

    @pytest.mark.parametrize("n,k", [(10, 2), (11, 3), (100, 5), (5, 5)])
    def test_partition(self, n, k):
        folds = kfold_indices(n, k, seed=0)
        assert len(folds) == k
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))
        sizes = [f.size for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_seeded(self):
        a = kfold_indices(30, 3, 1)
        b = kfold_indices(30, 3, 1)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @pytest.mark.parametrize("n,k", [(10, 1), (3, 4)])
    def test_invalid(self, n, k):
        with pytest.raises(ValueError):
            kfold_indices(n, k, 0)


class TestExpandGrid:

    def test_cartesian_order(self):
        cells = expand_grid({"a": [1, 2], "b": ["x", "y", "z"]})
        assert len(cells) == 6
        assert cells[0] == {"a": 1, "b": "x"}
        assert cells[1] == {"a": 1, "b": "y"}
        assert cells[-1] == {"a": 2, "b": "z"}

    @pytest.mark.parametrize("grid", [{}, {"a": []}])
    def test_empty(self, grid):
        with pytest.raises(ValueError):
            expand_grid(grid)


class TestGridSearch:

    def test_forest_prefers_more_trees_on_noisy_data(self):
        rng = np.random.default_rng(0)
        X = rng.random((150, 2))
        y = np.sin(3 * X[:, 0]) + rng.normal(0.0, 0.3, size=150)
        result = grid_search("rf", {"n_estimators": [1, 50]}, X, y, k_folds=3, seed=0,
                             base_spec=ForestSpec(feature_subsample=1.0))
        assert result.best_params == {"n_estimators": 50}
        assert result.best_spec.n_estimators == 50
        assert result.best_spec.feature_subsample == 1.0
        assert len(result.table) == 2
        assert all(len(row["fold_scores"]) == 3 for row in result.table)
        assert result.best_score == result.table[1]["mean"]

    def test_tie_keeps_first_cell(self):
        X = np.arange(12.0)[:, None]
        y = np.ones(12)
        result = grid_search("rf", {"max_depth": [1, 2]}, X, y, k_folds=3,
                             base_spec=ForestSpec(n_estimators=1))
        assert result.best_params == {"max_depth": 1}

    def test_mlp_classifier(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(90, 2))
        y = (X[:, 0] + X[:, 1] > 0).astype(float)
        base = MlpSpec(hidden_layers=(4,), batch_size=8, max_epochs=60, patience=60, learning_rate=0.01)
        result = grid_search("mlp_classifier", {"hidden_layers": [(4,), (8,)]}, X, y,
                             k_folds=3, seed=0, base_spec=base)
        assert result.best_score > 0.85
        assert result.best_spec.task == "classifier"

    def test_mlp_scaler_fit_on_fold_training_rows(self, monkeypatch):
        import core.surrogate.search as search
        fitted_rows = []
        original = Scaler.fit.__func__

        def recording_fit(cls, X, names=None):
            fitted_rows.append(np.asarray(X).shape[0])
            return original(cls, X, names)

        monkeypatch.setattr(search.Scaler, "fit", classmethod(recording_fit))
        rng = np.random.default_rng(3)
        X = rng.normal(50.0, 10.0, size=(30, 2))
        y = (X[:, 0] > 50.0).astype(float)
        base = MlpSpec(hidden_layers=(4,), batch_size=8, max_epochs=5, patience=5)
        grid_search("mlp_classifier", {"l2": [0.0, 1e-4]}, X, y, k_folds=3, seed=0, base_spec=base)
        assert fitted_rows == [20] * 6

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            grid_search("svm", {"c": [1]}, np.zeros((6, 1)), np.zeros(6))


# ============================================
# 指标
# ============================================

class TestScaler:

    def test_zero_mean_unit_std(self):
        X = np.random.default_rng(2).normal(5.0, 3.0, size=(100, 3))
        Z = Scaler.fit(X).transform(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1.0)

    def test_constant_feature(self, caplog):
        X = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
        with caplog.at_level(logging.WARNING):
            scaler = Scaler.fit(X, ["W12", "Ibias"])
        assert scaler.std[1] == 1.0
        assert "Ibias" in caplog.text
        np.testing.assert_allclose(scaler.transform(X)[:, 1], 0.0)

    def test_inverse_and_dict(self):
        X = np.random.default_rng(3).random((20, 2)) * 1e-6
        scaler = Scaler.fit(X)
        np.testing.assert_allclose(scaler.inverse_transform(scaler.transform(X)), X)
        restored = Scaler.from_dict(scaler.to_dict())
        np.testing.assert_array_equal(restored.transform(X), scaler.transform(X))

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            Scaler.fit(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            Scaler.fit(np.ones((3, 2))).transform(np.ones((1, 3)))


class TestMetrics:

    def test_r2(self):
        truth = np.array([1.0, 2.0, 3.0, 4.0])
        assert r2(truth, truth) == 1.0
        assert r2(np.full(4, truth.mean()), truth) == pytest.approx(0.0)
        assert r2(truth[::-1], truth) < 0

    def test_r2_constant_truth(self):
        assert r2([2.0, 2.0], [2.0, 2.0]) == 1.0
        assert r2([2.0, 3.0], [2.0, 2.0]) == 0.0

    def test_mae_and_accuracy(self):
        assert mae([1.0, -1.0], [0.0, 0.0]) == 1.0
        assert accuracy([True, False, True, True], [True, True, True, True]) == 0.75

    @pytest.mark.parametrize("pred,truth", [([1.0], [1.0, 2.0]), ([], [])])
    def test_bad_shapes(self, pred, truth):
        with pytest.raises(ValueError):
            r2(pred, truth)
