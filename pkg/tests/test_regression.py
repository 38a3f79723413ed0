import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from povmap import regression as reg
from povmap.errors import InputError
from oracles import ridge_raw_space


def system(seed, n=50, d=8, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 20, size=d) + rng.normal(size=d) * 5
    y = X @ rng.normal(size=d) + 3.0 + noise * rng.normal(size=n)
    return X, y


class TestRidge:
    def test_exact_line(self):
        x = np.arange(10.0)
        m = reg.ridge_fit(x[:, None], 2 * x, 0.0)
        assert np.allclose(reg.predict(m, x[:, None]), 2 * x, atol=1e-12)
        # standardized weight = slope * population std
        assert m.weights[0] == pytest.approx(2 * x.std())

    def test_huge_lambda_shrinks_to_mean(self):
        X, y = system(0)
        m = reg.ridge_fit(X, y, 1e12)
        assert np.abs(m.weights).max() < 1e-8
        assert m.intercept == pytest.approx(y.mean())

    @pytest.mark.parametrize("lam", [0.0, 0.1, 10.0])
    def test_matches_oracle(self, lam):
        for seed in range(5):
            X, y = system(seed)
            w, b = ridge_raw_space(X, y, lam)
            m = reg.ridge_fit(X, y, lam)
            assert np.abs(m.weights - w).max() < 1e-8
            assert m.intercept == pytest.approx(b, abs=1e-8)

    def test_lambda_zero_is_ols(self):
        X, y = system(3)
        A = np.hstack([np.ones((50, 1)), X])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        m = reg.ridge_fit(X, y, 0.0)
        assert np.allclose(reg.predict(m, X), A @ coef, atol=1e-9)

    def test_weight_norm_non_increasing(self):
        X, y = system(4)
        norms = [np.linalg.norm(reg.ridge_fit(X, y, lam).weights)
                 for lam in np.logspace(-3, 4, 15)]
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 7), st.floats(1e-3, 1e3))
    def test_column_scale_invariance(self, col, scale):
        X, y = system(5)
        Xs = X.copy()
        Xs[:, col] *= scale
        a, b = reg.ridge_fit(X, y, 1.0), reg.ridge_fit(Xs, y, 1.0)
        assert np.allclose(a.weights, b.weights, atol=1e-8)

    def test_standardized_design_unchanged_by_rescaling(self):
        X, _ = system(13)
        Xs = X.copy()
        Xs[:, 4] *= 10.0
        za = (X - X.mean(axis=0)) / reg.standardization(X)[1]
        zb = (Xs - Xs.mean(axis=0)) / reg.standardization(Xs)[1]
        assert np.allclose(za, zb, rtol=0, atol=1e-12)

    def test_zero_weights_predict_intercept(self):
        m = reg.RidgeModel(np.zeros(3), 0.7, 1.0, np.zeros(3), np.ones(3))
        assert reg.predict(m, np.random.default_rng(0).normal(size=(4, 3))).tolist() == [0.7] * 4

    def test_constant_column_zero_weight(self):
        X, y = system(6)
        X[:, 2] = 7.0
        m = reg.ridge_fit(X, y, 0.5)
        assert m.weights[2] == 0.0 and m.column_stds[2] == 1.0
        assert np.isfinite(reg.predict(m, X)).all()

    def test_collinear_needs_lambda(self):
        X, y = system(7)
        X[:, 1] = 2 * X[:, 0]
        with pytest.raises(InputError):
            reg.ridge_fit(X, y, 0.0)
        assert np.isfinite(reg.ridge_fit(X, y, 0.1).weights).all()

    @pytest.mark.parametrize("X, y, lam", [
        (np.ones((1, 2)), [1.0], 1.0),
        (np.ones((3, 2)), [1.0, 2.0], 1.0),
        (np.ones((3, 2)), [1.0, 2.0, np.nan], 1.0),
        (np.ones((3, 2)), [1.0, 2.0, 3.0], -1.0),
    ])
    def test_input_errors(self, X, y, lam):
        with pytest.raises(InputError):
            reg.ridge_fit(X, y, lam)

    def test_predict_width_mismatch(self):
        X, y = system(8)
        with pytest.raises(InputError):
            reg.predict(reg.ridge_fit(X, y, 1.0), X[:, :3])

    def test_model_round_trip(self):
        X, y = system(9)
        m = reg.ridge_fit(X, y, 0.3)
        back = reg.read_model(reg.write_model(m))
        assert np.array_equal(reg.predict(back, X), reg.predict(m, X))


class TestMetrics:
    def test_perfect(self):
        assert reg.r_squared([1, 2, 3], [1, 2, 3]) == 1.0
        assert reg.rmse([1, 2, 3], [1, 2, 3]) == 0.0

    def test_mean_prediction(self):
        assert reg.r_squared([1, 2, 3], [2, 2, 2]) == 0.0

    def test_worse_than_mean(self):
        assert reg.r_squared([1, 2, 3], [3, 2, 1]) == -3.0

    def test_rmse_value(self):
        assert reg.rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))

    def test_rmse_constant_offset(self):
        assert reg.rmse([1.0, 5.0, -2.0], [3.5, 7.5, 0.5]) == pytest.approx(2.5)

    def test_constant_target(self):
        with pytest.raises(InputError):
            reg.r_squared([2, 2, 2], [1, 2, 3])


class TestCV:
    def test_folds_partition(self):
        folds = reg.kfold_indices(23, 5, seed=1)
        assert sorted(np.concatenate(folds).tolist()) == list(range(23))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_fold_errors(self):
        with pytest.raises(InputError):
            reg.kfold_indices(3, 5)
        with pytest.raises(InputError):
            reg.kfold_indices(10, 1)

    def test_noiseless_linear(self):
        X, _ = system(10, n=100, d=4)
        y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + 1.0
        res = reg.kfold_cv(X, y, k=5, seed=0)
        assert res.mean_r2 >= 0.999
        assert res.best_lambda == min(res.lambda_grid)

    def test_deterministic(self):
        X, y = system(11, n=60, noise=5.0)
        a = reg.kfold_cv(X, y, k=5, seed=3)
        b = reg.kfold_cv(X, y, k=5, seed=3)
        assert a.summary_lines() == b.summary_lines()

    def test_tie_prefers_smaller_lambda(self):
        # a constant design gives the same fit for every lambda
        X = np.ones((40, 2))
        y = np.tile([0.0, 1.0], 20)
        res = reg.kfold_cv(X, y, k=4, lambda_grid=[10.0, 1.0, 5.0], seed=0)
        assert res.best_lambda == 1.0
