import numpy as np
import numpy.testing as npt
import pytest

from splam.errors import DimensionMismatch, SchemaError, SingularDesign
from splam.loss import LossSpec
from splam.model import (Dataset, build_bases, build_design, eval_additive,
                         load_dataset_csv, predict, predict_many,
                         preliminary_fit, residuals)


def toy_data(n=160, q=3, p=2, sigma=0.4, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, q))
    X = rng.uniform(0, 1, (n, p))
    beta = np.array([1.0, -2.0, 0.5])[:q]
    g = np.sin(2 * np.pi * X[:, 0]) + (X[:, 1] ** 2 - 1 / 3 if p > 1 else 0.0)
    y = 0.7 + Z @ beta + g + sigma * rng.standard_normal(n)
    return Dataset(y=y, Z=Z, X=X), beta


class TestDataset:
    def test_shapes_and_counts(self):
        data, _ = toy_data()
        assert (data.n, data.q, data.p) == (160, 3, 2)

    def test_empty_parts_allowed(self):
        y = np.arange(5.0)
        d = Dataset(y=y, Z=np.empty((5, 0)), X=np.arange(5.0)[:, None])
        assert d.q == 0 and d.p == 1

    def test_row_mismatch(self):
        with pytest.raises(DimensionMismatch):
            Dataset(y=np.ones(4), Z=np.ones((5, 2)), X=np.ones((4, 1)))

    def test_non_finite_rejected(self):
        y = np.ones(6)
        Z = np.ones((6, 1))
        X = np.ones((6, 1)) * 0.5
        X[2, 0] = np.nan
        with pytest.raises(SchemaError):
            Dataset(y=y, Z=Z, X=X)


class TestCsvLoader:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("resp,a,b,x1\n1.5,2,3,0.1\n2.5,4,5,0.9\n-0.5,6,7,0.4\n")
        d = load_dataset_csv(path, "resp", ["a", "b"], ["x1"])
        npt.assert_allclose(d.y, [1.5, 2.5, -0.5])
        npt.assert_allclose(d.Z[:, 1], [3, 5, 7])
        npt.assert_allclose(d.X[:, 0], [0.1, 0.9, 0.4])

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("resp,a\n1,2\n")
        with pytest.raises(SchemaError, match="not found"):
            load_dataset_csv(path, "resp", ["a", "zz"], [])

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("resp,a\n1,2\n3,oops\n")
        with pytest.raises(SchemaError, match="not numeric"):
            load_dataset_csv(path, "resp", ["a"], [])

    def test_missing_value(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("resp,a,b\n1,2,3\n4,5\n")
        with pytest.raises(SchemaError, match="missing value"):
            load_dataset_csv(path, "resp", ["a", "b"], [])

    def test_duplicate_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("resp,a,a\n1,2,3\n")
        with pytest.raises(SchemaError, match="more than once"):
            load_dataset_csv(path, "resp", ["a"], [])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            load_dataset_csv(path, "resp", [], [])


class TestDesign:
    def test_layout(self):
        data, _ = toy_data()
        bases = build_bases(data.X, 6, interval=(0.0, 1.0))
        dm = build_design(data, bases)
        assert dm.W.shape == (data.n, data.q + 2 * 5)
        assert dm.blocks[0] == slice(3, 8)
        assert dm.blocks[1] == slice(8, 13)
        npt.assert_allclose(dm.W[:, :3], data.Z)

    def test_boundary_points_are_finite(self):
        y = np.zeros(8)
        X = np.array([0.0, 1.0, 0.5, 0.2, 0.9, 0.1, 0.3, 0.7])[:, None]
        data = Dataset(y=y, Z=np.empty((8, 0)), X=X)
        dm = build_design(data, build_bases(X, 5))
        assert np.all(np.isfinite(dm.W))

    def test_basis_count_checked(self):
        data, _ = toy_data()
        with pytest.raises(DimensionMismatch):
            build_design(data, build_bases(data.X[:, :1], 5))

    def test_per_column_k(self):
        data, _ = toy_data()
        bases = build_bases(data.X, [5, 7], interval=(0.0, 1.0))
        assert [b.dim for b in bases] == [4, 6]


class TestPreliminaryFit:
    def test_squared_equals_lstsq(self):
        data, _ = toy_data(seed=3)
        bases = build_bases(data.X, 5, interval=(0.0, 1.0))
        fit = preliminary_fit(data, 5, LossSpec("squared"), bases=bases)
        W1 = np.hstack([np.ones((data.n, 1)), build_design(data, bases).W])
        oracle = np.linalg.lstsq(W1, data.y, rcond=None)[0]
        got = np.concatenate([[fit.mu], fit.beta, *fit.c_blocks])
        npt.assert_allclose(got, oracle, atol=1e-10)
        # the squared-loss pipeline carries no residual scale estimate
        assert fit.sigma == 1.0

    def test_recovers_linear_curve_noiseless(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, 80)
        y = 5 * x - 2.5
        data = Dataset(y=y, Z=np.empty((80, 0)), X=x[:, None])
        fit = preliminary_fit(data, 5, LossSpec("squared"), interval=(0.0, 1.0))
        t = np.linspace(0.05, 0.95, 101)
        npt.assert_allclose(eval_additive(fit, 0, t), 5 * t - 2.5, atol=1e-8)
        npt.assert_allclose(fit.mu, 0.0, atol=1e-8)

    def test_tukey_close_to_truth(self):
        data, beta = toy_data(n=300, seed=7)
        fit = preliminary_fit(data, 6, LossSpec("tukey"), interval=(0.0, 1.0), seed=2)
        assert np.abs(fit.beta - beta).max() < 0.15
        assert 0.15 < fit.sigma < 0.6
        assert fit.converged

    def test_tukey_resists_outliers(self):
        data, beta = toy_data(n=250, seed=11)
        y = data.y.copy()
        rng = np.random.default_rng(12)
        bad = rng.choice(250, 30, replace=False)
        y[bad] += 40.0
        poisoned = Dataset(y=y, Z=data.Z, X=data.X)
        rob = preliminary_fit(poisoned, 6, LossSpec("tukey"), interval=(0.0, 1.0), seed=2)
        ls = preliminary_fit(poisoned, 6, LossSpec("squared"), interval=(0.0, 1.0))
        assert np.abs(rob.beta - beta).max() < 0.2
        assert np.abs(rob.beta - beta).max() < 0.5 * np.abs(ls.beta - beta).max()

    def test_deterministic_given_seed(self):
        data, _ = toy_data(seed=9)
        f1 = preliminary_fit(data, 5, LossSpec("tukey"), interval=(0.0, 1.0), seed=4)
        f2 = preliminary_fit(data, 5, LossSpec("tukey"), interval=(0.0, 1.0), seed=4)
        npt.assert_array_equal(f1.beta, f2.beta)
        assert f1.sigma == f2.sigma

    def test_identifiability_guard(self):
        data, _ = toy_data(n=40)
        # m = 1 + 3 + 2*9 = 22 > 40/2
        with pytest.raises(SingularDesign):
            preliminary_fit(data, 10, LossSpec("squared"))


@pytest.fixture(scope="module")
def fit_and_data():
    data, _ = toy_data(seed=21)
    fit = preliminary_fit(data, 6, LossSpec("squared"), interval=(0.0, 1.0))
    return fit, data


class TestFitInterface:

    def test_residual_identity(self, fit_and_data):
        fit, data = fit_and_data
        r = residuals(fit, data)
        manual = data.y - predict_many(fit, data.Z, data.X)
        npt.assert_allclose(r, manual, atol=0)

    def test_predict_scalar_matches_vector(self, fit_and_data):
        fit, data = fit_and_data
        i = 7
        got = predict(fit, data.Z[i], data.X[i])
        npt.assert_allclose(got, predict_many(fit, data.Z, data.X)[i], rtol=1e-12)

    def test_inactive_block_evaluates_to_zero(self, fit_and_data):
        fit, _ = fit_and_data
        fit2 = type(fit)(**{**fit.__dict__})
        fit2.c_blocks = [fit.c_blocks[0], np.zeros_like(fit.c_blocks[1])]
        t = np.linspace(0, 1, 9)
        npt.assert_array_equal(eval_additive(fit2, 1, t), np.zeros(9))

    def test_curves_integrate_to_zero(self, fit_and_data):
        fit, _ = fit_and_data
        t = np.linspace(1 / 400_000, 1 - 1 / 400_000, 200_000)
        for j in range(fit.p):
            vals = eval_additive(fit, j, t)
            assert abs(np.mean(vals)) < 1e-5

    def test_out_of_range_prediction_clamps(self, fit_and_data):
        fit, data = fit_and_data
        z = data.Z[0]
        lo = predict(fit, z, np.array([-5.0, 0.5]))
        at0 = predict(fit, z, np.array([0.0, 0.5]))
        npt.assert_allclose(lo, at0, rtol=1e-12)

    def test_dimension_checks(self, fit_and_data):
        fit, data = fit_and_data
        with pytest.raises(DimensionMismatch):
            predict_many(fit, data.Z[:, :2], data.X)
        with pytest.raises(DimensionMismatch):
            eval_additive(fit, 5, np.linspace(0, 1, 4))
