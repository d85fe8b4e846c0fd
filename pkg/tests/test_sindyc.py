"""Sequential thresholded least squares and sparse model identification."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tendonid.dataset import Dataset, TimeSeries
from tendonid.errors import DataError
from tendonid.library import LibrarySpec, build_library
from tendonid.models import fit_percent, simulate
from tendonid.plantsim import make_sparse_nonlinear_truth
from tendonid.sindyc import identify_sindyc, stls

DT = 0.03


def sparse_problem(seed, m=200, T=12, q=2, n_active=4, scale=1.0):
    """Random regression with a known sparse coefficient matrix."""
    rng = np.random.default_rng(seed)
    Theta = rng.normal(size=(m, T))
    Xi = np.zeros((T, q))
    for c in range(q):
        rows = rng.choice(T, size=n_active, replace=False)
        Xi[rows, c] = scale * rng.uniform(0.5, 1.5, size=n_active) \
            * rng.choice([-1.0, 1.0], size=n_active)
    return Theta, Theta @ Xi, Xi


def truth_dataset(seed, m=800, noise=0.0):
    model = make_sparse_nonlinear_truth(seed)
    rng = np.random.default_rng(seed + 500)
    U = rng.uniform(-1.0, 1.0, size=(m, 1))
    Y = simulate(model, U, init=np.zeros(2))
    if noise > 0.0:
        Y = Y + noise * np.std(Y, axis=0) * rng.standard_normal(Y.shape)
    ds = Dataset(inputs=TimeSeries(DT, U, ["u1"]),
                 outputs=TimeSeries(DT, Y, ["y1", "y2"]))
    return model, ds


class TestStls:
    def test_zero_threshold_is_least_squares(self):
        Theta, Xp, _ = sparse_problem(seed=0)
        Xi = stls(Theta, Xp, threshold=0.0)
        ref, *_ = np.linalg.lstsq(Theta, Xp, rcond=None)
        assert_allclose(Xi, ref, rtol=1e-10, atol=1e-12)

    def test_exact_support_recovery(self):
        for seed in range(6):
            Theta, Xp, Xi_true = sparse_problem(seed=seed)
            Xi = stls(Theta, Xp, threshold=0.1)
            assert np.array_equal(Xi != 0.0, Xi_true != 0.0)
            assert_allclose(Xi, Xi_true, rtol=1e-10, atol=1e-12)

    def test_zeros_are_exact_and_survivors_clear_threshold(self):
        Theta, Xp, _ = sparse_problem(seed=3)
        lam = 0.25
        Xi = stls(Theta, Xp, threshold=lam)
        dead = Xi[Xi == 0.0]
        alive = Xi[Xi != 0.0]
        assert dead.size + alive.size == Xi.size
        assert np.all(np.abs(alive) >= lam)

    def test_sparsity_monotone_in_threshold(self):
        import warnings

        Theta, Xp, _ = sparse_problem(seed=5, scale=1.0)
        counts = []
        with warnings.catch_warnings():
            # the largest threshold may legitimately empty a column
            warnings.simplefilter("ignore", UserWarning)
            for lam in (0.0, 0.05, 0.3, 0.8, 2.0):
                counts.append(np.count_nonzero(stls(Theta, Xp, lam)))
        assert counts == sorted(counts, reverse=True)

    def test_duplicate_columns_warn_and_zero(self):
        rng = np.random.default_rng(7)
        base = rng.normal(size=(100, 5))
        Theta = np.hstack([base, base[:, :1]])     # column 6 repeats column 1
        Xi_true = np.array([1.0, 0.0, -2.0, 0.0, 0.5, 0.0])
        Xp = Theta @ Xi_true
        with pytest.warns(UserWarning, match="linearly dependent"):
            Xi = stls(Theta, Xp, threshold=0.0)
        # the pivoted solve keeps one representative of the pair exactly
        assert np.count_nonzero(Xi[[0, 5], 0]) == 1
        assert_allclose(Theta @ Xi[:, 0], Xp, atol=1e-10)

    def test_everything_thresholded_warns(self):
        Theta, Xp, _ = sparse_problem(seed=9, scale=1e-4)
        with pytest.warns(UserWarning, match="below the threshold"):
            Xi = stls(Theta, Xp, threshold=10.0)
        assert np.count_nonzero(Xi) == 0

    def test_underdetermined_rejected(self):
        with pytest.raises(DataError):
            stls(np.zeros((5, 8)), np.zeros(5), 0.1)

    def test_negative_threshold_rejected(self):
        with pytest.raises(DataError):
            stls(np.zeros((10, 2)), np.zeros(10), -0.1)


class TestIdentify:
    def test_noiseless_exact_recovery(self):
        for seed in (0, 1, 2):
            truth, ds = truth_dataset(seed)
            model = identify_sindyc(ds, threshold=0.01)
            assert np.array_equal(model.coefficients != 0.0,
                                  truth.coefficients != 0.0)
            assert_allclose(model.coefficients, truth.coefficients,
                            rtol=0, atol=1e-8)

    def test_threshold_lives_in_normalized_units(self):
        # recovery must not depend on column scaling of the raw library;
        # a term with small raw magnitude but real predictive power
        # survives because its normalized coefficient is large
        truth, ds = truth_dataset(3)
        model = identify_sindyc(ds, threshold=0.01)
        small = np.abs(model.coefficients[model.coefficients != 0.0]).min()
        assert small < 0.6     # raw coefficients can sit below any raw lam

    def test_noisy_validation_fit(self):
        truth, ds = truth_dataset(4, m=1200, noise=0.01)
        model = identify_sindyc(ds, threshold=0.0035)
        _, val = truth_dataset(104, m=400)
        # fresh noiseless data from the same truth, simulated by both
        Ytrue = simulate(truth, val.inputs.values, init=np.zeros(2))
        Yhat = simulate(model, val.inputs.values, init=np.zeros(2))
        assert fit_percent(Ytrue, Yhat).mean_fit > 90.0

    def test_zero_threshold_dense_model(self):
        _, ds = truth_dataset(5, m=300)
        model = identify_sindyc(ds, threshold=0.0)
        X = ds.outputs.values[:-1]
        Xp = ds.outputs.values[1:]
        Theta, _ = build_library(X, ds.inputs.values[:-1], LibrarySpec())
        assert_allclose(Theta @ model.coefficients, Xp, atol=1e-8)

    def test_too_short_record(self):
        _, ds = truth_dataset(6, m=10)
        with pytest.raises(DataError):
            identify_sindyc(ds)
