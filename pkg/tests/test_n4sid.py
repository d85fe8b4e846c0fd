"""Subspace identification: Hankel assembly, order selection, recovery."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tendonid.dataset import Dataset, TimeSeries
from tendonid.errors import DataError
from tendonid.models import markov_parameters, simulate
from tendonid.n4sid import N4sidConfig, block_hankel, estimate_order, identify_n4sid
from tendonid.plantsim import ExcitationSpec, generate_excitation, make_random_lti

DT = 0.03


def lti_dataset(seed, m=1500, kind="prbs"):
    """Noiseless IO record of a random stable LTI under broadband input."""
    model = make_random_lti(seed)
    spec = ExcitationSpec(kind=kind, duration_s=m * DT, amplitude_N=50.0,
                          seed=seed + 1000)
    exc = generate_excitation(spec, DT)
    U = exc.values[:m, :2] - spec.bias_N
    Y = simulate(model, U, init=np.zeros(model.order))
    ds = Dataset(inputs=TimeSeries(DT, U, ["u1", "u2"]),
                 outputs=TimeSeries(DT, Y, ["y1", "y2"]))
    return model, ds


class TestBlockHankel:
    def test_scalar_hand_case(self):
        H = block_hankel(np.array([[1.0], [2.0], [3.0], [4.0]]), rows=2)
        # 2 block rows leave 4 - 2*2 + 1 = 1 column
        assert H.shape == (2, 1)
        assert_allclose(H, [[1.0], [2.0]])

    def test_two_channel_layout(self):
        series = np.arange(12.0).reshape(6, 2)
        H = block_hankel(series, rows=2)
        assert H.shape == (4, 3)
        # row block k holds samples k..k+cols-1, channels stacked
        assert_allclose(H[0], series[0:3, 0])
        assert_allclose(H[1], series[0:3, 1])
        assert_allclose(H[2], series[1:4, 0])
        assert_allclose(H[3], series[1:4, 1])

    def test_too_short_rejected(self):
        with pytest.raises(DataError):
            block_hankel(np.zeros((3, 1)), rows=2)


class TestEstimateOrder:
    def test_clear_gap(self):
        s = np.array([10.0, 5.0, 1.0, 1e-9, 1e-10])
        assert estimate_order(s, 1e-6) == 3

    def test_no_gap_returns_full(self):
        s = np.array([4.0, 3.0, 2.0, 1.0])
        assert estimate_order(s, 1e-6) == 4

    def test_relative_not_absolute(self):
        # same spectrum scaled by 1e8 must yield the same order
        s = np.array([10.0, 5.0, 1e-9])
        assert estimate_order(1e8 * s, 1e-6) == estimate_order(s, 1e-6) == 2

    def test_validation(self):
        with pytest.raises(DataError):
            estimate_order(np.array([1.0, 2.0]), 1e-6)
        with pytest.raises(DataError):
            estimate_order(np.array([0.0, 0.0]), 1e-6)
        with pytest.raises(DataError):
            estimate_order(np.array([1.0, -0.5]), 1e-6)


class TestConfig:
    def test_resolved_block_rows(self):
        assert N4sidConfig().resolved_block_rows() == 20
        assert N4sidConfig(order=12).resolved_block_rows() == 24
        assert N4sidConfig(block_rows_i=15, order=8).resolved_block_rows() == 15
        assert N4sidConfig(order=None).resolved_block_rows() == 20

    def test_validation(self):
        with pytest.raises(DataError):
            N4sidConfig(order=0)
        with pytest.raises(DataError):
            N4sidConfig(block_rows_i=1)
        with pytest.raises(DataError):
            N4sidConfig(block_rows_i=5, order=8)
        with pytest.raises(DataError):
            N4sidConfig(sv_threshold=2.0)


class TestIdentify:
    def test_markov_recovery_noiseless(self):
        truth, ds = lti_dataset(seed=1)
        model = identify_n4sid(ds, N4sidConfig(order=4))
        h_true = markov_parameters(truth, 9)
        h_est = markov_parameters(model, 9)
        assert_allclose(h_est, h_true, atol=1e-7)

    def test_automatic_order_detection(self):
        _, ds = lti_dataset(seed=2)
        model = identify_n4sid(ds, N4sidConfig(order=None, sv_threshold=1e-6))
        assert model.order == 4

    def test_eigenvalue_recovery(self):
        truth, ds = lti_dataset(seed=3)
        model = identify_n4sid(ds, N4sidConfig(order=4))
        ev_true = np.sort_complex(np.linalg.eigvals(truth.A))
        ev_est = np.sort_complex(np.linalg.eigvals(model.A))
        assert_allclose(ev_est, ev_true, atol=1e-7)

    def test_free_run_fit(self):
        truth, ds = lti_dataset(seed=4)
        model = identify_n4sid(ds, N4sidConfig(order=4))
        from tendonid.models import estimate_initial_state, fit_percent

        x0 = estimate_initial_state(model, ds.inputs.values, ds.outputs.values)
        Yhat = simulate(model, ds.inputs.values, init=x0)
        rep = fit_percent(ds.outputs.values, Yhat)
        assert np.min(rep.per_channel_fit) > 99.9

    def test_not_persistently_exciting(self):
        # constant input cannot excite anything
        m = 400
        U = np.ones((m, 2))
        Y = np.cumsum(0.001 * np.ones((m, 2)), axis=0)
        ds = Dataset(inputs=TimeSeries(DT, U, ["u1", "u2"]),
                     outputs=TimeSeries(DT, Y, ["y1", "y2"]))
        with pytest.raises(DataError, match="persistently exciting"):
            identify_n4sid(ds)

    def test_too_few_samples(self):
        rng = np.random.default_rng(0)
        ds = Dataset(
            inputs=TimeSeries(DT, rng.normal(size=(50, 2)), ["u1", "u2"]),
            outputs=TimeSeries(DT, rng.normal(size=(50, 2)), ["y1", "y2"]),
        )
        with pytest.raises(DataError):
            identify_n4sid(ds, N4sidConfig(block_rows_i=20, order=4))

    def test_deterministic(self):
        _, ds = lti_dataset(seed=5, m=800)
        a = identify_n4sid(ds, N4sidConfig(order=4))
        b = identify_n4sid(ds, N4sidConfig(order=4))
        assert_allclose(a.A, b.A, rtol=0, atol=0)
        assert_allclose(a.D, b.D, rtol=0, atol=0)
