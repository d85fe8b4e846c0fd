"""Candidate-function library: ordering, evaluation, gradients.

Term.value and Term.grad walk exponents one factor at a time, so they act
as the slow interpreted oracle for the vectorized table and the generated
evaluators.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tendonid.errors import DataError
from tendonid.library import (
    LibrarySpec,
    TermTable,
    build_library,
    evaluate_terms,
    library_terms,
    term_jacobians,
)


def sample_inputs(m, n_states, n_inputs, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(m, n_states))
    U = rng.uniform(-1.5, 1.5, size=(m, n_inputs))
    return X, U


SPECS = [
    LibrarySpec(),
    LibrarySpec(poly_degree_state=3),
    LibrarySpec(include_trig=False),
    LibrarySpec(include_constant=False, include_state_input_products=False),
    LibrarySpec(poly_degree_state=4, poly_degree_input=2, include_trig=False),
]


class TestOrdering:
    def test_default_two_state_one_input(self):
        names = [t.name for t in library_terms(2, 1, LibrarySpec())]
        assert names == [
            "1", "x1", "x2", "u1",
            "x1^2", "x1*x2", "x2^2",
            "x1*u1", "x2*u1",
            "sin(x1)", "sin(x2)", "cos(x1)", "cos(x2)",
        ]

    def test_two_inputs(self):
        names = [t.name for t in library_terms(2, 2, LibrarySpec())]
        assert names == [
            "1", "x1", "x2", "u1", "u2",
            "x1^2", "x1*x2", "x2^2",
            "x1*u1", "x1*u2", "x2*u1", "x2*u2",
            "sin(x1)", "sin(x2)", "cos(x1)", "cos(x2)",
        ]

    def test_switches_prune_blocks(self):
        spec = LibrarySpec(include_constant=False, include_trig=False,
                           include_state_input_products=False)
        names = [t.name for t in library_terms(2, 1, spec)]
        assert names == ["x1", "x2", "u1", "x1^2", "x1*x2", "x2^2"]

    def test_names_unique(self):
        for spec in SPECS:
            names = [t.name for t in library_terms(3, 2, spec)]
            assert len(names) == len(set(names))


class TestEvaluation:
    @pytest.mark.parametrize("spec", SPECS)
    def test_table_matches_term_values(self, spec):
        terms = library_terms(2, 2, spec)
        table = TermTable(terms, 2, 2)
        X, U = sample_inputs(12, 2, 2, seed=5)
        Theta = table.values(X, U)
        assert Theta.shape == (12, len(terms))
        for k, t in enumerate(terms):
            for i in range(12):
                assert_allclose(Theta[i, k], t.value(X[i], U[i]),
                                rtol=1e-13, atol=1e-14)

    def test_row_matches_values(self):
        terms = library_terms(2, 1, LibrarySpec())
        table = TermTable(terms, 2, 1)
        X, U = sample_inputs(6, 2, 1, seed=9)
        Theta = table.values(X, U)
        for i in range(6):
            assert_allclose(table.row(X[i], U[i]), Theta[i],
                            rtol=1e-13, atol=1e-14)

    def test_generated_row_matches_row(self):
        terms = library_terms(2, 1, LibrarySpec(poly_degree_state=3))
        table = TermTable(terms, 2, 1)
        X, U = sample_inputs(6, 2, 1, seed=1)
        for i in range(6):
            got = np.array(table.row_fn(X[i], U[i]))
            assert_allclose(got, table.row(X[i], U[i]), rtol=1e-13, atol=0)

    def test_build_library(self):
        X, U = sample_inputs(30, 2, 1, seed=4)
        Theta, terms = build_library(X, U, LibrarySpec())
        assert Theta.shape == (30, len(terms))
        table = TermTable(terms, 2, 1)
        assert_allclose(Theta, table.values(X, U), rtol=0, atol=0)

    def test_build_library_underdetermined(self):
        X, U = sample_inputs(10, 2, 1, seed=4)
        # 13 candidate terms but only 10 samples
        with pytest.raises(DataError):
            build_library(X, U, LibrarySpec())

    def test_evaluate_terms_helper(self):
        X, U = sample_inputs(5, 2, 1, seed=8)
        terms = library_terms(2, 1, LibrarySpec())
        table = TermTable(terms, 2, 1)
        for i in range(5):
            assert_allclose(evaluate_terms(terms, X[i], U[i]),
                            table.row(X[i], U[i]), rtol=1e-13, atol=1e-14)


class TestGradients:
    @pytest.mark.parametrize("spec", SPECS)
    def test_jacobians_match_term_grad(self, spec):
        terms = library_terms(2, 2, spec)
        table = TermTable(terms, 2, 2)
        X, U = sample_inputs(9, 2, 2, seed=13)
        Gx, Gu = table.jacobians(X, U)
        assert Gx.shape == (9, len(terms), 2)
        assert Gu.shape == (9, len(terms), 2)
        for i in range(9):
            for k, t in enumerate(terms):
                gx, gu = t.grad(X[i], U[i])
                assert_allclose(Gx[i, k], gx, rtol=1e-12, atol=1e-13)
                assert_allclose(Gu[i, k], gu, rtol=1e-12, atol=1e-13)

    def test_finite_difference_cross_check(self):
        terms = library_terms(2, 1, LibrarySpec(poly_degree_state=3))
        table = TermTable(terms, 2, 1)
        x = np.array([0.4, -0.7])
        u = np.array([0.9])
        Gx, Gu = table.jacobians(x[None, :], u[None, :])
        h = 1e-6
        for i in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (table.row(xp, u) - table.row(xm, u)) / (2 * h)
            assert_allclose(Gx[0, :, i], fd, rtol=1e-5, atol=1e-7)
        up, um = u + h, u - h
        fd = (table.row(x, up) - table.row(x, um)) / (2 * h)
        assert_allclose(Gu[0, :, 0], fd, rtol=1e-5, atol=1e-7)

    def test_term_jacobians_helper(self):
        X, U = sample_inputs(5, 2, 1, seed=2)
        terms = library_terms(2, 1, LibrarySpec())
        Gx_b, Gu_b = TermTable(terms, 2, 1).jacobians(X, U)
        for i in range(5):
            Gx, Gu = term_jacobians(terms, X[i], U[i])
            assert_allclose(Gx, Gx_b[i], rtol=1e-12, atol=1e-13)
            assert_allclose(Gu, Gu_b[i], rtol=1e-12, atol=1e-13)


class TestValidation:
    def test_negative_degree_rejected(self):
        with pytest.raises(DataError):
            LibrarySpec(poly_degree_state=-1)

    def test_empty_spec_rejected(self):
        with pytest.raises(DataError):
            LibrarySpec(include_constant=False, poly_degree_state=0,
                        poly_degree_input=0,
                        include_state_input_products=False,
                        include_trig=False)
