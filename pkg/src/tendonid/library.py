"""Candidate-function library for sparse dynamics regression.

Columns follow a fixed canonical order so coefficient matrices are portable:

    1. constant
    2. linear states x1..xq
    3. input monomials u1..up, then higher input powers (graded-lex)
    4. state monomials of degree 2..poly_degree_state (graded-lex)
    5. state*input products xi*uj (state-major)
    6. trig: sin(x1)..sin(xq), cos(x1)..cos(xq)

Each column carries a human-readable descriptor ("x1*u3", "sin(x2)", ...),
and every term knows its own gradient so predictive controllers can
linearize the learned map analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LibrarySpec:
    include_constant: bool = True
    poly_degree_state: int = 2
    poly_degree_input: int = 1
    include_state_input_products: bool = True
    include_trig: bool = True

    def __post_init__(self):
        if (not self.include_constant and self.poly_degree_state < 1
                and self.poly_degree_input < 1 and not self.include_trig
                and not self.include_state_input_products):
            raise DataError("library spec enables no term class")
        if self.poly_degree_state < 0 or self.poly_degree_input < 0:
            raise DataError("polynomial degrees must be nonnegative")


@dataclass(frozen=True)
class Term:
    """One library column: a monomial in (x, u) or a trig function of one state.

    state_exponents / input_exponents are per-variable powers; trig is None
    or ("sin"|"cos", state_index).
    """

    state_exponents: tuple[int, ...] = ()
    input_exponents: tuple[int, ...] = ()
    trig: tuple[str, int] | None = None

    @property
    def name(self) -> str:
        if self.trig is not None:
            f, i = self.trig
            return f"{f}(x{i + 1})"
        factors = []
        for i, e in enumerate(self.state_exponents):
            if e == 1:
                factors.append(f"x{i + 1}")
            elif e > 1:
                factors.append(f"x{i + 1}^{e}")
        for j, e in enumerate(self.input_exponents):
            if e == 1:
                factors.append(f"u{j + 1}")
            elif e > 1:
                factors.append(f"u{j + 1}^{e}")
        return "*".join(factors) if factors else "1"

    def column(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Evaluate the term on stacked samples (rows)."""
        if self.trig is not None:
            f, i = self.trig
            return np.sin(X[:, i]) if f == "sin" else np.cos(X[:, i])
        col = np.ones(X.shape[0])
        for i, e in enumerate(self.state_exponents):
            if e:
                col = col * X[:, i] ** e
        for j, e in enumerate(self.input_exponents):
            if e:
                col = col * U[:, j] ** e
        return col

    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        if self.trig is not None:
            f, i = self.trig
            return float(np.sin(x[i]) if f == "sin" else np.cos(x[i]))
        v = 1.0
        for i, e in enumerate(self.state_exponents):
            if e:
                v *= x[i] ** e
        for j, e in enumerate(self.input_exponents):
            if e:
                v *= u[j] ** e
        return v

    def grad(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(d/dx, d/du) of the term at one point."""
        gx = np.zeros(len(x))
        gu = np.zeros(len(u))
        if self.trig is not None:
            f, i = self.trig
            gx[i] = np.cos(x[i]) if f == "sin" else -np.sin(x[i])
            return gx, gu
        for i, e in enumerate(self.state_exponents):
            if e:
                partial = e * x[i] ** (e - 1)
                for ii, ee in enumerate(self.state_exponents):
                    if ee and ii != i:
                        partial *= x[ii] ** ee
                for jj, ee in enumerate(self.input_exponents):
                    if ee:
                        partial *= u[jj] ** ee
                gx[i] = partial
        for j, e in enumerate(self.input_exponents):
            if e:
                partial = e * u[j] ** (e - 1)
                for ii, ee in enumerate(self.state_exponents):
                    if ee:
                        partial *= x[ii] ** ee
                for jj, ee in enumerate(self.input_exponents):
                    if ee and jj != j:
                        partial *= u[jj] ** ee
                gu[j] = partial
        return gx, gu


def _monomials(n_vars: int, degrees: range) -> list[tuple[int, ...]]:
    """Exponent tuples in graded-lex order for the requested degrees."""
    out = []
    for deg in degrees:
        for combo in combinations_with_replacement(range(n_vars), deg):
            exps = [0] * n_vars
            for i in combo:
                exps[i] += 1
            out.append(tuple(exps))
    return out


def library_terms(n_states: int, n_inputs: int, spec: LibrarySpec) -> list[Term]:
    """The ordered term list for given dimensions."""
    zx = (0,) * n_states
    zu = (0,) * n_inputs
    terms: list[Term] = []
    if spec.include_constant:
        terms.append(Term(zx, zu))
    if spec.poly_degree_state >= 1:
        for exps in _monomials(n_states, range(1, 2)):
            terms.append(Term(exps, zu))
    if spec.poly_degree_input >= 1 and n_inputs > 0:
        for exps in _monomials(n_inputs, range(1, spec.poly_degree_input + 1)):
            terms.append(Term(zx, exps))
    if spec.poly_degree_state >= 2:
        for exps in _monomials(n_states, range(2, spec.poly_degree_state + 1)):
            terms.append(Term(exps, zu))
    if spec.include_state_input_products and n_inputs > 0:
        for i in range(n_states):
            for j in range(n_inputs):
                sx = list(zx)
                su = list(zu)
                sx[i] = 1
                su[j] = 1
                terms.append(Term(tuple(sx), tuple(su)))
    if spec.include_trig:
        for i in range(n_states):
            terms.append(Term(zx, zu, ("sin", i)))
        for i in range(n_states):
            terms.append(Term(zx, zu, ("cos", i)))
    if not terms:
        raise DataError("library spec produced no terms")
    return terms


def build_library(X: np.ndarray, U: np.ndarray, spec: LibrarySpec
                  ) -> tuple[np.ndarray, list[Term]]:
    """Evaluate the library on stacked samples.

    X is (m, q) states, U is (m, p) inputs (p may be 0). Returns the
    (m, T) matrix and the term descriptors, T < m required.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        U = np.zeros((X.shape[0], 0))
    U = np.atleast_2d(U)
    if X.shape[0] != U.shape[0]:
        raise DataError(f"X and U row counts differ: {X.shape[0]} vs {U.shape[0]}")
    terms = library_terms(X.shape[1], U.shape[1], spec)
    if len(terms) >= X.shape[0]:
        raise DataError(
            f"library has {len(terms)} terms but only {X.shape[0]} samples; "
            "regression would be underdetermined"
        )
    Theta = np.column_stack([t.column(X, U) for t in terms])
    return Theta, terms


def evaluate_terms(terms: list[Term], x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Single-sample library row."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([t.value(x, u) for t in terms])


def term_jacobians(terms: list[Term], x: np.ndarray, u: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Stacked gradients of all terms at one point: (T, q) and (T, p)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    gx = np.zeros((len(terms), len(x)))
    gu = np.zeros((len(terms), len(u)))
    for k, t in enumerate(terms):
        gx[k], gu[k] = t.grad(x, u)
    return gx, gu


def _compile_row(terms: list[Term], n_states: int, n_inputs: int):
    """Generate a closed-form single-sample evaluator for a term list.

    Sequential rollouts evaluate the library one sample at a time, where
    numpy call overhead dominates; a generated scalar expression is an
    order of magnitude faster. Source is assembled from integer
    exponents and trig tags only. Low powers are spelled as repeated
    products, which may differ from the vectorized pow by one ulp.
    """
    loads = [f"    x{i} = x[{i}]" for i in range(n_states)]
    loads += [f"    u{j} = u[{j}]" for j in range(n_inputs)]
    exprs = []
    for t in terms:
        if t.trig is not None:
            kind, i = t.trig
            exprs.append(f"{kind}(x{i})")
            continue
        factors = []
        for i, e in enumerate(t.state_exponents):
            if e > 3:
                factors.append(f"x{i}**{int(e)}")
            else:
                factors.extend([f"x{i}"] * int(e))
        for j, e in enumerate(t.input_exponents):
            if e > 3:
                factors.append(f"u{j}**{int(e)}")
            else:
                factors.extend([f"u{j}"] * int(e))
        exprs.append("*".join(factors) if factors else "1.0")
    body = ",\n            ".join(exprs)
    src = ("def _row(x, u):\n" + "\n".join(loads)
           + f"\n    return ({body},)\n")
    namespace = {"sin": math.sin, "cos": math.cos}
    exec(src, namespace)
    return namespace["_row"]


def _compile_jacobians(terms: list[Term], n_states: int, n_inputs: int):
    """Generate a batch gradient evaluator, one line per nonzero partial.

    The broadcast formulation pays several dense power products over
    (samples, terms, variables) per call; most partials are zero, so
    spelling out the remainder keeps the per-step linearization inside
    nonlinear MPC cheap. Same repeated-product convention as
    _compile_row.
    """
    loads = [f"    x{i} = X[:, {i}]" for i in range(n_states)]
    loads += [f"    u{j} = U[:, {j}]" for j in range(n_inputs)]

    def powers(name: str, e: int) -> list[str]:
        if e > 3:
            return [f"{name}**{e}"]
        return [name] * e

    def partial(t: Term, wrt: int, of_input: bool) -> str:
        e_wrt = (t.input_exponents if of_input else t.state_exponents)[wrt]
        factors = []
        for i, e in enumerate(t.state_exponents):
            keep = e - 1 if (not of_input and i == wrt) else e
            factors += powers(f"x{i}", keep)
        for j, e in enumerate(t.input_exponents):
            keep = e - 1 if (of_input and j == wrt) else e
            factors += powers(f"u{j}", keep)
        expr = "*".join(factors)
        if e_wrt != 1:
            expr = f"{float(e_wrt)!r}*{expr}" if expr else f"{float(e_wrt)!r}"
        return expr if expr else "1.0"

    lines = []
    for k, t in enumerate(terms):
        if t.trig is not None:
            kind, i = t.trig
            rhs = f"cos(x{i})" if kind == "sin" else f"-sin(x{i})"
            lines.append(f"    gx[:, {k}, {i}] = {rhs}")
            continue
        for i, e in enumerate(t.state_exponents):
            if e:
                lines.append(f"    gx[:, {k}, {i}] = {partial(t, i, False)}")
        for j, e in enumerate(t.input_exponents):
            if e:
                lines.append(f"    gu[:, {k}, {j}] = {partial(t, j, True)}")
    src = ("def _jac(X, U):\n"
           "    m = X.shape[0]\n"
           f"    gx = zeros((m, {len(terms)}, {n_states}))\n"
           f"    gu = zeros((m, {len(terms)}, {n_inputs}))\n"
           + "\n".join(loads + lines) + "\n    return gx, gu\n")
    namespace = {"zeros": np.zeros, "sin": np.sin, "cos": np.cos}
    exec(src, namespace)
    return namespace["_jac"]


class TermTable:
    """Exponent arrays compiled from a term list for batch evaluation.

    Produces the same numbers as Term.value / Term.grad; the per-term
    Python loop is hoisted out of hot paths (simulation rollouts, the
    linearization inside nonlinear MPC). Trig rows have all-zero
    exponents, so the monomial product for them is 1 (overwritten) and
    the monomial gradient is 0 (patched with the analytic derivative).
    """

    def __init__(self, terms: list[Term], n_states: int, n_inputs: int):
        self.terms = terms
        n_terms = len(terms)
        self.Ex = np.array([t.state_exponents for t in terms],
                           dtype=float).reshape(n_terms, n_states)
        self.Eu = np.array([t.input_exponents for t in terms],
                           dtype=float).reshape(n_terms, n_inputs)
        self.trig_kind = np.zeros(n_terms, dtype=int)
        self.trig_idx = np.zeros(n_terms, dtype=int)
        for k, t in enumerate(terms):
            if t.trig is not None:
                self.trig_kind[k] = 1 if t.trig[0] == "sin" else 2
                self.trig_idx[k] = t.trig[1]
        # compiled evaluators; row_fn returns a tuple and is also usable
        # directly when even the np.array wrapper matters
        self.row_fn = _compile_row(terms, n_states, n_inputs)
        self.jac_fn = _compile_jacobians(terms, n_states, n_inputs)

    def row(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Single-sample library row (fast path for sequential rollouts)."""
        return np.array(self.row_fn(x, u))

    def values(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """(m, T) library matrix for stacked samples."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        out = (np.prod(X[:, None, :] ** self.Ex[None], axis=2)
               * np.prod(U[:, None, :] ** self.Eu[None], axis=2))
        sin_rows = self.trig_kind == 1
        cos_rows = self.trig_kind == 2
        if sin_rows.any():
            out[:, sin_rows] = np.sin(X[:, self.trig_idx[sin_rows]])
        if cos_rows.any():
            out[:, cos_rows] = np.cos(X[:, self.trig_idx[cos_rows]])
        return out

    def jacobians(self, X: np.ndarray, U: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of every term at every sample: (m, T, q), (m, T, p)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return self.jac_fn(X, U)
