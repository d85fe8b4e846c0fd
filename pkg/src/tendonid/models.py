"""Discrete-time model abstraction shared by all identification methods.

Three variants, one simulate() entry point:

  * StateSpaceModel  x+ = A x + B u,  y = C x + D u
  * ArxModel         y_t = -sum_i a_i y_{t-i} + sum_j b_j u_{t-nk-j+1}
  * SindyModel       x+ = Xi^T theta(x, u),  y = x

Simulation is always free-run (the model's own outputs are fed back,
measured data only seeds the initial condition), which is the honest way
to score a model that will later sit inside a predictive controller.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dataset import TimeSeries
from .errors import DataError, DivergenceError
from .library import LibrarySpec, Term, TermTable, library_terms

MODEL_FORMAT = "tendonid-model-v1"

# Free-run values beyond this magnitude abort with DivergenceError.
DIVERGENCE_LIMIT = 1e6


def _finite_matrix(M, name: str, shape=None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if shape is not None and M.shape != shape:
        raise DataError(f"{name} has shape {M.shape}, expected {shape}")
    if M.size and not np.all(np.isfinite(M)):
        raise DataError(f"{name} contains non-finite entries")
    return M


@dataclass
class StateSpaceModel:
    """x_{k+1} = A x_k + B u_k, y_k = C x_k + D u_k."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sample_time_s: float

    def __post_init__(self):
        self.A = _finite_matrix(self.A, "A")
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise DataError(f"A must be square, got {self.A.shape}")
        n = self.A.shape[0]
        self.B = _finite_matrix(self.B, "B")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise DataError(f"B must have {n} rows, got {self.B.shape}")
        p = self.B.shape[1]
        self.C = _finite_matrix(self.C, "C")
        if self.C.ndim != 2 or self.C.shape[1] != n:
            raise DataError(f"C must have {n} columns, got {self.C.shape}")
        q = self.C.shape[0]
        self.D = _finite_matrix(self.D, "D", (q, p))
        if self.sample_time_s <= 0:
            raise DataError("sample_time_s must be positive")

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def num_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def num_outputs(self) -> int:
        return self.C.shape[0]


def _order_matrix(value, shape, name: str) -> np.ndarray:
    M = np.asarray(value)
    if M.ndim == 0:
        M = np.full(shape, int(M))
    if M.shape != shape or not np.issubdtype(M.dtype, np.integer):
        raise DataError(f"{name} must be an integer matrix of shape {shape}")
    return M.astype(int)


@dataclass
class ArxModel:
    """Vector difference equation with per-pair lag orders.

    y_t = -sum_l a[l-1] y_{t-l} + sum_l b[l-1] u_{t-l}

    a is lag-indexed (max_lag, q, q), b is (max_lag, q, p); the order
    matrices na (q, q), nb and nk (q, p) declare, per channel pair, how
    many lags are structurally present and the pure input delay. Entries
    outside the declared structure must be exact zeros.
    """

    a: np.ndarray
    b: np.ndarray
    na: np.ndarray
    nb: np.ndarray
    nk: np.ndarray
    sample_time_s: float

    def __post_init__(self):
        self.a = _finite_matrix(self.a, "a")
        self.b = _finite_matrix(self.b, "b")
        if self.a.ndim != 3 or self.a.shape[1] != self.a.shape[2]:
            raise DataError(f"a must be (lags, q, q), got {self.a.shape}")
        q = self.a.shape[1]
        if self.b.ndim != 3 or self.b.shape[1] != q:
            raise DataError(f"b must be (lags, q, p), got {self.b.shape}")
        p = self.b.shape[2]
        self.na = _order_matrix(self.na, (q, q), "na")
        self.nb = _order_matrix(self.nb, (q, p), "nb")
        self.nk = _order_matrix(self.nk, (q, p), "nk")
        if np.any(self.na < 0) or np.any(self.nb < 0):
            raise DataError("lag orders must be nonnegative")
        if np.any(self.nk < 1):
            raise DataError("input delay nk must be at least 1 sample")
        la = int(self.na.max(initial=0))
        active = self.nb > 0
        lb = int(np.max((self.nk + self.nb - 1)[active])) if np.any(active) else 0
        if self.a.shape[0] != la:
            raise DataError(
                f"a holds {self.a.shape[0]} lags but orders declare {la}")
        if self.b.shape[0] != lb:
            raise DataError(
                f"b holds {self.b.shape[0]} lags but orders declare {lb}")
        for i in range(q):
            for j in range(q):
                if np.any(self.a[self.na[i, j]:, i, j] != 0.0):
                    raise DataError(
                        f"a[{i},{j}] has coefficients beyond declared order")
            for j in range(p):
                lo, hi = self.nk[i, j], self.nk[i, j] + self.nb[i, j]
                mask = np.ones(self.b.shape[0], dtype=bool)
                mask[lo - 1:hi - 1] = False
                if np.any(self.b[mask, i, j] != 0.0):
                    raise DataError(
                        f"b[{i},{j}] has coefficients outside its delay window")
        if self.sample_time_s <= 0:
            raise DataError("sample_time_s must be positive")

    @classmethod
    def uniform(cls, a_coeffs, b_coeffs, delay: int,
                sample_time_s: float) -> "ArxModel":
        """All channel pairs share the same orders and delay.

        a_coeffs is (na, q, q) with index 0 at lag 1; b_coeffs is
        (nb, q, p) with index 0 at lag `delay`.
        """
        a_coeffs = np.asarray(a_coeffs, dtype=float)
        b_coeffs = np.asarray(b_coeffs, dtype=float)
        q = a_coeffs.shape[1]
        p = b_coeffs.shape[2]
        na = np.full((q, q), a_coeffs.shape[0])
        nb = np.full((q, p), b_coeffs.shape[0])
        nk = np.full((q, p), delay)
        if b_coeffs.shape[0]:
            b = np.zeros((delay - 1 + b_coeffs.shape[0], q, p))
            b[delay - 1:] = b_coeffs
        else:
            b = np.zeros((0, q, p))
        return cls(a_coeffs, b, na, nb, nk, sample_time_s)

    @property
    def num_inputs(self) -> int:
        return self.b.shape[2]

    @property
    def num_outputs(self) -> int:
        return self.a.shape[1]

    @property
    def lag_window(self) -> int:
        """Samples needed before the recursion can start."""
        return max(self.a.shape[0], self.b.shape[0])


@dataclass
class SindyModel:
    """One-step map x+ = Xi^T theta(x, u) over a fixed candidate library.

    The state is the measured output itself (y = x), so q doubles as the
    state dimension. coefficients has shape (num_terms, q) and is
    treated as fixed after construction: rollout and linearization run
    on the active support only (rows with any nonzero coefficient),
    which is pruned here once.
    """

    coefficients: np.ndarray
    library: LibrarySpec
    num_states: int
    num_inputs: int
    sample_time_s: float
    # sparsity threshold the model was identified with; it applies in
    # normalized-column units, so stored coefficients may be smaller
    threshold: float = 0.0
    terms: list[Term] = field(init=False, repr=False)
    term_table: TermTable = field(init=False, repr=False)
    active_coefficients: np.ndarray = field(init=False, repr=False)
    active_table: TermTable = field(init=False, repr=False)

    def __post_init__(self):
        self.coefficients = _finite_matrix(self.coefficients, "coefficients")
        self.terms = library_terms(self.num_states, self.num_inputs, self.library)
        self.term_table = TermTable(self.terms, self.num_states,
                                    self.num_inputs)
        expected = (len(self.terms), self.num_states)
        if self.coefficients.shape != expected:
            raise DataError(
                f"coefficients have shape {self.coefficients.shape}, "
                f"library implies {expected}"
            )
        if self.sample_time_s <= 0:
            raise DataError("sample_time_s must be positive")
        active = np.flatnonzero(np.any(self.coefficients != 0.0, axis=1))
        if 0 < active.size < len(self.terms):
            self.active_coefficients = self.coefficients[active].copy()
            self.active_table = TermTable([self.terms[i] for i in active],
                                          self.num_states, self.num_inputs)
        else:
            self.active_coefficients = self.coefficients
            self.active_table = self.term_table

    @property
    def num_outputs(self) -> int:
        return self.num_states

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        theta = self.active_table.row(np.asarray(x, dtype=float).ravel(),
                                      np.asarray(u, dtype=float).ravel())
        return theta @ self.active_coefficients

    def active_term_names(self, channel: int) -> list[str]:
        return [t.name for t, c in zip(self.terms, self.coefficients[:, channel])
                if c != 0.0]


ModelKind = Union[StateSpaceModel, ArxModel, SindyModel]


def _check_divergence(values: np.ndarray, step: int):
    if np.any(np.abs(values) > DIVERGENCE_LIMIT) or not np.all(np.isfinite(values)):
        raise DivergenceError(
            f"free-run simulation left the sane range (|value| > {DIVERGENCE_LIMIT:g}) "
            f"at step {step}"
        )


def _simulate_ss(model: StateSpaceModel, U: np.ndarray, x0) -> np.ndarray:
    m = U.shape[0]
    x = np.zeros(model.order) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x.shape != (model.order,):
        raise DataError(f"x0 has shape {x.shape}, expected ({model.order},)")
    Y = np.zeros((m, model.num_outputs))
    for k in range(m):
        Y[k] = model.C @ x + model.D @ U[k]
        _check_divergence(Y[k], k)
        x = model.A @ x + model.B @ U[k]
        _check_divergence(x, k)
    return Y


def _simulate_arx(model: ArxModel, U: np.ndarray, y_init) -> np.ndarray:
    m = U.shape[0]
    t0 = model.lag_window
    Y = np.zeros((m, model.num_outputs))
    if y_init is not None:
        y_init = np.atleast_2d(np.asarray(y_init, dtype=float))
        if y_init.shape[0] < t0 or y_init.shape[1] != model.num_outputs:
            raise DataError(
                f"ARX seed needs at least {t0} rows of {model.num_outputs} "
                f"outputs, got {y_init.shape}"
            )
        Y[:t0] = y_init[:t0]
    la, lb = model.a.shape[0], model.b.shape[0]
    for t in range(t0, m):
        y = np.zeros(model.num_outputs)
        for lag in range(1, la + 1):
            y -= model.a[lag - 1] @ Y[t - lag]
        for lag in range(1, lb + 1):
            y += model.b[lag - 1] @ U[t - lag]
        _check_divergence(y, t)
        Y[t] = y
    return Y


def _simulate_sindy(model: SindyModel, U: np.ndarray, x0) -> np.ndarray:
    m = U.shape[0]
    x = np.zeros(model.num_states) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x.shape != (model.num_states,):
        raise DataError(f"x0 has shape {x.shape}, expected ({model.num_states},)")
    Y = np.zeros((m, model.num_states))
    for k in range(m):
        Y[k] = x
        _check_divergence(x, k)
        if k + 1 < m:
            x = model.step(x, U[k])
    return Y


def simulate(model: ModelKind, U, init=None):
    """Free-run simulation over an input record.

    U may be a TimeSeries (sample time must match the model) or a plain
    (m, p) array; the output mirrors the input container. init is x0 for
    state-space and sparse models, or a seed block of measured outputs
    covering the lag window for ARX (None means zeros).
    """
    as_series = isinstance(U, TimeSeries)
    if as_series:
        if abs(U.sample_time_s - model.sample_time_s) > 1e-9 * model.sample_time_s:
            raise DataError(
                f"input sample time {U.sample_time_s} does not match "
                f"model sample time {model.sample_time_s}"
            )
        U_arr = U.values
    else:
        U_arr = np.atleast_2d(np.asarray(U, dtype=float))
    if U_arr.shape[1] != model.num_inputs:
        raise DataError(
            f"input has {U_arr.shape[1]} channels, model expects {model.num_inputs}"
        )
    if isinstance(init, TimeSeries):
        init = init.values
    if isinstance(model, StateSpaceModel):
        Y = _simulate_ss(model, U_arr, init)
    elif isinstance(model, ArxModel):
        Y = _simulate_arx(model, U_arr, init)
    elif isinstance(model, SindyModel):
        Y = _simulate_sindy(model, U_arr, init)
    else:
        raise DataError(f"unknown model type {type(model).__name__}")
    if as_series:
        names = [f"y{i + 1}" for i in range(Y.shape[1])]
        return TimeSeries(model.sample_time_s, Y, names)
    return Y


@dataclass
class FitReport:
    """Per-channel normalized fit percentages; mean taken across channels."""

    per_channel_fit: np.ndarray

    def __post_init__(self):
        self.per_channel_fit = np.asarray(self.per_channel_fit, dtype=float).ravel()

    @property
    def mean_fit(self) -> float:
        return float(np.mean(self.per_channel_fit))

    def __str__(self) -> str:
        per = ", ".join(f"{v:.2f}" for v in self.per_channel_fit)
        return f"fit per channel [{per}] %, mean {self.mean_fit:.2f} %"


def fit_percent(Y, Yhat) -> FitReport:
    """Normalized fit, 100 (1 - ||y - yhat|| / ||y - mean(y)||) per channel.

    100 is perfect, 0 matches the constant mean predictor, negative is
    worse than the mean. Constant measured channels are rejected.
    """
    if isinstance(Y, TimeSeries):
        Y = Y.values
    if isinstance(Yhat, TimeSeries):
        Yhat = Yhat.values
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=float))
    if Y.ndim == 2 and Y.shape[0] == 1 and Y.shape[1] > 1:
        # accept 1-d channels as columns
        Y = Y.T
        Yhat = Yhat.T
    if Y.shape != Yhat.shape:
        raise DataError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    fits = np.zeros(Y.shape[1])
    for j in range(Y.shape[1]):
        denom = np.linalg.norm(Y[:, j] - np.mean(Y[:, j]))
        if denom == 0.0:
            raise DataError(f"measured channel {j + 1} is constant, fit undefined")
        fits[j] = 100.0 * (1.0 - np.linalg.norm(Y[:, j] - Yhat[:, j]) / denom)
    return FitReport(fits)


def markov_parameters(model: StateSpaceModel, count: int) -> np.ndarray:
    """Impulse-response sequence h_0 = D, h_k = C A^(k-1) B, stacked (count, q, p).

    These are similarity-invariant, so they compare identified systems to
    ground truth without fixing a state basis.
    """
    h = np.zeros((count, model.num_outputs, model.num_inputs))
    if count == 0:
        return h
    h[0] = model.D
    Ak = np.eye(model.order)
    for k in range(1, count):
        h[k] = model.C @ Ak @ model.B
        Ak = model.A @ Ak
    return h


def estimate_initial_state(model: StateSpaceModel, U, Y,
                           num_samples: int = 20) -> np.ndarray:
    """Least-squares x0 from the first num_samples output samples.

    Subtracts the forced response, then solves the observability stack
    [C; CA; ...] x0 = free response. Rank deficiency is tolerated
    (minimum-norm solution), matching lstsq semantics.
    """
    if isinstance(U, TimeSeries):
        U = U.values
    if isinstance(Y, TimeSeries):
        Y = Y.values
    U = np.atleast_2d(np.asarray(U, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    K = min(num_samples, Y.shape[0], U.shape[0])
    if K < 1:
        raise DataError("no samples available for initial-state estimation")
    n, q = model.order, model.num_outputs
    G = np.zeros((K * q, n))
    rhs = np.zeros(K * q)
    Ak = np.eye(n)
    # forced response accumulates x_k = sum_j A^(k-1-j) B u_j
    x_forced = np.zeros(n)
    for k in range(K):
        G[k * q:(k + 1) * q] = model.C @ Ak
        rhs[k * q:(k + 1) * q] = Y[k] - model.C @ x_forced - model.D @ U[k]
        x_forced = model.A @ x_forced + model.B @ U[k]
        Ak = model.A @ Ak
    x0, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    return x0


def initial_condition_for(model: ModelKind, U, Y):
    """The validation-convention initial condition for each variant.

    State-space: least-squares x0 over the first 20 samples. ARX: the
    measured-output prefix covering the lag window. Sparse map: the first
    measured output.
    """
    if isinstance(Y, TimeSeries):
        Y_arr = Y.values
    else:
        Y_arr = np.atleast_2d(np.asarray(Y, dtype=float))
    if isinstance(model, StateSpaceModel):
        return estimate_initial_state(model, U, Y_arr)
    if isinstance(model, ArxModel):
        return Y_arr[:model.lag_window]
    if isinstance(model, SindyModel):
        return Y_arr[0]
    raise DataError(f"unknown model type {type(model).__name__}")


def _payload(model: ModelKind) -> tuple[str, dict]:
    if isinstance(model, StateSpaceModel):
        return "state-space", {
            "order": model.order,
            "A": model.A.tolist(),
            "B": model.B.tolist(),
            "C": model.C.tolist(),
            "D": model.D.tolist(),
        }
    if isinstance(model, ArxModel):
        return "arx", {
            "na": model.na.tolist(),
            "nb": model.nb.tolist(),
            "nk": model.nk.tolist(),
            "a": model.a.tolist(),
            "b": model.b.tolist(),
        }
    if isinstance(model, SindyModel):
        lib = model.library
        return "sindy", {
            "library": {
                "include_constant": lib.include_constant,
                "poly_degree_state": lib.poly_degree_state,
                "poly_degree_input": lib.poly_degree_input,
                "include_state_input_products": lib.include_state_input_products,
                "include_trig": lib.include_trig,
            },
            "threshold": model.threshold,
            "coefficients": model.coefficients.tolist(),
            "term_names": [t.name for t in model.terms],
        }
    raise DataError(f"unknown model type {type(model).__name__}")


def save_model(model: ModelKind, path):
    kind, payload = _payload(model)
    doc = {
        "format": MODEL_FORMAT,
        "kind": kind,
        "num_inputs": model.num_inputs,
        "num_outputs": model.num_outputs,
        "sample_time_s": model.sample_time_s,
        "payload": payload,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ModelKind:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError(
            f"model file {path} has format {doc.get('format')!r}, "
            f"expected {MODEL_FORMAT!r}"
        )
    kind = doc.get("kind")
    try:
        p = int(doc["num_inputs"])
        q = int(doc["num_outputs"])
        dt = float(doc["sample_time_s"])
        payload = doc["payload"]
        if kind == "state-space":
            model = StateSpaceModel(
                np.array(payload["A"], dtype=float),
                np.array(payload["B"], dtype=float),
                np.array(payload["C"], dtype=float),
                np.array(payload["D"], dtype=float),
                dt,
            )
        elif kind == "arx":
            model = ArxModel(
                np.array(payload["a"], dtype=float),
                np.array(payload["b"], dtype=float),
                np.array(payload["na"], dtype=int),
                np.array(payload["nb"], dtype=int),
                np.array(payload["nk"], dtype=int),
                dt,
            )
        elif kind == "sindy":
            model = SindyModel(
                np.array(payload["coefficients"], dtype=float),
                LibrarySpec(**payload["library"]),
                q, p, dt,
                threshold=float(payload.get("threshold", 0.0)),
            )
        else:
            raise DataError(f"model file {path} has unknown kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"model file {path} is malformed: {exc}") from exc
    if model.num_inputs != p or model.num_outputs != q:
        raise DataError(
            f"model file {path} declares ({p}, {q}) inputs/outputs but payload "
            f"implies ({model.num_inputs}, {model.num_outputs})"
        )
    return model
