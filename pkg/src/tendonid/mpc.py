"""Receding-horizon control on identified models.

Linear MPC condenses the tracking problem over the horizon into a dense
QP in the input increments Delta-u; the rate penalty R > 0 then makes the
problem strictly convex with no penalty on absolute input levels.
Nonlinear MPC wraps the same machinery in successive linearization of a
sparse one-step model, using the library's analytic Jacobians.

Output (joint-angle) bounds are soft, enforced through slack variables
with a large quadratic penalty; input bounds are hard. A final clip on
the applied force is a safety net only, and clipping events are counted.
"""

from __future__ import annotations

import gc
import math
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .errors import DataError, DivergenceError, NumericError
from .kinematics import ChainGeometry, JointRatios, forward_kinematics, \
    reconstruct_joints
from .models import ModelKind, SindyModel, StateSpaceModel
from .plantsim import SnakePlantConfig, PlantState, plant_rest, plant_step
from .qp import FEAS_TOL, QuadraticProgram, QpSolution, solve_qp


@dataclass
class MpcConfig:
    """Defaults follow the tendon-robot tuning: unit output weights,
    0.1 rate weight, 20..190 N forces, +-1 rad joint box, 33 Hz loop.
    The 30-step horizon is the shortest that tracks the petal sweep
    within 0.05 rad RMS; the pure rate penalty otherwise attenuates."""

    horizon: int = 30
    Q: np.ndarray = field(default_factory=lambda: np.eye(2))
    Qf: np.ndarray = field(default_factory=lambda: np.eye(2))
    R: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(4))
    u_min: np.ndarray = field(default_factory=lambda: np.full(4, 20.0))
    u_max: np.ndarray = field(default_factory=lambda: np.full(4, 190.0))
    x_min: np.ndarray = field(default_factory=lambda: np.full(2, -1.0))
    x_max: np.ndarray = field(default_factory=lambda: np.full(2, 1.0))
    sample_time_s: float = 0.03
    slack_weight: float = 1e4
    # weights and bounds are treated as fixed after construction; the
    # condenser caches derived constants here keyed by problem shape
    _cache: dict = field(init=False, default_factory=dict,
                         repr=False, compare=False)

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.Qf = np.atleast_2d(np.asarray(self.Qf, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.u_min = np.asarray(self.u_min, dtype=float).ravel()
        self.u_max = np.asarray(self.u_max, dtype=float).ravel()
        self.x_min = np.asarray(self.x_min, dtype=float).ravel()
        self.x_max = np.asarray(self.x_max, dtype=float).ravel()
        if self.horizon < 1:
            raise DataError("horizon must be at least 1")
        for name, W in (("Q", self.Q), ("Qf", self.Qf), ("R", self.R)):
            if W.shape[0] != W.shape[1] or not np.allclose(W, W.T, atol=1e-12):
                raise DataError(f"{name} must be square symmetric")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-10:
            raise DataError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.Qf)) < -1e-10:
            raise DataError("Qf must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise DataError("R must be positive definite")
        if self.u_min.shape != self.u_max.shape or np.any(self.u_min >= self.u_max):
            raise DataError("need u_min < u_max elementwise")
        if self.x_min.shape != self.x_max.shape or np.any(self.x_min >= self.x_max):
            raise DataError("need x_min < x_max elementwise")
        if self.sample_time_s <= 0:
            raise DataError("sample_time_s must be positive")
        if self.slack_weight <= 0:
            raise DataError("slack_weight must be positive")


@dataclass
class CondensedQp:
    """Condensed tracking QP plus the pieces needed to interpret it."""

    qp: QuadraticProgram
    z0: np.ndarray
    n_du: int
    num_inputs: int
    S: np.ndarray
    y_free: np.ndarray
    cost_offset: float

    def tracking_cost(self, du_stacked: np.ndarray) -> float:
        n = self.n_du
        H = self.qp.H[:n, :n]
        g = self.qp.g[:n]
        return float(0.5 * du_stacked @ H @ du_stacked + g @ du_stacked
                     + self.cost_offset)


def _condense_constants(cfg: MpcConfig, N: int, p: int, q: int):
    """Pieces of the condensed QP fixed by shapes and tuning alone:
    stacked weights, cumulative-input map, bound masks, and the constant
    blocks of G and H. Built once per (horizon, dims) and cached."""
    Qbar = np.zeros((N * q, N * q))
    for k in range(N - 1):
        Qbar[k * q:(k + 1) * q, k * q:(k + 1) * q] = cfg.Q
    Qbar[(N - 1) * q:, (N - 1) * q:] = cfg.Qf
    Rbar = np.kron(np.eye(N), cfg.R)
    T = np.kron(np.tril(np.ones((N, N))), np.eye(p))
    up_mask = np.tile(np.isfinite(cfg.u_max), N)
    lo_mask = np.tile(np.isfinite(cfg.u_min), N)
    soft = bool(np.any(np.isfinite(cfg.x_min))
                or np.any(np.isfinite(cfg.x_max)))
    n_du = N * p
    n_s = N * q if soft else 0
    nz = n_du + n_s
    xup = np.tile(np.isfinite(cfg.x_max), N)
    xlo = np.tile(np.isfinite(cfg.x_min), N)
    counts = [int(up_mask.sum()), int(lo_mask.sum())]
    if n_s:
        counts += [int(xup.sum()), int(xlo.sum()), n_s]
    edges = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    rows = [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]
    G0 = np.zeros((int(edges[-1]), nz))
    G0[rows[0], :n_du] = T[up_mask]
    G0[rows[1], :n_du] = -T[lo_mask]
    H0 = np.zeros((nz, nz))
    if n_s:
        E = np.eye(n_s)
        G0[rows[2], n_du:] = -E[xup]
        G0[rows[3], n_du:] = -E[xlo]
        G0[rows[4], n_du:] = -E
        H0[n_du:, n_du:] = 2.0 * cfg.slack_weight * E
    num_in_rows = counts[0] + counts[1]
    return SimpleNamespace(
        Qbar=Qbar, Rbar=Rbar, n_du=n_du, n_s=n_s, nz=nz,
        up_mask=up_mask, lo_mask=lo_mask, xup=xup, xlo=xlo,
        u_max_t=np.tile(cfg.u_max, N), u_min_t=np.tile(cfg.u_min, N),
        x_max_t=np.tile(cfg.x_max, N), x_min_t=np.tile(cfg.x_min, N),
        rows=rows, num_rows=int(edges[-1]), G0=G0, H0=H0,
        G_in=G0[:num_in_rows, :n_du].copy(), num_in_rows=num_in_rows,
        N=N, feed_cache={})


def _feed_pattern(cc, D) -> np.ndarray | None:
    """Feedthrough block of S, keyed by the D matrix it came from."""
    if not np.any(D):
        return None
    key = D.tobytes()
    pat = cc.feed_cache.get(key)
    if pat is None:
        pat = np.kron(np.tri(cc.N, cc.N, 1), D)
        cc.feed_cache[key] = pat
    return pat


def _setup_condense(As, Bs, C, cfg: MpcConfig, x0, u_prev, ref):
    """Validate shapes and fetch (or build) the cached constants."""
    N = cfg.horizon
    n = As[0].shape[0]
    p = Bs[0].shape[1]
    q = C.shape[0]
    x0 = np.asarray(x0, dtype=float).ravel()
    u_prev = np.asarray(u_prev, dtype=float).ravel()
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if x0.shape != (n,):
        raise DataError(f"x0 has shape {x0.shape}, expected ({n},)")
    if u_prev.shape != (p,):
        raise DataError(f"u_prev has shape {u_prev.shape}, expected ({p},)")
    if ref.shape != (N + 1, q):
        raise DataError(f"reference must be ({N + 1}, {q}), got {ref.shape}")
    if cfg.Q.shape[0] != q or cfg.R.shape[0] != p:
        raise DataError("weight dimensions do not match the model")
    key = (N, n, p, q)
    cc = cfg._cache.get(key)
    if cc is None:
        cc = _condense_constants(cfg, N, p, q)
        cfg._cache[key] = cc
    return x0, u_prev, ref, cc


def _predict_affine(As, Bs, cs, C, D, N: int, x0, u_prev, feed=None):
    """Outputs over the horizon as y = y_free + S du with u held after
    step N-1; the terminal output therefore reuses u_{N-1}.

    feed is the cached feedthrough pattern from _feed_pattern when the
    caller holds condensing constants; it is rebuilt here otherwise.
    """
    n = x0.size
    p = u_prev.size
    q = C.shape[0]
    # state influence of [du_0 .. du_{N-1}] plus one trailing block whose
    # first column carries the free response; the loop cost is numpy call
    # overhead, not flops, so each step is one full-width multiply and
    # two adds, with the output map applied in a single batch afterwards
    W = (N + 1) * p
    M = np.zeros((n, W))
    M[:, N * p] = x0
    MM = np.empty((N, n, W))
    buc = np.asarray(Bs) @ u_prev + np.asarray(cs)
    for k in range(1, N + 1):
        M = As[k - 1] @ M
        M.reshape(n, N + 1, p)[:, :k, :] += Bs[k - 1][:, None, :]
        M[:, N * p] += buc[k - 1]
        MM[k - 1] = M
    Y = (C @ MM).reshape(N * q, W)
    y_free = Y[:, N * p] + np.tile(D @ u_prev, N)
    S = np.ascontiguousarray(Y[:, :N * p])
    if feed is None and np.any(D):
        feed = np.kron(np.tri(N, N, 1), D)
    if feed is not None:
        S += feed
    return S, y_free


def _assemble_full(S, y_free, cc, ref, u_prev, p: int) -> CondensedQp:
    """Soft-constrained QP over [Delta-u; slacks] from a prediction."""
    N = ref.shape[0] - 1
    err = y_free - ref[1:].ravel()
    QS = cc.Qbar @ S
    Qerr = cc.Qbar @ err
    offset = float(err @ Qerr)
    n_du, n_s, nz = cc.n_du, cc.n_s, cc.nz

    # half + half.T is bitwise symmetric, so the QP's symmetry check
    # stays an exact one
    half = S.T @ QS + cc.Rbar
    H = cc.H0.copy()
    H[:n_du, :n_du] = half + half.T
    g = np.zeros(nz)
    g[:n_du] = 2.0 * (S.T @ Qerr)

    # hard input box on cumulative u (rows for finite bounds only),
    # soft output box with one shared slack per (step, channel), s >= 0
    u_prev_t = np.tile(u_prev, N)
    G = cc.G0.copy()
    h = np.empty(cc.num_rows)
    h[cc.rows[0]] = (cc.u_max_t - u_prev_t)[cc.up_mask]
    h[cc.rows[1]] = (u_prev_t - cc.u_min_t)[cc.lo_mask]
    if n_s:
        G[cc.rows[2], :n_du] = S[cc.xup]
        G[cc.rows[3], :n_du] = -S[cc.xlo]
        h[cc.rows[2]] = (cc.x_max_t - y_free)[cc.xup]
        h[cc.rows[3]] = (y_free - cc.x_min_t)[cc.xlo]
        h[cc.rows[4]] = 0.0
    qp = QuadraticProgram(H, g, G, h)

    z0 = np.zeros(nz)
    if n_s:
        upper = np.where(cc.xup, y_free - cc.x_max_t, -np.inf)
        lower = np.where(cc.xlo, cc.x_min_t - y_free, -np.inf)
        z0[n_du:] = np.maximum(0.0, np.maximum(upper, lower))
    return CondensedQp(qp, z0, n_du, p, S, y_free, offset)


def _condense(As, Bs, cs, C, D, cfg: MpcConfig, x0, u_prev,
              ref) -> CondensedQp:
    """Stack an affine time-varying prediction into a dense QP over
    [Delta-u; slacks]."""
    x0, u_prev, ref, cc = _setup_condense(As, Bs, C, cfg, x0, u_prev, ref)
    S, y_free = _predict_affine(As, Bs, cs, C, D, cfg.horizon, x0, u_prev,
                                _feed_pattern(cc, D))
    return _assemble_full(S, y_free, cc, ref, u_prev, u_prev.size)


def _solve_tracking(As, Bs, cs, C, D, cfg: MpcConfig, x0, u_prev, ref
                    ) -> tuple[np.ndarray | None, QpSolution]:
    """Condense and solve one tracking step.

    An input-box-only QP runs first; its plan is accepted whenever every
    predicted output already respects the output box, where the slack
    formulation is optimal with all slacks at zero, so the shortcut is
    exact. Only plans that leave the box pay for the full soft-
    constrained problem. Returns stacked Delta-u (None when even the
    relaxed problem fails) plus the solver report.
    """
    x0, u_prev, ref, cc = _setup_condense(As, Bs, C, cfg, x0, u_prev, ref)
    N = cfg.horizon
    S, y_free = _predict_affine(As, Bs, cs, C, D, N, x0, u_prev,
                                _feed_pattern(cc, D))

    err = y_free - ref[1:].ravel()
    Qerr = cc.Qbar @ err
    half = S.T @ (cc.Qbar @ S) + cc.Rbar
    u_prev_t = np.tile(u_prev, N)
    h = np.empty(cc.num_in_rows)
    h[cc.rows[0]] = (cc.u_max_t - u_prev_t)[cc.up_mask]
    h[cc.rows[1]] = (u_prev_t - cc.u_min_t)[cc.lo_mask]
    qp_r = QuadraticProgram(half + half.T, 2.0 * (S.T @ Qerr), cc.G_in, h)
    sol = solve_qp(qp_r)
    if sol.status == "optimal":
        if not cc.n_s:
            return sol.z, sol
        yv = y_free + S @ sol.z
        over = np.max(yv[cc.xup] - cc.x_max_t[cc.xup], initial=0.0)
        under = np.max(cc.x_min_t[cc.xlo] - yv[cc.xlo], initial=0.0)
        if max(over, under) <= FEAS_TOL:
            return sol.z, sol

    cond = _assemble_full(S, y_free, cc, ref, u_prev, u_prev.size)
    sol_full = solve_qp(cond.qp, cond.z0)
    if sol_full.status == "infeasible":
        return None, sol_full
    return sol_full.z[:cc.n_du], sol_full


def build_qp(model: StateSpaceModel, cfg: MpcConfig, x0, u_prev,
             ref) -> QuadraticProgram:
    """Condensed QP for a constant linear model; see solve_qp for solving."""
    N = cfg.horizon
    As = [model.A] * N
    Bs = [model.B] * N
    cs = [np.zeros(model.order)] * N
    return _condense(As, Bs, cs, model.C, model.D, cfg, x0, u_prev, ref).qp


@dataclass
class StepResult:
    u: np.ndarray
    status: str
    solution: QpSolution | None
    clipped: bool
    iterations: int = 1
    plan: np.ndarray | None = None


def _clip_events(u_raw: np.ndarray, u_clipped: np.ndarray) -> bool:
    return bool(np.max(np.abs(u_raw - u_clipped)) > 1e-9)


def linear_mpc_step(model: StateSpaceModel, cfg: MpcConfig, x0, u_prev,
                    ref) -> StepResult:
    u_prev = np.clip(np.asarray(u_prev, dtype=float).ravel(),
                     cfg.u_min, cfg.u_max)
    N = cfg.horizon
    du, sol = _solve_tracking([model.A] * N, [model.B] * N,
                              [np.zeros(model.order)] * N, model.C, model.D,
                              cfg, x0, u_prev, ref)
    if du is None:
        return StepResult(u_prev.copy(), "infeasible", sol, False)
    u_raw = u_prev + du[:model.num_inputs]
    u = np.clip(u_raw, cfg.u_min, cfg.u_max)
    return StepResult(u, sol.status, sol, _clip_events(u_raw, u))


def _sindy_rollout(model: SindyModel, x0: np.ndarray,
                   useq: np.ndarray) -> np.ndarray:
    steps = useq.shape[0]
    xs = np.zeros((steps + 1, model.num_states))
    xs[0] = x0
    row_fn = model.active_table.row_fn
    Xi = model.active_coefficients
    # one magnitude guard after the loop instead of one per step; a
    # blowup that reaches non-finite values first raises inside the
    # compiled row (math.sin rejects them) and lands in the same error
    k = 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(steps):
                xs[k + 1] = np.array(row_fn(xs[k], useq[k])) @ Xi
    except (ValueError, OverflowError) as exc:
        raise DivergenceError(
            f"prediction rollout diverged at step {k + 1}") from exc
    # the negated comparison also trips on NaN
    if not np.max(np.abs(xs)) <= 1e6:
        bad = int(np.argmax(np.any(~(np.abs(xs) <= 1e6), axis=1)))
        raise DivergenceError(f"prediction rollout diverged at step {bad}")
    return xs


def sindy_mpc_step(model: SindyModel, cfg: MpcConfig, x0, u_prev,
                   ref, max_lin_iter: int = 5,
                   tol: float = 1e-6, plan0=None) -> StepResult:
    """Successive linearization around the predicted trajectory.

    Each pass linearizes the one-step map with the library's analytic
    Jacobians, solves the resulting time-varying QP, and re-rolls the
    prediction; stops when the planned input sequence settles or after
    max_lin_iter passes, keeping the last feasible plan. plan0 seeds the
    linearization trajectory (receding-horizon warm start); it only sets
    where the first pass linearizes, never the decision variables.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    u_prev = np.clip(np.asarray(u_prev, dtype=float).ravel(),
                     cfg.u_min, cfg.u_max)
    N = cfg.horizon
    q, p = model.num_states, model.num_inputs
    C = np.eye(q)
    D = np.zeros((q, p))
    if plan0 is None:
        useq = np.tile(u_prev, (N, 1))
    else:
        useq = np.clip(np.asarray(plan0, dtype=float).reshape(N, p),
                       cfg.u_min, cfg.u_max)
    try:
        xs = _sindy_rollout(model, x0, useq)
    except DivergenceError:
        return StepResult(u_prev.copy(), "diverged", None, False, 0)

    best: StepResult | None = None
    for it in range(1, max_lin_iter + 1):
        Gx, Gu = model.active_table.jacobians(xs[:N], useq)
        Xi = model.active_coefficients
        As = np.einsum("tn,ktq->knq", Xi, Gx)
        Bs = np.einsum("tn,ktp->knp", Xi, Gu)
        # xs came from a rollout along useq, so xs[1:] already holds the
        # one-step map at every linearization point
        cs = (xs[1:] - np.einsum("knq,kq->kn", As, xs[:N])
              - np.einsum("knp,kp->kn", Bs, useq))
        du, sol = _solve_tracking(As, Bs, cs, C, D, cfg, x0, u_prev, ref)
        if du is None:
            break
        u_new = u_prev + np.cumsum(du.reshape(N, p), axis=0)
        change = float(np.max(np.abs(u_new - useq)))
        u_raw = u_new[0]
        u_applied = np.clip(u_raw, cfg.u_min, cfg.u_max)
        best = StepResult(u_applied, sol.status, sol,
                          _clip_events(u_raw, u_applied), it, u_new)
        useq = u_new
        if change < tol:
            break
        try:
            xs = _sindy_rollout(model, x0, useq)
        except DivergenceError:
            break
    if best is None:
        return StepResult(u_prev.copy(), "infeasible", None, False, 0)
    return best


def nmpc_step(model: SindyModel, cfg: MpcConfig, x0, u_prev, ref) -> np.ndarray:
    """First applied force of the successive-linearization plan."""
    return sindy_mpc_step(model, cfg, x0, u_prev, ref).u


@dataclass
class Observer:
    """State estimation settings for models with internal (unmeasured) state.

    kalman runs the standard predict/update recursion with isotropic
    covariances; direct solves least squares over the last n IO pairs.
    """

    kind: str = "kalman"
    process_var: float = 1e-4
    measurement_var: float = 1e-6
    init_var: float = 1.0

    def __post_init__(self):
        if self.kind not in ("kalman", "direct"):
            raise DataError(f"unknown observer kind {self.kind!r}")
        if min(self.process_var, self.measurement_var) < 0 or self.init_var < 0:
            raise DataError("observer variances must be nonnegative")


class KalmanFilter:
    def __init__(self, model: StateSpaceModel, obs: Observer):
        n = model.order
        self.model = model
        self.x = np.zeros(n)
        self.P = obs.init_var * np.eye(n)
        self.W = obs.process_var * np.eye(n)
        self.V = obs.measurement_var * np.eye(model.num_outputs)

    def update(self, y: np.ndarray, u: np.ndarray):
        C, D = self.model.C, self.model.D
        innov = y - C @ self.x - D @ u
        Sm = C @ self.P @ C.T + self.V
        K = np.linalg.solve(Sm.T, (self.P @ C.T).T).T
        self.x = self.x + K @ innov
        self.P = (np.eye(self.x.size) - K @ C) @ self.P

    def predict(self, u: np.ndarray):
        A, B = self.model.A, self.model.B
        self.x = A @ self.x + B @ u
        self.P = A @ self.P @ A.T + self.W


def _direct_estimate(model: StateSpaceModel, U: np.ndarray,
                     Y: np.ndarray) -> np.ndarray:
    """LS state from the last n IO pairs, rolled to the next sample."""
    n, q = model.order, model.num_outputs
    if Y.shape[0] < n:
        raise DataError(f"direct estimation needs {n} samples, got {Y.shape[0]}")
    Us, Ys = U[-n:], Y[-n:]
    G = np.zeros((n * q, n))
    rhs = np.zeros(n * q)
    Ak = np.eye(n)
    x_forced = np.zeros(n)
    for k in range(n):
        G[k * q:(k + 1) * q] = model.C @ Ak
        rhs[k * q:(k + 1) * q] = Ys[k] - model.C @ x_forced - model.D @ Us[k]
        x_forced = model.A @ x_forced + model.B @ Us[k]
        Ak = model.A @ Ak
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < 1e-10:
        raise DataError("model is unobservable; direct state estimation "
                        "is ill-posed")
    x, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    for k in range(n):
        x = model.A @ x + model.B @ Us[k]
    return x


def estimate_state(obs: Observer, model: StateSpaceModel, u_history,
                   y_history) -> np.ndarray:
    """State estimate aligned with the sample after the given history."""
    U = np.atleast_2d(np.asarray(u_history, dtype=float))
    Y = np.atleast_2d(np.asarray(y_history, dtype=float))
    if U.shape[0] != Y.shape[0]:
        raise DataError("input and output histories differ in length")
    if obs.kind == "direct":
        return _direct_estimate(model, U, Y)
    kf = KalmanFilter(model, obs)
    for k in range(Y.shape[0]):
        kf.update(Y[k], U[k])
        kf.predict(U[k])
    return kf.x


@dataclass
class MpcController:
    model: ModelKind
    cfg: MpcConfig
    observer: Observer = field(default_factory=Observer)


@dataclass
class ClosedLoopLog:
    """Per-step closed-loop record. solve_ms is the CPU time of the
    controller step (estimate + condense + solve), the quantity the
    33 Hz budget constrains on dedicated hardware."""

    sample_time_s: float
    time_s: np.ndarray
    reference: np.ndarray
    measured: np.ndarray
    forces: np.ndarray
    status: list[str]
    solve_ms: np.ndarray
    clip_events: int

    def __post_init__(self):
        if np.any(np.diff(self.time_s) <= 0):
            raise DataError("log time must be strictly increasing")
        if np.any(self.solve_ms < 0):
            raise DataError("solve times must be nonnegative")

    @property
    def num_steps(self) -> int:
        return self.time_s.size

    def rms_error_rad(self) -> float:
        return float(np.sqrt(np.mean((self.measured - self.reference) ** 2)))

    def max_solve_ms(self) -> float:
        return float(np.max(self.solve_ms))

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "ref1", "ref2", "q1", "q2",
                        "f1", "f2", "f3", "f4", "status", "solve_ms"])
            for k in range(self.num_steps):
                row = [format(self.time_s[k], ".17g")]
                row += [format(v, ".17g") for v in self.reference[k]]
                row += [format(v, ".17g") for v in self.measured[k]]
                row += [format(v, ".17g") for v in self.forces[k]]
                row.append(self.status[k])
                row.append(format(self.solve_ms[k], ".3f"))
                w.writerow(row)


def run_closed_loop(plant: SnakePlantConfig, controller: MpcController,
                    ref_traj, duration_s: float,
                    initial: PlantState | None = None) -> ClosedLoopLog:
    """Sequential control loop against the synthetic plant.

    Per step: read joints, estimate the model state, solve the MPC
    problem, clip and apply the first input, advance the plant. On solver
    failure the previous input is held and the step is logged as such.
    """
    cfg = controller.cfg
    model = controller.model
    dt = cfg.sample_time_s
    steps = int(round(duration_s / dt))
    if steps < 1:
        raise DataError("duration shorter than one sample")
    ref = np.atleast_2d(np.asarray(ref_traj, dtype=float))
    need = steps + cfg.horizon + 1
    if ref.shape[0] < need or ref.shape[1] != 2:
        raise DataError(f"reference must cover ({need}, 2), got {ref.shape}")

    is_linear = isinstance(model, StateSpaceModel)
    if not is_linear and not isinstance(model, SindyModel):
        raise DataError("closed loop supports state-space and sparse models")
    state = plant_rest() if initial is None else initial
    u_prev = np.clip(np.full(4, plant.force_bias_N), cfg.u_min, cfg.u_max)

    kf = None
    hist_u: list[np.ndarray] = []
    hist_y: list[np.ndarray] = []
    if is_linear and controller.observer.kind == "kalman":
        kf = KalmanFilter(model, controller.observer)

    # untimed warm-up solve; first-call setup (condensing constants,
    # lazy BLAS paths) would otherwise inflate the first logged time
    warm_ref = ref[:cfg.horizon + 1]
    if is_linear:
        linear_mpc_step(model, cfg, np.zeros(model.order), u_prev, warm_ref)
    else:
        sindy_mpc_step(model, cfg, state.q, u_prev, warm_ref)

    t_log = np.zeros(steps)
    ref_log = np.zeros((steps, 2))
    y_log = np.zeros((steps, 2))
    f_log = np.zeros((steps, 4))
    ms_log = np.zeros(steps)
    statuses: list[str] = []
    clips = 0
    plan = None

    # collector pauses are the dominant solve-time outlier at 33 Hz;
    # reference counting still frees the per-step arrays
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(steps):
            y = state.q.copy()
            # CPU time of this thread: the 33 Hz budget refers to
            # dedicated control hardware, so neither scheduler
            # preemption nor spin-waiting BLAS worker threads on a
            # shared machine may pollute the measurement
            tic = time.thread_time()
            if is_linear:
                if kf is not None:
                    kf.update(y, u_prev)
                    xhat = kf.x.copy()
                else:
                    if len(hist_y) >= model.order:
                        xhat = _direct_estimate(model, np.array(hist_u),
                                                np.array(hist_y))
                    else:
                        xhat = np.zeros(model.order)
                res = linear_mpc_step(model, cfg, xhat, u_prev,
                                      ref[k:k + cfg.horizon + 1])
            else:
                res = sindy_mpc_step(model, cfg, y, u_prev,
                                     ref[k:k + cfg.horizon + 1], plan0=plan)
                if res.plan is not None:
                    plan = np.vstack([res.plan[1:], res.plan[-1]])
                else:
                    plan = None
            ms_log[k] = (time.thread_time() - tic) * 1e3

            if res.status in ("infeasible", "diverged"):
                u = u_prev.copy()
                status = res.status + "+held"
            else:
                u = res.u
                status = res.status
                if res.clipped:
                    clips += 1
                    status += "+clip"
            statuses.append(status)

            t_log[k] = k * dt
            ref_log[k] = ref[k]
            y_log[k] = y
            f_log[k] = u

            state = plant_step(state, u, dt, plant)
            if kf is not None:
                kf.predict(u)
            hist_u.append(u)
            hist_y.append(y)
            u_prev = u
    finally:
        if gc_was_enabled:
            gc.enable()

    return ClosedLoopLog(dt, t_log, ref_log, y_log, f_log, statuses,
                         ms_log, clips)


def _fk_sensitivity(ratios: JointRatios, geom: ChainGeometry) -> np.ndarray:
    """d(end-effector x, y)/d(q1, q2) at the straight configuration."""
    delta = 1e-6
    base = forward_kinematics(reconstruct_joints(0.0, 0.0, ratios), geom)
    S = np.zeros((2, 2))
    for i in range(2):
        qp = reconstruct_joints(delta if i == 0 else 0.0,
                                delta if i == 1 else 0.0, ratios)
        S[:, i] = (forward_kinematics(qp, geom) - base)[:2] / delta
    return S


def petal_reference(num_points: int, sample_time_s: float,
                    amplitude_rad: float = 0.55,
                    sweep_period_s: float = 30.0,
                    ramp_s: float = 2.0,
                    ratios: JointRatios = JointRatios(),
                    geom: ChainGeometry = ChainGeometry()) -> np.ndarray:
    """Four-petal rose for the end effector, mapped to joint references.

    The rose r = |cos(2 theta)| in the end-effector xy-plane is pulled
    back through the small-angle FK sensitivity, scaled so the joint
    references peak at amplitude_rad, and ramped in from zero to avoid
    commanding a step at start-up.
    """
    if num_points < 1:
        raise DataError("num_points must be positive")
    t = np.arange(num_points) * sample_time_s
    theta = 2 * np.pi * t / sweep_period_s
    rose = np.abs(np.cos(2 * theta))
    xy = np.vstack([rose * np.cos(theta), rose * np.sin(theta)])
    S = _fk_sensitivity(ratios, geom)
    q_unit = np.linalg.solve(S, xy)
    peak = np.max(np.abs(q_unit))
    if peak > 0:
        q_unit = q_unit * (amplitude_rad / peak)
    ramp = np.clip(t / ramp_s, 0.0, 1.0) if ramp_s > 0 else np.ones_like(t)
    return (q_unit * ramp).T


def step_reference(num_points: int, sample_time_s: float,
                   amplitude_rad: float = 0.3,
                   period_s: float = 8.0) -> np.ndarray:
    """Alternating joint-angle setpoints, holding each for half a period."""
    if num_points < 1:
        raise DataError("num_points must be positive")
    t = np.arange(num_points) * sample_time_s
    phase = np.floor(2.0 * t / period_s).astype(int)
    sign = np.where(phase % 2 == 0, 1.0, -1.0)
    ref = np.zeros((num_points, 2))
    ref[:, 0] = amplitude_rad * sign
    ref[:, 1] = -0.6 * amplitude_rad * sign
    return ref
