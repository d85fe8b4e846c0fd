"""Dense convex quadratic programming by a primal active-set method.

Solves   min_z  0.5 z' H z + g' z   s.t.  G z <= h

with H strictly positive definite. H is factored once per solve; each
working-set iterate then solves the equality-constrained subproblem via
a Schur complement on the active rows, which keeps the per-iteration
cost at O(n^2 k) for k active constraints. Ties are always broken by
lowest constraint index, so identical problems yield identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DataError, NumericError

FEAS_TOL = 1e-9
ZERO_STEP = 1e-12


@dataclass
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise DataError(f"H has shape {self.H.shape}, expected ({n}, {n})")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise DataError("H must be symmetric")
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.G.shape[0] != self.h.size:
            raise DataError(f"G has {self.G.shape[0]} rows but h has "
                            f"{self.h.size} entries")

    @property
    def num_variables(self) -> int:
        return self.g.size

    @property
    def num_constraints(self) -> int:
        return self.h.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    status: str          # optimal | infeasible | iteration-limit
    iterations: int
    multipliers: np.ndarray
    kkt_stationarity: float = field(default=np.nan)
    kkt_feasibility: float = field(default=np.nan)
    kkt_complementarity: float = field(default=np.nan)

    @property
    def max_kkt_residual(self) -> float:
        return max(self.kkt_stationarity, self.kkt_feasibility,
                   self.kkt_complementarity)


def _find_feasible(qp: QuadraticProgram, z: np.ndarray,
                   max_sweeps: int = 500) -> np.ndarray | None:
    """Cyclic projection onto violated halfspaces; None when it stalls."""
    if qp.num_constraints == 0:
        return z
    row_norm2 = np.sum(qp.G ** 2, axis=1)
    for _ in range(max_sweeps):
        viol = qp.G @ z - qp.h
        worst = np.max(viol)
        if worst <= FEAS_TOL:
            return z
        for i in range(qp.num_constraints):
            v = qp.G[i] @ z - qp.h[i]
            if v > 0 and row_norm2[i] > 0:
                z = z - (v / row_norm2[i]) * qp.G[i]
    viol = qp.G @ z - qp.h
    return z if np.max(viol) <= FEAS_TOL else None


def _kkt_residuals(qp: QuadraticProgram, z: np.ndarray,
                   lam: np.ndarray) -> tuple[float, float, float]:
    slack = qp.G @ z - qp.h if qp.num_constraints else np.zeros(0)
    grad = qp.H @ z + qp.g
    if qp.num_constraints:
        grad = grad + qp.G.T @ lam
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    feas = float(max(0.0, np.max(slack))) if slack.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    return stat, feas, comp


def solve_qp(qp: QuadraticProgram, z0: np.ndarray | None = None,
             max_iter: int | None = None) -> QpSolution:
    """Primal active-set solve from a feasible point.

    If z0 is missing or infeasible, a cyclic-projection phase recovers a
    feasible start; failure there reports status "infeasible" instead of
    raising, since an over-constrained MPC step is an expected runtime
    condition the caller handles by holding the previous input.
    """
    n = qp.num_variables
    mc = qp.num_constraints
    try:
        h_factor = scipy.linalg.cho_factor(qp.H)
    except scipy.linalg.LinAlgError as exc:
        raise DataError("H must be positive definite") from exc
    if max_iter is None:
        max_iter = 20 * (n + mc + 1)

    z = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).ravel().copy()
    if z.shape != (n,):
        raise DataError(f"z0 has shape {z.shape}, expected ({n},)")
    feasible = _find_feasible(qp, z)
    if feasible is None:
        return QpSolution(z, "infeasible", 0, np.zeros(mc))
    z = feasible

    work = np.flatnonzero(qp.G @ z - qp.h >= -FEAS_TOL).tolist() if mc else []
    # trim to a linearly independent working set
    if len(work) > 0:
        GW = qp.G[work]
        R, piv = scipy.linalg.qr(GW.T, mode="r", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > 1e-12 * diag[0])) if diag[0] > 0 else 0
        work = sorted(work[k] for k in piv[:rank])
    in_work = np.zeros(mc, dtype=bool)
    in_work[work] = True

    lam_full = np.zeros(mc)
    status = "iteration-limit"
    it = 0
    for it in range(1, max_iter + 1):
        grad = qp.H @ z + qp.g
        a = scipy.linalg.cho_solve(h_factor, -grad)
        if work:
            # equality-constrained step: GW p = 0 via the Schur complement
            GW = qp.G[work]
            HG = scipy.linalg.cho_solve(h_factor, GW.T)
            schur = GW @ HG
            rhs = GW @ a
            try:
                mu = scipy.linalg.solve(schur, rhs, assume_a="pos")
            except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
                mu, *_ = np.linalg.lstsq(schur, rhs, rcond=None)
            p = a - HG @ mu
        else:
            mu = np.zeros(0)
            p = a

        if np.max(np.abs(p), initial=0.0) <= ZERO_STEP:
            # at a stationary point mu solves GW' mu = -grad exactly
            lam_full[:] = 0.0
            if work:
                lam_full[work] = mu
                k_min = int(np.argmin(mu))
                if mu[k_min] < -FEAS_TOL:
                    in_work[work[k_min]] = False
                    del work[k_min]
                    continue
            status = "optimal"
            break

        # longest step along p staying feasible; first index within a
        # 1e-14 band of the minimum ratio wins, matching ascending scan
        gp = qp.G @ p if mc else np.zeros(0)
        margin = qp.h - qp.G @ z if mc else np.zeros(0)
        cand = ~in_work & (gp > ZERO_STEP)
        alpha = 1.0
        blocker = -1
        if cand.any():
            idxs = np.nonzero(cand)[0]
            ratios = margin[idxs] / gp[idxs]
            amin = float(ratios.min())
            if amin < alpha - 1e-14:
                k = int(np.argmax(ratios <= amin + 1e-14))
                blocker = int(idxs[k])
                alpha = max(float(ratios[k]), 0.0)
        z = z + alpha * p
        if blocker >= 0:
            work = sorted(work + [blocker])
            in_work[blocker] = True

    stat, feas, comp = _kkt_residuals(qp, z, lam_full)
    sol = QpSolution(z, status, it, lam_full, stat, feas, comp)
    if status == "optimal" and sol.max_kkt_residual > 1e-6:
        raise NumericError(
            f"active-set solve reported optimal with KKT residual "
            f"{sol.max_kkt_residual:.2e}"
        )
    return sol


def solve_qp_projected_gradient(qp: QuadraticProgram, lower: np.ndarray,
                                upper: np.ndarray, tol: float = 1e-10,
                                max_iter: int = 200_000) -> np.ndarray:
    """Slow reference solver for pure box constraints.

    Projected gradient with the optimal fixed step 2 / (mu + L); used as
    an independent cross-check of the active-set method, not in any
    production path.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    eig = np.linalg.eigvalsh(qp.H)
    mu, L = float(eig[0]), float(eig[-1])
    if mu <= 0:
        raise DataError("H must be positive definite")
    step = 2.0 / (mu + L)
    z = np.clip(np.zeros(qp.num_variables), lower, upper)
    for _ in range(max_iter):
        z_new = np.clip(z - step * (qp.H @ z + qp.g), lower, upper)
        if np.max(np.abs(z_new - z)) < tol:
            return z_new
        z = z_new
    return z
