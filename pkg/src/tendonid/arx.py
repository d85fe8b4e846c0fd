"""MIMO ARX identification by linear least squares.

The difference equation for output row i,

    y_i[t] = - sum_j sum_{l=1}^{na[i,j]} a_l[i,j] y_j[t-l]
             + sum_j sum_{l=nk[i,j]}^{nk[i,j]+nb[i,j]-1} b_l[i,j] u_j[t-l],

is linear in the coefficients, so each output row is an independent
least-squares problem over lagged data. Orders may be given as scalars
(shared by every channel pair) or as full per-pair matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .errors import DataError
from .models import ArxModel, _order_matrix


def _regressor_columns(Y: np.ndarray, U: np.ndarray, na_row: np.ndarray,
                       nb_row: np.ndarray, nk_row: np.ndarray,
                       t0: int) -> tuple[np.ndarray, list[tuple[str, int, int]]]:
    """Lagged-data matrix for one output row plus (kind, channel, lag) keys."""
    m = Y.shape[0]
    cols = []
    keys = []
    for j in range(Y.shape[1]):
        for lag in range(1, na_row[j] + 1):
            cols.append(Y[t0 - lag:m - lag, j])
            keys.append(("y", j, lag))
    for j in range(U.shape[1]):
        for lag in range(nk_row[j], nk_row[j] + nb_row[j]):
            cols.append(U[t0 - lag:m - lag, j])
            keys.append(("u", j, lag))
    if not cols:
        return np.zeros((m - t0, 0)), keys
    return np.column_stack(cols), keys


def identify_arx(ds: Dataset, na=8, nb=8, nk=1) -> ArxModel:
    """Least-squares fit of the ARX coefficients on one dataset.

    The default orders (8 output lags, 8 input lags, one-sample delay on
    every channel pair) suit 30 ms tendon-robot data; pass scalars or
    per-pair matrices to override.
    """
    q, p = ds.num_outputs, ds.num_inputs
    na = _order_matrix(na, (q, q), "na")
    nb = _order_matrix(nb, (q, p), "nb")
    nk = _order_matrix(nk, (q, p), "nk")
    if np.any(na < 0) or np.any(nb < 0):
        raise DataError("lag orders must be nonnegative")
    if np.any(nk < 1):
        raise DataError("input delay nk must be at least 1 sample")

    la = int(na.max(initial=0))
    active = nb > 0
    lb = int(np.max((nk + nb - 1)[active])) if np.any(active) else 0
    t0 = max(la, lb)
    m = ds.num_samples
    if m <= t0 + 10:
        raise DataError(f"need more than {t0 + 10} samples for lags up to {t0}, "
                        f"got {m}")

    Y = ds.outputs.values
    U = ds.inputs.values
    a = np.zeros((la, q, q))
    b = np.zeros((lb, q, p))
    for i in range(q):
        Phi, keys = _regressor_columns(Y, U, na[i], nb[i], nk[i], t0)
        if Phi.shape[1] == 0:
            continue
        theta, _, rank, _ = scipy.linalg.lstsq(Phi, Y[t0:, i],
                                               lapack_driver="gelsd")
        if rank < Phi.shape[1]:
            raise DataError(
                f"ARX regressor for output {i + 1} is rank deficient "
                f"({rank} < {Phi.shape[1]}); input excitation insufficient"
            )
        for coef, (kind, j, lag) in zip(theta, keys):
            if kind == "y":
                a[lag - 1, i, j] = -coef
            else:
                b[lag - 1, i, j] = coef
    return ArxModel(a, b, na, nb, nk, ds.sample_time_s)


def arx_one_step(model: ArxModel, y_history, u_history) -> np.ndarray:
    """One-step prediction from trailing history windows.

    The last row of each history is the most recent sample (t-1); both
    windows must cover the model's lag window.
    """
    Yh = np.atleast_2d(np.asarray(y_history, dtype=float))
    Uh = np.atleast_2d(np.asarray(u_history, dtype=float))
    need = model.lag_window
    if Yh.shape[0] < need or Uh.shape[0] < need:
        raise DataError(f"history must cover {need} samples, got "
                        f"{Yh.shape[0]} outputs and {Uh.shape[0]} inputs")
    if Yh.shape[1] != model.num_outputs or Uh.shape[1] != model.num_inputs:
        raise DataError("history channel counts do not match the model")
    y = np.zeros(model.num_outputs)
    for lag in range(1, model.a.shape[0] + 1):
        y -= model.a[lag - 1] @ Yh[-lag]
    for lag in range(1, model.b.shape[0] + 1):
        y += model.b[lag - 1] @ Uh[-lag]
    return y
