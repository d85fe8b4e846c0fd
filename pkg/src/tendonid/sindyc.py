"""Sparse identification of nonlinear dynamics with control inputs.

Fits the discrete one-step map X' = Theta(X, U) Xi by sequential
thresholded least squares: alternately solve the active-set least-squares
problem and drop coefficients below the threshold until the active set
stops changing. No derivative estimation is involved; the regression
targets next-sample states directly.

Library columns are normalized to unit Euclidean norm before
thresholding so one threshold is meaningful across mixed units (tendon
forces of order 1e2 N next to joint angles of order 1 rad), then
coefficients are mapped back to original units. The stored coefficients
therefore may be smaller in magnitude than the threshold; the threshold
lives in normalized-column units.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .errors import DataError
from .library import LibrarySpec, build_library
from .models import SindyModel

_DROP_TOL = 1e-10


def _active_lstsq(Theta_a: np.ndarray, target: np.ndarray,
                  column: int) -> np.ndarray:
    """Least squares on the active columns, dropping dependent ones.

    Rank-deficient subproblems are resolved by QR column pivoting: the
    dependent columns get exact zero coefficients and a warning, so the
    result stays deterministic instead of falling back to minimum-norm.
    """
    n = Theta_a.shape[1]
    Q, R, piv = scipy.linalg.qr(Theta_a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > _DROP_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    coefs = np.zeros(n)
    if rank == 0:
        warnings.warn(f"output column {column + 1}: active library columns are "
                      "all degenerate; coefficients set to zero")
        return coefs
    if rank < n:
        warnings.warn(f"output column {column + 1}: dropped {n - rank} linearly "
                      "dependent library columns from the active set")
    kept = piv[:rank]
    sol, *_ = scipy.linalg.lstsq(Theta_a[:, kept], target,
                                 lapack_driver="gelsd")
    coefs[kept] = sol
    return coefs


def stls(Theta: np.ndarray, Xprime: np.ndarray, threshold: float) -> np.ndarray:
    """Sequential thresholded least squares, one pass per output column.

    Guarantees on return: stored zeros are exact zeros, and every
    surviving coefficient satisfies |xi| >= threshold (a final
    re-threshold pass enforces this even if the 20-iteration cap bites
    before the active set settles). threshold = 0 is plain least squares.
    """
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    Xprime = np.asarray(Xprime, dtype=float)
    if Xprime.ndim == 1:
        Xprime = Xprime[:, None]
    m, T = Theta.shape
    if Xprime.shape[0] != m:
        raise DataError(f"Theta has {m} rows but Xprime has {Xprime.shape[0]}")
    if m <= T:
        raise DataError(f"need more samples ({m}) than library terms ({T})")
    if threshold < 0:
        raise DataError("threshold must be nonnegative")

    q = Xprime.shape[1]
    Xi = np.zeros((T, q))
    for c in range(q):
        active = np.ones(T, dtype=bool)
        coefs = np.zeros(T)
        for _ in range(20):
            coefs = np.zeros(T)
            coefs[active] = _active_lstsq(Theta[:, active], Xprime[:, c], c)
            keep = np.abs(coefs[active]) >= threshold
            if np.all(keep):
                break
            active[active] = keep
            if not np.any(active):
                warnings.warn(f"output column {c + 1}: every library term fell "
                              "below the threshold; dynamics identified as zero")
                break
        # enforce the magnitude invariant even when the cap was hit
        coefs[np.abs(coefs) < threshold] = 0.0
        Xi[:, c] = coefs
    return Xi


def identify_sindyc(ds: Dataset, spec: LibrarySpec = LibrarySpec(),
                    threshold: float = 0.0035) -> SindyModel:
    """End-to-end sparse fit of a one-step output map on a dataset.

    States are the measured outputs; targets are the same outputs one
    sample later. The default threshold 0.0035 balances sparsity against
    accuracy for tendon-robot joint data; remember it applies to
    unit-normalized library columns.
    """
    Y = ds.outputs.values
    U = ds.inputs.values
    X = Y[:-1]
    Xp = Y[1:]
    Theta, terms = build_library(X, U[:-1], spec)
    norms = np.linalg.norm(Theta, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    if np.any(norms == 0):
        warnings.warn("library produced all-zero columns; they are left "
                      "unnormalized and will be dropped by the regression")
    Xi_n = stls(Theta / safe, Xp, threshold)
    Xi = Xi_n / safe[:, None]
    return SindyModel(Xi, spec, ds.num_outputs, ds.num_inputs,
                      ds.sample_time_s, threshold=threshold)
