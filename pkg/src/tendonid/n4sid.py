"""Subspace identification of linear state-space models.

Deterministic oblique-projection algorithm: project future outputs onto
the joint row space of past inputs and outputs along future inputs, take
an SVD to split extended observability from the state sequence, then
recover (A, B, C, D) from one stacked least-squares problem over the
state sequence.

Everything is computed in R-factor coordinates: one thin QR of the
stacked input/output block-Hankel matrix compresses the data to a small
square factor, and all projections, the SVD, and the final regression
act on that factor. Right-multiplication by the orthogonal Q leaves
column spaces, singular values, and least-squares solutions unchanged,
so no j-column matrices are ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import DataError, NumericError
from .models import StateSpaceModel

RANK_TOL = 1e-10


@dataclass(frozen=True)
class N4sidConfig:
    """order=None selects the order from the projection singular values."""

    block_rows_i: int | None = None
    order: int | None = 8
    sv_threshold: float = 1e-6

    def __post_init__(self):
        if self.order is not None and self.order < 1:
            raise DataError("order must be at least 1")
        if self.block_rows_i is not None:
            if self.block_rows_i < 2:
                raise DataError("block_rows_i must be at least 2")
            if self.order is not None and self.block_rows_i < self.order + 1:
                raise DataError("block_rows_i must be at least order + 1")
        if not 0 < self.sv_threshold < 1:
            raise DataError("sv_threshold must lie in (0, 1)")

    def resolved_block_rows(self) -> int:
        if self.block_rows_i is not None:
            return self.block_rows_i
        if self.order is not None:
            return max(2 * self.order, 20)
        return 20


def block_hankel(series: np.ndarray, rows: int) -> np.ndarray:
    """Block-Hankel matrix with `rows` block rows.

    series is (m, c); column j stacks samples j .. j+rows-1 channel-major,
    giving shape (rows*c, m - 2*rows + 1). The column count is chosen so
    past and future matrices of the same horizon share columns.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    m, c = series.shape
    if rows < 1:
        raise DataError("rows must be positive")
    if m < 2 * rows:
        raise DataError(f"need at least {2 * rows} samples for {rows} block rows, "
                        f"got {m}")
    cols = m - 2 * rows + 1
    H = np.zeros((rows * c, cols))
    for k in range(rows):
        H[k * c:(k + 1) * c] = series[k:k + cols].T
    return H


def estimate_order(singular_values, threshold: float) -> int:
    """Smallest n with s[n]/s[0] below the threshold; minimum 1.

    With no gap anywhere the full length is returned.
    """
    s = np.asarray(singular_values, dtype=float).ravel()
    if s.size == 0:
        raise DataError("empty singular value vector")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise DataError("singular values must be nonnegative and descending")
    if s[0] == 0:
        raise DataError("all singular values are zero")
    for n in range(1, s.size):
        if s[n] / s[0] < threshold:
            return max(n, 1)
    return s.size


def _svd_sign_fix(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Make each left singular vector's largest-magnitude entry positive."""
    for k in range(U.shape[1]):
        idx = int(np.argmax(np.abs(U[:, k])))
        if U[idx, k] < 0:
            U[:, k] = -U[:, k]
            Vt[k] = -Vt[k]
    return U, Vt


def _oblique(A_c: np.ndarray, B_c: np.ndarray, C_c: np.ndarray) -> np.ndarray:
    """Project rows of A onto rowspace(C) along rowspace(B), in coordinates."""
    # orthogonal complement of B's row space
    _, sB, VtB = np.linalg.svd(B_c, full_matrices=False)
    rank = int(np.sum(sB > RANK_TOL * (sB[0] if sB.size else 1.0)))
    Vb = VtB[:rank]
    A_perp = A_c - (A_c @ Vb.T) @ Vb
    C_perp = C_c - (C_c @ Vb.T) @ Vb
    return A_perp @ np.linalg.pinv(C_perp) @ C_c


def identify_n4sid(ds: Dataset, cfg: N4sidConfig = N4sidConfig()) -> StateSpaceModel:
    """Fit a discrete state-space model to an input/output dataset."""
    i = cfg.resolved_block_rows()
    m = ds.num_samples
    p = ds.num_inputs
    q = ds.num_outputs
    if m < 4 * i:
        raise DataError(f"need at least {4 * i} samples for {i} block rows, got {m}")
    j = m - 4 * i + 1  # columns of the 2i-row Hankels
    if j < 2 * i * (p + q):
        raise DataError(
            f"{m} samples give only {j} Hankel columns; need at least "
            f"{2 * i * (p + q)} for block_rows_i={i}"
        )

    U = block_hankel(ds.inputs.values, 2 * i)    # (2i p, j)
    Y = block_hankel(ds.outputs.values, 2 * i)   # (2i q, j)

    # persistent-excitation guard on the input Hankel
    su = np.linalg.svd(U, compute_uv=False)
    if su[0] == 0 or su[-1] / su[0] < RANK_TOL:
        raise DataError(
            "input is not persistently exciting: input block-Hankel matrix "
            "is rank deficient"
        )

    # compress to R-factor coordinates: S = L Q^T, rows keep their meaning
    S = np.vstack([U, Y])
    L = np.linalg.qr(S.T, mode="r").T           # (rows, rows)

    def rows(block: str, lo: int, hi: int) -> np.ndarray:
        """Row slice of L in block-row units; block selects input or output."""
        base = 0 if block == "u" else 2 * i * p
        c = p if block == "u" else q
        return L[base + lo * c: base + hi * c]

    Up, Uf = rows("u", 0, i), rows("u", i, 2 * i)
    Yp, Yf = rows("y", 0, i), rows("y", i, 2 * i)
    Wp = np.vstack([Up, Yp])
    # shifted split for the second projection
    Up_plus = rows("u", 0, i + 1)
    Yp_plus = rows("y", 0, i + 1)
    Uf_minus = rows("u", i + 1, 2 * i)
    Yf_minus = rows("y", i + 1, 2 * i)
    Wp_plus = np.vstack([Up_plus, Yp_plus])

    Oi = _oblique(Yf, Uf, Wp)
    Oi_minus = _oblique(Yf_minus, Uf_minus, Wp_plus)

    try:
        Usv, s, Vt = np.linalg.svd(Oi, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD of the oblique projection failed: {exc}") from exc
    Usv, Vt = _svd_sign_fix(Usv, Vt)

    n = cfg.order if cfg.order is not None else estimate_order(s, cfg.sv_threshold)
    n = min(n, (i - 1) * q)
    if n < 1:
        raise DataError("model order collapsed to zero")

    # extended observability and the two state sequences (in coordinates)
    gamma = Usv[:, :n] * np.sqrt(s[:n])
    gamma_up = gamma[:-q]
    Xi = np.linalg.pinv(gamma) @ Oi
    Xi_next = np.linalg.pinv(gamma_up) @ Oi_minus

    Uii = rows("u", i, i + 1)
    Yii = rows("y", i, i + 1)
    lhs = np.vstack([Xi_next, Yii])
    rhs = np.vstack([Xi, Uii])
    M, *_ = np.linalg.lstsq(rhs.T, lhs.T, rcond=None)
    M = M.T
    A, B = M[:n, :n], M[:n, n:]
    C, D = M[n:, :n], M[n:, n:]
    return StateSpaceModel(A, B, C, D, ds.sample_time_s)
