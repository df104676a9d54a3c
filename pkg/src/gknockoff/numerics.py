"""Dense linear-algebra kernels: null spaces, projections and PSD repair.

All routines are deterministic; rank decisions use a relative pivot
threshold of ``1e-10 * ||A||`` on pivoted QR factorizations.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._validation import as_matrix, check_symmetric
from .exceptions import NotPSDError, RankDeficientError

RANK_RTOL = 1e-10

# 0 first, then 1e-12, 1e-10, 1e-8, ... (factor 100 per step)
_JITTER_LADDER = (0.0,) + tuple(10.0 ** -k for k in range(12, -13, -2))


@dataclass(frozen=True)
class FactorizationReport:
    kind: str
    rank: int
    min_pivot_or_eig: float
    jitter_applied: float = 0.0


def _pivoted_qr(A):
    Q, R, piv = scipy.linalg.qr(A, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    norm = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > RANK_RTOL * norm)) if norm > 0 else 0
    return Q, R, piv, rank, diag


def matrix_rank(A):
    """Numerical rank from pivoted QR with the package-wide relative cutoff."""
    A = as_matrix(A, "A")
    if min(A.shape) == 0:
        return 0
    return _pivoted_qr(A)[3]


def orthonormal_basis(B):
    """Orthonormal basis (n x rank) for the column space of ``B``."""
    B = as_matrix(B, "B")
    n, k = B.shape
    if k == 0:
        return np.zeros((n, 0))
    Q, _, _, rank, _ = _pivoted_qr(B)
    return Q[:, :rank]


def qr_null_space(A):
    """Orthonormal basis of the orthogonal complement of ``col(A)``.

    Parameters
    ----------
    A : array of shape (n, k)

    Returns
    -------
    U : array of shape (n, n - rank(A))
        Columns are orthonormal and satisfy ``A.T @ U == 0`` to rounding.
    """
    A = as_matrix(A, "A")
    n, k = A.shape
    if k == 0:
        return np.eye(n)
    Q, _, _, rank, _ = _pivoted_qr(A)
    return Q[:, rank:].copy()


def cholesky_psd(A, jitter_max=1e-6):
    """Lower Cholesky factor of ``A + delta * I`` with the smallest ladder jitter.

    ``delta`` is taken from ``0, 1e-12, 1e-10, 1e-8, ...`` and never exceeds
    ``jitter_max``.
    """
    A = check_symmetric(A, name="A")
    k = A.shape[0]
    if k == 0:
        return np.zeros((0, 0)), FactorizationReport("cholesky", 0, np.inf, 0.0)
    A = 0.5 * (A + A.T)
    for delta in _JITTER_LADDER:
        if delta > jitter_max:
            break
        try:
            L = np.linalg.cholesky(A + delta * np.eye(k))
        except np.linalg.LinAlgError:
            continue
        pivots = np.diag(L)
        return L, FactorizationReport(
            "cholesky", int(np.sum(pivots > 0)), float(pivots.min() ** 2), delta
        )
    raise NotPSDError(
        f"Cholesky factorization failed with jitter up to {jitter_max:g}"
    )


def sym_eig_min(A):
    """Smallest eigenvalue of a symmetric matrix."""
    A = check_symmetric(A, name="A")
    if A.shape[0] == 0:
        return np.inf
    return float(scipy.linalg.eigvalsh(A, subset_by_index=[0, 0])[0])


def projection_complement(B):
    """Projector ``I - B (B'B)^{-1} B'`` onto the orthogonal complement of ``col(B)``.

    Raises
    ------
    RankDeficientError
        If ``B`` does not have full column rank.
    """
    B = as_matrix(B, "B")
    n, k = B.shape
    if k == 0:
        return np.eye(n)
    Q, _, _, rank, _ = _pivoted_qr(B)
    if rank < k:
        raise RankDeficientError(
            f"B has rank {rank} < {k} columns; projection is ill-defined"
        )
    Qk = Q[:, :k]
    M = np.eye(n) - Qk @ Qk.T
    return 0.5 * (M + M.T)
