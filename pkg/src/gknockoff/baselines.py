"""Competitor procedures: B-Y on OLS contrast t-tests and a row-permutation filter."""

from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import knockoffs, numerics
from ._validation import as_matrix, check_q, check_rng, check_Xy
from .exceptions import InvalidInputError, RankDeficientError
from .structural import TransformSpec


@dataclass(frozen=True)
class PValueSet:
    p_values: np.ndarray
    t_stats: np.ndarray
    dof: int


def contrast_pvalues(X, y, D, unpenalized=None):
    """Two-sided t-test p-values for ``H0: d_j' beta = 0`` from ordinary least squares.

    Parameters
    ----------
    X : array (n, p)
    y : array (n,)
    D : array (m, p)
        Contrast rows.
    unpenalized : array (n, r), optional
        Extra covariates included in the fit but not tested.
    """
    X, y = check_Xy(X, y)
    D = as_matrix(D, "D")
    n, p = X.shape
    if D.shape[1] != p:
        raise InvalidInputError(f"D has {D.shape[1]} columns, X has {p}")
    design = X
    if unpenalized is not None:
        design = np.hstack([X, as_matrix(unpenalized, "unpenalized")])
        D = np.hstack([D, np.zeros((D.shape[0], design.shape[1] - p))])
    k = design.shape[1]
    dof = n - k
    if dof < 1:
        raise InvalidInputError(f"need n > number of coefficients (n={n}, k={k})")
    if numerics.matrix_rank(design) < k:
        raise RankDeficientError("X'X is singular")
    Q, R = np.linalg.qr(design)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - design @ beta
    sigma2 = float(resid @ resid) / dof
    # d' (X'X)^{-1} d = ||R^{-T} d||^2
    V = np.linalg.solve(R.T, D.T)
    se = np.sqrt(sigma2 * np.sum(V ** 2, axis=0))
    est = D @ beta
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, est / se, np.where(est == 0, 0.0, np.inf))
    pv = 2.0 * scipy.stats.t.sf(np.abs(t), dof)
    return PValueSet(p_values=np.clip(pv, 0.0, 1.0), t_stats=t, dof=dof)


def by_threshold(p_values, q):
    """Benjamini-Yekutieli step-up rejections (0-based, ascending).

    Rejects the ``k`` smallest p-values for the largest ``k`` with
    ``p_(k) <= k q / (m c_m)``, ``c_m = sum_{i<=m} 1/i``.
    """
    q = check_q(q)
    pv = np.asarray(p_values, dtype=float)
    m = pv.size
    if m == 0:
        return np.array([], dtype=int)
    c_m = float(np.sum(1.0 / np.arange(1, m + 1)))
    order = np.argsort(pv, kind="stable")
    crit = np.arange(1, m + 1) * q / (m * c_m)
    ok = np.nonzero(pv[order] <= crit)[0]
    if ok.size == 0:
        return np.array([], dtype=int)
    return np.sort(order[:ok[-1] + 1])


def by_procedure(X, y, spec, q, unpenalized=None):
    """B-Y on the contrast t-tests of ``spec.D`` (or a raw contrast matrix)."""
    D = spec.D if isinstance(spec, TransformSpec) else spec
    return by_threshold(contrast_pvalues(X, y, D, unpenalized).p_values, q)


def permutation_filter(problem, q, stat="lcd", grid=None, rng=None, permutation=None):
    """Knockoff+ selection with row-permuted ``X*`` posing as the knockoff.

    The permuted copy ignores the dependence in ``M y`` and does not satisfy
    the exchangeability the knockoff threshold relies on, so this filter is
    expected to exceed the target FDR. It exists as a negative control.

    Returns
    -------
    SelectionResult
    """
    rng = check_rng(rng)
    n = problem.X_star.shape[0]
    if permutation is None:
        permutation = rng.permutation(n)
    permutation = np.asarray(permutation, dtype=int)
    if np.array_equal(np.sort(permutation), np.arange(n)) is False:
        raise InvalidInputError("permutation must be a permutation of the rows")
    fake = problem.X_star[permutation]
    if stat == "lcd":
        if np.array_equal(fake, problem.X_star):
            # identical columns: both coefficients are equal by symmetry
            w = knockoffs.WStatistics(w=np.zeros(problem.m), method="lcd")
        else:
            w = knockoffs.lcd_from_design(problem.X_star, fake, problem.y_star)
    elif stat == "signed_max":
        w = knockoffs.signed_max_from_design(problem.X_star, fake, problem.y_star, grid)
    else:
        raise InvalidInputError(f"unknown statistic {stat!r}")
    return knockoffs.knockoff_plus_threshold(w, q)
