"""Second-order knockoffs for the projected design, statistics and threshold.

The knockoff matrix satisfies

    Xk' Xk = Sigma*,    Xk' X* = Sigma* - diag(s),

and is built as ``X* (I - Sigma*^{-1} diag(s)) + U C`` where ``U`` is an
orthonormal frame orthogonal to ``X*`` *and* to the projected-out directions,
so that ``M Xk = Xk`` and the Gram identities survive the projection.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import lasso, numerics
from ._validation import as_vector, check_Xy, check_q, check_rng
from .exceptions import (
    DimensionTooSmallError,
    GramCheckError,
    InvalidInputError,
    NotPDError,
    RankDeficientError,
)
from .structural import TransformedProblem

S_SHRINK = 1e-6
GRAM_RTOL = 1e-6
LCD_FRACTION = 0.1


@dataclass(frozen=True)
class KnockoffEnsemble:
    """Knockoff matrix with the ingredients used to build it.

    ``C`` is the upper-triangular factor (transpose of the Cholesky factor) with ``C'C = 2 diag(s) - diag(s)
    Sigma*^{-1} diag(s)``; ``gram_residuals`` holds the sup-norm residuals of
    the two Gram identities.
    """

    X_tilde: np.ndarray
    s: np.ndarray
    C: np.ndarray
    U: np.ndarray
    construction: str
    gram_residuals: tuple
    jitter: float = 0.0


@dataclass(frozen=True)
class WStatistics:
    w: np.ndarray
    method: str
    grid_hash: str = ""
    lambda_original: np.ndarray = None
    lambda_knockoff: np.ndarray = None


@dataclass(frozen=True)
class SelectionResult:
    selected: np.ndarray
    threshold: float
    q: float
    stats: WStatistics


def select_s(sigma_star):
    """Equicorrelated ``s``: ``min(2 * lambda_min(Sigma*/n), 1) * n``, slightly shrunk.

    ``Sigma*`` is expected to have a common diagonal value ``n`` (columns
    scaled to squared norm ``n``).
    """
    sigma_star = np.asarray(sigma_star, dtype=float)
    m = sigma_star.shape[0]
    scale = float(np.mean(np.diag(sigma_star)))
    if not scale > 0:
        raise NotPDError("Sigma* has a non-positive diagonal")
    lam_min = numerics.sym_eig_min(sigma_star / scale)
    if lam_min <= 1e-10:
        raise NotPDError(f"Sigma* is singular (lambda_min = {lam_min:.3g})")
    return np.full(m, min(2.0 * lam_min, 1.0) * (1.0 - S_SHRINK) * scale)


def gram_residuals(X_tilde, X_star, sigma_star, s):
    """Sup-norm residuals of both knockoff Gram identities."""
    r1 = np.max(np.abs(X_tilde.T @ X_tilde - sigma_star))
    r2 = np.max(np.abs(X_tilde.T @ X_star - (sigma_star - np.diag(s))))
    return float(r1), float(r2)


def gram_tolerance(sigma_star):
    return GRAM_RTOL * (1.0 + np.max(np.abs(sigma_star)))


def construct(problem, s, rng=None):
    """Build the knockoff copy of ``problem.X_star``.

    Raises
    ------
    DimensionTooSmallError
        If fewer than ``2m`` effective rows are available; route the problem
        through :func:`extend_augment` first.
    """
    rng = check_rng(rng)
    s = as_vector(s, "s")
    X_star, sigma = problem.X_star, problem.sigma_star
    n_rows, m = X_star.shape
    if s.shape[0] != m:
        raise InvalidInputError(f"s has length {s.shape[0]}, expected {m}")
    if np.any(s < 0):
        raise InvalidInputError("s must be non-negative")
    if problem.n_effective < 2 * m:
        raise DimensionTooSmallError(
            f"{problem.n_effective} effective rows < 2m = {2 * m}; augment first"
        )
    chol = scipy.linalg.cho_factor(sigma, lower=True)
    sinv_S = scipy.linalg.cho_solve(chol, np.diag(s))
    base = X_star - X_star @ sinv_S
    null = numerics.qr_null_space(np.hstack([X_star, problem.nuisance_basis]))
    if null.shape[1] < m:
        raise DimensionTooSmallError(
            f"null space has dimension {null.shape[1]} < m = {m}"
        )
    # random m-frame inside the null space
    frame, _ = np.linalg.qr(rng.standard_normal((null.shape[1], m)))
    U = null @ frame
    if np.all(s == 0):
        C = np.zeros((m, m))
        jitter = 0.0
    else:
        A = 2.0 * np.diag(s) - np.diag(s) @ sinv_S
        A = 0.5 * (A + A.T)
        L, report = numerics.cholesky_psd(A, jitter_max=1e-8 * (1.0 + np.max(np.abs(A))))
        C = L.T
        jitter = report.jitter_applied
    X_tilde = base + U @ C
    res = gram_residuals(X_tilde, X_star, sigma, s)
    tol = gram_tolerance(sigma)
    if max(res) > tol:
        raise GramCheckError(f"Gram residuals {res} exceed tolerance {tol:.3g}")
    return KnockoffEnsemble(
        X_tilde=X_tilde, s=s, C=C, U=U, construction="gknockoff",
        gram_residuals=res, jitter=jitter,
    )


def pseudo_row_count(problem):
    """Rows to append so that ``2m`` effective rows become available."""
    return max(0, 2 * problem.m - problem.n_effective)


def extend_augment(problem, sigma, rng=None):
    """Append zero design rows with pure-noise responses.

    The response is extended with ``N(0, sigma^2)`` draws and ``M`` with an
    identity block; ``Sigma*`` is unchanged. The number of appended rows is
    ``2m - n_effective``.
    """
    rng = check_rng(rng)
    sigma = float(sigma)
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    m = problem.m
    n_eff = problem.n_effective
    if n_eff >= 2 * m:
        raise InvalidInputError("no augmentation needed: n_effective >= 2m")
    if n_eff <= m:
        raise InvalidInputError("n_effective <= m: use the screening route")
    a = 2 * m - n_eff
    y_star = np.concatenate([problem.y_star, sigma * rng.standard_normal(a)])
    X_star = np.vstack([problem.X_star, np.zeros((a, m))])
    M = scipy.linalg.block_diag(problem.M, np.eye(a))
    basis = np.vstack([problem.nuisance_basis, np.zeros((a, problem.nuisance_basis.shape[1]))])
    diagnostics = dict(problem.diagnostics, pseudo_rows=a, sigma_augment=sigma)
    return dataclasses.replace(
        problem, y_star=y_star, X_star=X_star, M=M, nuisance_basis=basis,
        augmented_rows=problem.augmented_rows + a, diagnostics=diagnostics,
    )


def estimate_sigma(X, y):
    """Unbiased OLS noise standard deviation ``sqrt(RSS / (n - p))``."""
    X, y = check_Xy(X, y)
    n, p = X.shape
    if p == 0:
        return float(np.sqrt(y @ y / n))
    if n <= p:
        raise InvalidInputError(f"need n > p to estimate sigma (n={n}, p={p})")
    if numerics.matrix_rank(X) < p:
        raise RankDeficientError("X is rank deficient")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return float(np.sqrt(resid @ resid / (n - p)))


def reserve_noise_directions(problem, X, fraction=0.5, unpenalized=None, rng=None):
    """Split off residual directions of ``y`` to estimate the noise level.

    The orthogonal complement of ``col([X, unpenalized])`` carries pure noise.
    A ``fraction`` of it is used to estimate ``sigma`` and then added to the
    nuisance basis, so the knockoff frame never touches those directions and
    the estimate is independent of the statistics.

    Returns
    -------
    problem : TransformedProblem
    sigma_hat : float
    """
    rng = check_rng(rng)
    X = np.asarray(X, dtype=float)
    full = X if unpenalized is None else np.hstack([X, np.asarray(unpenalized, float)])
    resid_space = numerics.qr_null_space(full)
    dof = resid_space.shape[1]
    if dof < 1:
        raise InvalidInputError("no residual degrees of freedom to estimate sigma")
    k = min(dof, max(1, int(np.floor(fraction * dof))))
    frame, _ = np.linalg.qr(rng.standard_normal((dof, k)))
    R = resid_space @ frame
    y = problem.y_star[:R.shape[0]]
    sigma_hat = float(np.sqrt(np.sum((R.T @ y) ** 2) / k))
    if problem.augmented_rows:
        R = np.vstack([R, np.zeros((problem.augmented_rows, k))])
    basis = np.hstack([problem.nuisance_basis, R])
    diagnostics = dict(problem.diagnostics, sigma_dof=k)
    return dataclasses.replace(problem, nuisance_basis=basis, diagnostics=diagnostics), sigma_hat


def _signed_max(lam, lam_tilde):
    return np.maximum(lam, lam_tilde) * np.sign(lam - lam_tilde)


def signed_max_from_design(X_star, X_tilde, y, grid=None, grid_count=100, grid_ratio=1e-3):
    """Signed-max entry-time statistics for an arbitrary (original, knockoff) pair."""
    aug = np.hstack([X_star, X_tilde])
    if grid is None:
        grid = lasso.default_grid(aug, y, grid_count, grid_ratio)
    path = lasso.path_entry_times(aug, y, grid)
    m = X_star.shape[1]
    lam, lam_t = path.entry_times[:m], path.entry_times[m:]
    return WStatistics(
        w=_signed_max(lam, lam_t), method="signed_max", grid_hash=grid.digest,
        lambda_original=lam, lambda_knockoff=lam_t,
    )


def lcd_from_design(X_star, X_tilde, y, lam=None, fraction=LCD_FRACTION):
    """Lasso coefficient difference ``|b_j| - |b~_j|`` at a single penalty.

    Without an explicit ``lam`` the penalty is ``fraction`` times the
    smallest penalty that zeroes the augmented fit. That level depends on
    the data only through ``|[X*, Xk]' y|``, which is invariant under
    swapping a feature with its knockoff, so antisymmetry is preserved.
    """
    aug = np.hstack([X_star, X_tilde])
    aug, y = check_Xy(aug, y)
    if lam is None:
        lam = default_lcd_lambda(aug, y, fraction)
    if not lam > 0:
        raise InvalidInputError("LCD penalty must be positive")
    b = lasso.solve_at(aug, y, lam)
    m = X_star.shape[1]
    return WStatistics(w=np.abs(b[:m]) - np.abs(b[m:]), method="lcd",
                       grid_hash=f"lambda={lam:.17g}")


def default_lcd_lambda(aug, y, fraction=LCD_FRACTION):
    """``fraction`` of the smallest penalty that zeroes the augmented fit."""
    if not 0 < fraction <= 1:
        raise InvalidInputError(f"fraction must lie in (0, 1], got {fraction}")
    return fraction * float(np.max(np.abs(aug.T @ y))) / aug.shape[0]


def signed_max_stats(problem, ensemble, grid=None, grid_count=100, grid_ratio=1e-3):
    return signed_max_from_design(problem.X_star, ensemble.X_tilde, problem.y_star,
                                  grid, grid_count, grid_ratio)


def lcd_stats(problem, ensemble, lam=None, fraction=LCD_FRACTION):
    return lcd_from_design(problem.X_star, ensemble.X_tilde, problem.y_star, lam, fraction)


def knockoff_threshold(stats, q, offset=1):
    """Knockoff cutoff and the resulting selection.

    The threshold is the smallest ``t`` among the nonzero ``|w_j|`` with
    ``(offset + #{w_j <= -t}) / max(1, #{w_j >= t}) <= q``; ``inf`` if none
    qualifies. ``offset=1`` is the knockoff+ rule with finite-sample FDR
    control; ``offset=0`` is the plain knockoff rule, which only controls a
    modified FDR but can select fewer than ``1/q`` features.
    """
    q = check_q(q)
    if offset not in (0, 1):
        raise InvalidInputError(f"offset must be 0 or 1, got {offset}")
    w = stats.w if isinstance(stats, WStatistics) else np.asarray(stats, dtype=float)
    if not isinstance(stats, WStatistics):
        stats = WStatistics(w=w, method="custom")
    candidates = np.unique(np.abs(w[w != 0]))
    threshold = np.inf
    if candidates.size:
        ws = np.sort(w)
        n_neg = np.searchsorted(ws, -candidates, side="right")
        n_pos = ws.size - np.searchsorted(ws, candidates, side="left")
        ratio = (offset + n_neg) / np.maximum(n_pos, 1)
        ok = np.nonzero(ratio <= q)[0]
        if ok.size:
            threshold = float(candidates[ok[0]])
    selected = np.nonzero(w >= threshold)[0]
    return SelectionResult(selected=selected, threshold=threshold, q=q, stats=stats)


def knockoff_plus_threshold(stats, q):
    """Knockoff+ cutoff: :func:`knockoff_threshold` with ``offset=1``."""
    return knockoff_threshold(stats, q, offset=1)
