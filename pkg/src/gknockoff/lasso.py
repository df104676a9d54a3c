"""Coordinate-descent Lasso with warm-started paths over a log-spaced grid.

Objective: ``(1/2n) ||y - X b||^2 + lam * ||b||_1``. The solver works on the
Gram form ``G = X'X/n``, ``c = X'y/n`` and stops when the KKT residual drops
below ``tol`` (absolute, on the ``X_j'(y - Xb)/n`` scale).
"""

import hashlib
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from sklearn.exceptions import ConvergenceWarning as SklearnConvergenceWarning
from sklearn.linear_model import lars_path_gram

from ._validation import as_vector, check_Xy
from .exceptions import ConvergenceWarning, InvalidInputError

KKT_TOL = 1e-7
ACTIVE_TOL = 1e-7
TIE_TOL = 1e-10
MAX_SWEEPS = 100_000


@numba.njit(cache=True)
def _kkt(r, b, lam):
    worst = 0.0
    for j in range(b.shape[0]):
        if b[j] > 0.0:
            v = abs(r[j] - lam)
        elif b[j] < 0.0:
            v = abs(r[j] + lam)
        else:
            v = abs(r[j]) - lam
        if v > worst:
            worst = v
    return worst


@numba.njit(cache=True)
def _update(G, r, b, j, lam):
    gjj = G[j, j]
    bj = b[j]
    z = r[j] + gjj * bj
    if z > lam:
        nb = (z - lam) / gjj
    elif z < -lam:
        nb = (z + lam) / gjj
    else:
        nb = 0.0
    delta = nb - bj
    if delta != 0.0:
        row = G[j]
        for k in range(r.shape[0]):
            r[k] -= row[k] * delta
        b[j] = nb
    return abs(delta)


@numba.njit(cache=True)
def _cd_gram(G, c, lam, b, tol, max_sweeps):
    d = b.shape[0]
    r = c - G @ b
    sweeps = 0
    viol = _kkt(r, b, lam)
    while sweeps < max_sweeps:
        for j in range(d):
            _update(G, r, b, j, lam)
        sweeps += 1
        r = c - G @ b
        viol = _kkt(r, b, lam)
        if viol <= tol:
            break
        # inner passes restricted to the current support
        active = np.nonzero(b)[0]
        for _ in range(1000):
            if sweeps >= max_sweeps:
                break
            biggest = 0.0
            for j in active:
                step = _update(G, r, b, j, lam)
                if step > biggest:
                    biggest = step
            sweeps += 1
            worst = 0.0
            for j in active:
                if b[j] > 0.0:
                    v = abs(r[j] - lam)
                elif b[j] < 0.0:
                    v = abs(r[j] + lam)
                else:
                    v = abs(r[j]) - lam
                if v > worst:
                    worst = v
            if worst <= 0.25 * tol or biggest == 0.0:
                break
    if viol > tol:
        viol = _kkt(c - G @ b, b, lam)
    return b, sweeps, viol


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    lambda_max: float
    ratio: float

    @property
    def count(self):
        return self.values.shape[0]

    @property
    def digest(self):
        return hashlib.sha1(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class PathSolution:
    grid: LambdaGrid
    coefficients: np.ndarray
    entry_times: np.ndarray
    converged: np.ndarray
    kkt: np.ndarray


def make_grid(lambda_max, count=100, ratio=1e-3):
    if not lambda_max > 0:
        raise InvalidInputError("lambda_max must be positive")
    if not 0 < ratio < 1:
        raise InvalidInputError(f"ratio must lie in (0, 1), got {ratio}")
    count = int(count)
    if count < 1:
        raise InvalidInputError("grid needs at least one point")
    if count == 1:
        values = np.array([lambda_max])
    else:
        values = lambda_max * np.logspace(0.0, np.log10(ratio), count)
        values[0] = lambda_max
        values[-1] = lambda_max * ratio
    return LambdaGrid(values=values, lambda_max=float(lambda_max), ratio=float(ratio))


def default_grid(X, y, count=100, ratio=1e-3):
    """Log-spaced grid from the smallest all-zero penalty down by ``ratio``."""
    X, y = check_Xy(X, y)
    lambda_max = float(np.max(np.abs(X.T @ y), initial=0.0)) / X.shape[0]
    if lambda_max <= 0.0:
        raise InvalidInputError("X'y = 0: the Lasso path is identically zero")
    return make_grid(lambda_max, count, ratio)


def lasso_objective(X, y, b, lam):
    resid = y - X @ b
    return 0.5 * resid @ resid / X.shape[0] + lam * np.sum(np.abs(b))


def kkt_residual(X, y, b, lam):
    """Largest violation of the Lasso optimality conditions at ``b``."""
    X, y = check_Xy(X, y)
    r = X.T @ (y - X @ b) / X.shape[0]
    return float(_kkt(r, np.asarray(b, dtype=float), float(lam)))


def _gram(X, y):
    n = X.shape[0]
    G = np.ascontiguousarray(X.T @ X / n)
    c = X.T @ y / n
    return G, c


def _solve_gram(G, c, lam, warm_start, tol, max_sweeps):
    b = np.zeros(G.shape[0]) if warm_start is None else np.array(warm_start, dtype=float)
    b, sweeps, viol = _cd_gram(G, c, float(lam), b, float(tol), int(max_sweeps))
    return b, sweeps, viol


def solve_at(X, y, lam, warm_start=None, tol=KKT_TOL, max_sweeps=MAX_SWEEPS,
             engine="homotopy"):
    """Lasso minimizer at a single penalty level.

    The default engine starts coordinate descent from the exact homotopy
    solution, which keeps strongly collinear designs (original/knockoff
    pairs) cheap. ``engine="cd"`` starts from ``warm_start`` (or zero)
    instead. A :class:`ConvergenceWarning` is emitted, and the last iterate
    returned, if ``max_sweeps`` passes do not reach the KKT tolerance.
    """
    X, y = check_Xy(X, y)
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    if engine not in ("homotopy", "cd"):
        raise InvalidInputError(f"unknown engine {engine!r}")
    if warm_start is not None:
        warm_start = as_vector(warm_start, "warm_start")
    if np.any(np.sum(X ** 2, axis=0) == 0):
        raise InvalidInputError("X has an all-zero column")
    G, c = _gram(X, y)
    if engine == "homotopy" and lam > 0:
        lam_max = float(np.max(np.abs(c)))
        if lam >= lam_max:
            warm_start = np.zeros(X.shape[1])
        else:
            grid = LambdaGrid(values=np.array([lam]), lambda_max=lam_max, ratio=lam / lam_max)
            warm_start = _homotopy_at(G, c, X.shape[0], grid)[0]
    b, _, viol = _solve_gram(G, c, lam, warm_start, tol, max_sweeps)
    if viol > tol:
        warnings.warn(
            f"coordinate descent stopped with KKT residual {viol:.2e} at lambda={lam:.4g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return b


def _homotopy_at(G, c, n, grid):
    """Exact Lasso solutions at the grid values from the piecewise-linear path."""
    with warnings.catch_warnings():
        # duplicated columns make LARS drop a regressor; the CD polish fixes it up
        warnings.simplefilter("ignore", SklearnConvergenceWarning)
        alphas, _, coefs = lars_path_gram(
            Xy=c * n, Gram=G * n, n_samples=n, method="lasso",
            alpha_min=float(grid.values[-1]), max_iter=50 * G.shape[0],
        )
    # alphas are decreasing; np.interp wants increasing abscissae
    xs = alphas[::-1]
    out = np.empty((grid.count, G.shape[0]))
    lam = np.clip(grid.values, xs[0], xs[-1])
    for j in range(G.shape[0]):
        out[:, j] = np.interp(lam, xs, coefs[j, ::-1])
    return out


def path_entry_times(X, y, grid, tol=KKT_TOL, max_sweeps=MAX_SWEEPS, engine="homotopy"):
    """Lasso solutions over ``grid`` and each feature's entry time.

    ``entry_times[j]`` is the largest grid value at which feature ``j`` is
    active: ``|b_j| > 1e-7``, or ``j`` attains the maximal absolute
    correlation ``|X_j'(y - Xb)/n| = lambda`` (within 1e-10). The second
    clause depends only on the (unique) fitted values, so exactly collinear
    columns enter together. Features never active on the grid get 0.

    With ``engine="homotopy"`` the grid solutions are read off the exact
    piecewise-linear path and polished by coordinate descent; with
    ``engine="cd"`` coordinate descent is warm-started down the grid.
    Either way every grid solution is checked against the KKT tolerance.
    """
    X, y = check_Xy(X, y)
    if engine not in ("homotopy", "cd"):
        raise InvalidInputError(f"unknown engine {engine!r}")
    if np.any(np.sum(X ** 2, axis=0) == 0):
        raise InvalidInputError("X has an all-zero column")
    n = X.shape[0]
    G, c = _gram(X, y)
    d = X.shape[1]
    starts = _homotopy_at(G, c, n, grid) if engine == "homotopy" else None
    coefs = np.zeros((grid.count, d))
    converged = np.ones(grid.count, dtype=bool)
    kkt = np.zeros(grid.count)
    entry = np.zeros(d)
    b = np.zeros(d)
    for i, lam in enumerate(grid.values):
        warm = b if starts is None else starts[i]
        b, _, viol = _solve_gram(G, c, lam, warm, tol, max_sweeps)
        coefs[i] = b
        kkt[i] = viol
        converged[i] = viol <= tol
        corr = np.abs(c - G @ b)
        active = (np.abs(b) > ACTIVE_TOL) | (corr >= lam - TIE_TOL)
        newly = (entry == 0.0) & active
        entry[newly] = lam
    if not converged.all():
        warnings.warn(
            f"{int((~converged).sum())} grid points did not meet the KKT tolerance",
            ConvergenceWarning,
            stacklevel=2,
        )
    return PathSolution(grid=grid, coefficients=coefs, entry_times=entry,
                        converged=converged, kkt=kkt)
