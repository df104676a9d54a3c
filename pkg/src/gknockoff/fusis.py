"""Fused sure independence screening of change locations.

Location ``i`` (0-based) stands for a change between ``beta[i]`` and
``beta[i + 1]``, i.e. row ``i`` of the first-difference matrix. For a
bandwidth ``h`` the fused statistic compares the ``h`` marginal
covariances on either side of the location::

    D(i, h) = (1/h) * sum_{t=1..h} |gamma[i - t + 1] - gamma[i + t]|

and is defined for ``h - 1 <= i <= p - 1 - h`` (``p - 2h + 1`` locations).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector, check_Xy
from .exceptions import (
    AllDegenerateError,
    InvalidInputError,
    OutOfRangeError,
    ZeroVarianceWarning,
)

BANDWIDTH_FRACTIONS = (0.01, 0.02, 0.03, 0.04, 0.05)


def default_bandwidths(p):
    """Bandwidths at 1%, 2%, ..., 5% of ``p`` (at least 1, deduplicated)."""
    grid = sorted({max(1, int(round(c * p))) for c in BANDWIDTH_FRACTIONS})
    return tuple(h for h in grid if 2 * h <= p) or (1,)


def default_r2_breaks(n):
    return max(1, (2 * n) // 3)


@dataclass(frozen=True)
class ScreenConfig:
    """Screening settings.

    Exactly one of ``threshold`` (keep ``D >= threshold``) and ``keep_top``
    (keep the largest statistics) is used; ``keep_top`` wins if both are set.

    ``r2_breaks`` caps how many of the top-ranked screened breaks enter the
    segment fit that scores a bandwidth. With many breaks the grouped
    design has nearly as many columns as rows and the in-sample R^2 is
    close to 1 for every bandwidth, so an uncapped score cannot tell them
    apart. ``None`` means ``max(1, floor(2n/3))``; ``0`` disables the cap.
    ``bandwidth_grid=None`` means :func:`default_bandwidths`.
    """

    bandwidth_grid: tuple = None
    threshold: float = None
    keep_top: int = None
    r2_breaks: int = None

    def __post_init__(self):
        if self.bandwidth_grid is not None:
            grid = tuple(int(h) for h in np.atleast_1d(self.bandwidth_grid))
            if not grid:
                raise InvalidInputError("bandwidth_grid must be nonempty")
            if any(h < 1 for h in grid):
                raise InvalidInputError("bandwidths must be >= 1")
            object.__setattr__(self, "bandwidth_grid", grid)
        if self.threshold is None and self.keep_top is None:
            raise InvalidInputError("set either threshold or keep_top")
        if self.keep_top is not None and int(self.keep_top) < 0:
            raise InvalidInputError("keep_top must be non-negative")
        if self.threshold is not None and not self.threshold > 0:
            raise InvalidInputError("threshold must be positive")
        if self.r2_breaks is not None and int(self.r2_breaks) < 0:
            raise InvalidInputError("r2_breaks must be non-negative")

    def grid_for(self, p):
        """The bandwidth grid to use for ``p`` features."""
        if self.bandwidth_grid is None:
            return default_bandwidths(p)
        bad = [h for h in self.bandwidth_grid if 2 * h > p]
        if bad:
            raise InvalidInputError(f"bandwidths {bad} violate 2h <= p = {p}")
        return self.bandwidth_grid


@dataclass(frozen=True)
class ScreenResult:
    """Outcome of screening at the chosen bandwidth.

    ``statistics[k]`` is ``D(first_location + k, h)``; ``selected`` holds
    0-based locations sorted ascending.
    """

    selected: np.ndarray
    statistics: np.ndarray
    chosen_bandwidth: int
    r2_by_bandwidth: np.ndarray
    first_location: int = 0
    candidates: dict = field(default_factory=dict)


def marginal_gammas(X, y):
    """``X_j' y`` for centered, unit-norm columns ``X_j``.

    Constant columns get ``gamma_j = 0`` and raise a :class:`ZeroVarianceWarning`.
    """
    X, y = check_Xy(X, y)
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two rows")
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(Xc ** 2, axis=0))
    flat = norms <= 1e-12 * max(1.0, float(norms.max(initial=0.0)))
    if flat.any():
        warnings.warn(
            f"{int(flat.sum())} constant column(s); their statistics are set to 0",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    safe = np.where(flat, 1.0, norms)
    g = (Xc.T @ y) / safe
    g[flat] = 0.0
    return g


def valid_range(p, h):
    """First and last (inclusive) location with a defined statistic."""
    return h - 1, p - 1 - h


def fused_stat(gammas, j, h):
    """Fused statistic at a single 0-based location."""
    g = as_vector(gammas, "gammas")
    h = int(h)
    lo, hi = valid_range(g.size, h)
    if h < 1 or not lo <= j <= hi:
        raise OutOfRangeError(f"location {j} outside [{lo}, {hi}] for h={h}, p={g.size}")
    t = np.arange(1, h + 1)
    return float(np.mean(np.abs(g[j - t + 1] - g[j + t])))


def fused_stats(gammas, h):
    """Fused statistics at every valid location, in location order."""
    g = as_vector(gammas, "gammas")
    h = int(h)
    p = g.size
    if h < 1 or 2 * h > p:
        raise InvalidInputError(f"bandwidth h={h} needs 1 <= h and 2h <= p={p}")
    lo, hi = valid_range(p, h)
    idx = np.arange(lo, hi + 1)
    total = np.zeros(idx.size)
    for t in range(1, h + 1):
        total += np.abs(g[idx - t + 1] - g[idx + t])
    return total / h


def _rank_top(stats, k):
    # stable sort on -stats keeps the smaller index first among ties
    order = np.argsort(-stats, kind="stable")
    return order[:k]


def screen_stats(stats, first_location, config):
    if config.keep_top is not None:
        keep = _rank_top(stats, min(int(config.keep_top), stats.size))
    else:
        keep = np.nonzero(stats >= config.threshold)[0]
    return np.sort(keep + first_location)


def screen(X, y, h, config):
    """Screened change locations at bandwidth ``h`` (0-based, ascending)."""
    X, y = check_Xy(X, y)
    stats = fused_stats(marginal_gammas(X, y), h)
    return screen_stats(stats, valid_range(X.shape[1], h)[0], config)


def segment_design(X, breaks):
    """Column sums of ``X`` over the groups cut at ``breaks``.

    A break at location ``i`` ends a group after feature ``i``.
    """
    X = as_matrix(X, "X")
    p = X.shape[1]
    breaks = np.unique(np.asarray(breaks, dtype=int))
    if breaks.size and (breaks[0] < 0 or breaks[-1] > p - 2):
        raise OutOfRangeError(f"break locations must lie in [0, {p - 2}]")
    starts = np.concatenate([[0], breaks + 1])
    return np.add.reduceat(X, starts, axis=1)


def segment_r2(X, y, breaks):
    """R^2 of least squares with coefficients constant between breaks.

    Returns ``-inf`` when the grouped design is rank deficient.
    """
    X, y = check_Xy(X, y)
    XQ = segment_design(X, breaks)
    coef, _, rank, _ = np.linalg.lstsq(XQ, y, rcond=None)
    if rank < XQ.shape[1]:
        return -np.inf
    resid = y - XQ @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return -np.inf
    return 1.0 - float(resid @ resid) / tss


def _score_breaks(stats, first_location, selected, cap):
    if cap == 0 or selected.size <= cap:
        return selected
    inside = stats[selected - first_location]
    top = _rank_top(inside, cap)
    return np.sort(selected[top])


def select_bandwidth(X, y, config):
    """Screen at each grid bandwidth and keep the one with the largest R^2.

    Ties go to the smaller bandwidth.

    Raises
    ------
    AllDegenerateError
        If no bandwidth yields a finite R^2.
    """
    X, y = check_Xy(X, y)
    n, p = X.shape
    grid = config.grid_for(p)
    gam = marginal_gammas(X, y)
    cap = config.r2_breaks if config.r2_breaks is not None else default_r2_breaks(n)
    r2 = np.empty(len(grid))
    runs = {}
    for k, h in enumerate(grid):
        stats = fused_stats(gam, h)
        first = valid_range(p, h)[0]
        sel = screen_stats(stats, first, config)
        r2[k] = segment_r2(X, y, _score_breaks(stats, first, sel, int(cap)))
        runs[h] = (sel, stats, first)
    if not np.any(np.isfinite(r2)):
        raise AllDegenerateError("every bandwidth produced a rank-deficient segment fit")
    best = int(np.argmax(r2))  # first maximum is the smallest h on ties
    h = grid[best]
    sel, stats, first = runs[h]
    return ScreenResult(
        selected=sel, statistics=stats, chosen_bandwidth=h, r2_by_bandwidth=r2,
        first_location=first, candidates={g: runs[g][0] for g in runs},
    )


class FusedScreener(BaseEstimator):
    """Estimator wrapper around :func:`select_bandwidth`.

    Parameters
    ----------
    bandwidth_grid : sequence of int, optional
        Defaults to :func:`default_bandwidths`.
    keep_top : int, optional
        Number of locations to keep; defaults to ``n - 1``.
    threshold : float, optional
    r2_breaks : int, optional

    Attributes
    ----------
    selected_ : ndarray
        Screened 0-based change locations.
    bandwidth_ : int
    result_ : ScreenResult
    """

    def __init__(self, bandwidth_grid=None, keep_top=None, threshold=None,
                 r2_breaks=None):
        self.bandwidth_grid = bandwidth_grid
        self.keep_top = keep_top
        self.threshold = threshold
        self.r2_breaks = r2_breaks

    def fit(self, X, y):
        X, y = check_Xy(X, y)
        keep = self.keep_top
        if keep is None and self.threshold is None:
            keep = X.shape[0] - 1
        grid = None if self.bandwidth_grid is None else tuple(self.bandwidth_grid)
        config = ScreenConfig(grid, self.threshold, keep, self.r2_breaks)
        self.result_ = select_bandwidth(X, y, config)
        self.selected_ = self.result_.selected
        self.bandwidth_ = self.result_.chosen_bandwidth
        return self

    def transform(self, X):
        """Segment-sum design for the screened breaks."""
        return segment_design(X, self.selected_)
