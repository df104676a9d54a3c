"""End-to-end change detection with automatic routing by sample size.

Let ``n_eff`` be the number of rows left after projecting out the
unpenalized directions (``n - (p - m) - r``). Routing:

* ``n_eff >= 2m``: knockoffs are built directly (``gknockoff``);
* ``m < n_eff < 2m``: residual directions estimate the noise level and
  pseudo rows are appended (``egknockoff``);
* ``n_eff <= m``: rows are split, one half screens change locations and the
  other half runs the knockoff filter on the screened problem (``hgknockoff``).
"""

from dataclasses import dataclass, field

import numpy as np

from . import fusis, knockoffs, structural
from ._validation import as_matrix, check_q, check_rng, check_Xy
from .exceptions import DimensionTooSmallError, InvalidInputError, RoutingError
from .structural import TransformSpec

METHODS = ("auto", "gknockoff", "egknockoff", "hgknockoff")
STATS = ("lcd", "signed_max")


@dataclass
class DetectRequest:
    """Inputs of :func:`detect`.

    ``spec`` defaults to first differences of the columns of ``X``.
    ``split_fraction`` is the share of rows used for screening
    (``hgknockoff``) or the share of residual directions reserved for the
    noise estimate (``egknockoff``). ``offset=1`` is the knockoff+ threshold;
    ``offset=0`` the plain knockoff threshold.
    """

    X: np.ndarray
    y: np.ndarray
    spec: TransformSpec = None
    q: float = 0.2
    method: str = "auto"
    stat: str = "lcd"
    split_fraction: float = 0.5
    seed: int = 0
    screen_config: fusis.ScreenConfig = None
    sigma_override: float = None
    unpenalized: np.ndarray = None
    lcd_fraction: float = knockoffs.LCD_FRACTION
    grid_count: int = 100
    grid_ratio: float = 1e-3
    offset: int = 1

    def __post_init__(self):
        self.X, self.y = check_Xy(self.X, self.y)
        if self.spec is None:
            self.spec = structural.spec_for("difference", self.X.shape[1])
        if self.spec.p != self.X.shape[1]:
            raise InvalidInputError(f"spec acts on {self.spec.p} columns, X has {self.X.shape[1]}")
        self.q = check_q(self.q)
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.stat not in STATS:
            raise InvalidInputError(f"unknown statistic {self.stat!r}")
        if not 0 < self.split_fraction < 1:
            raise InvalidInputError("split_fraction must lie in (0, 1)")
        if self.offset not in (0, 1):
            raise InvalidInputError("offset must be 0 or 1")
        if self.sigma_override is not None and not self.sigma_override > 0:
            raise InvalidInputError("sigma_override must be positive")
        if self.unpenalized is not None:
            self.unpenalized = as_matrix(self.unpenalized, "unpenalized")
            if self.unpenalized.shape[0] != self.X.shape[0]:
                raise InvalidInputError("unpenalized covariates need one row per sample")

    @property
    def n_unpenalized(self):
        return 0 if self.unpenalized is None else self.unpenalized.shape[1]


@dataclass
class DetectReport:
    """Detected contrasts (0-based rows of ``D``) and how they were found."""

    selected: np.ndarray
    threshold: float
    method_used: str
    w_stats: knockoffs.WStatistics = None
    screen_trace: fusis.ScreenResult = None
    sigma_used: float = None
    diagnostics: dict = field(default_factory=dict)


def effective_rows(n, spec, n_unpenalized=0):
    return n - (spec.p - spec.m) - n_unpenalized


def route(n_eff, m):
    if n_eff >= 2 * m:
        return "gknockoff"
    if n_eff > m:
        return "egknockoff"
    return "hgknockoff"


def split_rows(X, y, fraction=0.5, rng=None, return_indices=False):
    """Uniformly random split into ``floor(fraction * n)`` rows and the rest."""
    X, y = check_Xy(X, y)
    rng = check_rng(rng)
    n = X.shape[0]
    if n < 4:
        raise InvalidInputError(f"need at least 4 rows to split, got {n}")
    if not 0 < fraction < 1:
        raise InvalidInputError("fraction must lie in (0, 1)")
    n1 = int(np.floor(fraction * n))
    if n1 < 1 or n1 > n - 1:
        raise InvalidInputError(f"fraction {fraction} leaves an empty half for n={n}")
    perm = rng.permutation(n)
    i1, i2 = np.sort(perm[:n1]), np.sort(perm[n1:])
    halves = ((X[i1], y[i1]), (X[i2], y[i2]))
    if return_indices:
        return halves, (i1, i2)
    return halves


def compute_stats(problem, ensemble, stat="lcd", lcd_fraction=knockoffs.LCD_FRACTION,
                  grid_count=100, grid_ratio=1e-3):
    if stat == "lcd":
        return knockoffs.lcd_stats(problem, ensemble, fraction=lcd_fraction)
    if stat == "signed_max":
        return knockoffs.signed_max_stats(problem, ensemble, None, grid_count, grid_ratio)
    raise InvalidInputError(f"unknown statistic {stat!r}")


def _knockoff_run(req, problem, rng, method, sigma=None):
    s = knockoffs.select_s(problem.sigma_star)
    ens = knockoffs.construct(problem, s, rng)
    w = compute_stats(problem, ens, req.stat, req.lcd_fraction, req.grid_count, req.grid_ratio)
    sel = knockoffs.knockoff_threshold(w, req.q, req.offset)
    diag = dict(problem.diagnostics)
    diag.update(
        n=problem.n, m=problem.m, n_effective=problem.n_effective,
        gram_residuals=list(ens.gram_residuals), jitter=ens.jitter,
        s_over_n=float(s[0] / problem.n) if s.size else 0.0,
    )
    return DetectReport(
        selected=sel.selected, threshold=sel.threshold, method_used=method,
        w_stats=w, sigma_used=sigma, diagnostics=diag,
    )


def _check_explicit(req, n_eff, m, wanted):
    auto = route(n_eff, m)
    order = {"hgknockoff": 0, "egknockoff": 1, "gknockoff": 2}
    if wanted == "gknockoff" and auto != "gknockoff":
        raise RoutingError(f"gknockoff needs n_eff >= 2m (n_eff={n_eff}, m={m})")
    if wanted == "egknockoff" and order[auto] < 1:
        raise RoutingError(f"egknockoff needs n_eff > m (n_eff={n_eff}, m={m})")


def gknockoff(req, rng=None):
    rng = check_rng(req.seed if rng is None else rng)
    problem = structural.transform(req.X, req.y, req.spec, req.unpenalized)
    if problem.n_effective < 2 * problem.m:
        raise RoutingError(
            f"gknockoff needs n_eff >= 2m (n_eff={problem.n_effective}, m={problem.m})"
        )
    return _knockoff_run(req, problem, rng, "gknockoff")


def egknockoff(req, rng=None):
    """Knockoffs after reserving noise directions and appending pseudo rows."""
    rng = check_rng(req.seed if rng is None else rng)
    problem = structural.transform(req.X, req.y, req.spec, req.unpenalized)
    if problem.n_effective <= problem.m:
        raise RoutingError(
            f"egknockoff needs n_eff > m (n_eff={problem.n_effective}, m={problem.m})"
        )
    sigma = req.sigma_override
    if sigma is None:
        problem, sigma = knockoffs.reserve_noise_directions(
            problem, req.X, req.split_fraction, req.unpenalized, rng
        )
        if not sigma > 0:
            raise RoutingError("estimated noise level is zero; pass sigma_override")
        if problem.n_effective <= problem.m:
            raise RoutingError("too few residual directions left after the noise split")
    if problem.n_effective < 2 * problem.m:
        problem = knockoffs.extend_augment(problem, sigma, rng)
    report = _knockoff_run(req, problem, rng, "egknockoff", sigma)
    report.diagnostics["sigma_source"] = "override" if req.sigma_override else "residual_split"
    return report


def hgknockoff(req, rng=None):
    """Screen on one half of the rows, run the knockoff filter on the other.

    The second half is collapsed onto the groups cut by the screened
    breaks (coefficients constant in between), which leaves a difference
    problem with ``|A|`` contrasts; its detections are mapped back to the
    screened locations.
    """
    rng = check_rng(req.seed if rng is None else rng)
    if req.spec.scenario != "difference":
        raise RoutingError("the screening route supports first-difference contrasts only")
    if req.unpenalized is not None:
        raise RoutingError("unpenalized covariates are not supported on the screening route")
    (X1, y1), (X2, y2) = split_rows(req.X, req.y, req.split_fraction, rng)
    n2 = X2.shape[0]
    keep = n2 // 2 - 1
    if keep < 1:
        raise RoutingError(f"second half has too few rows (n2={n2}) to test any location")
    base = req.screen_config or fusis.ScreenConfig(keep_top=keep)
    config = fusis.ScreenConfig(base.bandwidth_grid, None, keep, base.r2_breaks)
    trace = fusis.select_bandwidth(X1, y1, config)
    screened = trace.selected
    diag = {"n1": X1.shape[0], "n2": n2, "keep_top": keep, "screened": int(screened.size)}
    if screened.size == 0:
        return DetectReport(
            selected=np.array([], dtype=int), threshold=np.inf, method_used="hgknockoff",
            screen_trace=trace, diagnostics=diag,
        )
    XQ = fusis.segment_design(X2, screened)
    sub = DetectRequest(
        X=XQ, y=y2, spec=structural.spec_for("difference", XQ.shape[1]), q=req.q,
        method="auto", stat=req.stat, split_fraction=0.5, seed=req.seed,
        sigma_override=req.sigma_override,
        lcd_fraction=req.lcd_fraction, grid_count=req.grid_count, grid_ratio=req.grid_ratio,
        offset=req.offset,
    )
    n_eff = effective_rows(n2, sub.spec)
    if route(n_eff, sub.spec.m) == "hgknockoff":
        raise RoutingError("screened problem is still high-dimensional")
    inner = gknockoff(sub, rng) if route(n_eff, sub.spec.m) == "gknockoff" else egknockoff(sub, rng)
    diag.update(inner.diagnostics)
    return DetectReport(
        selected=screened[inner.selected], threshold=inner.threshold, method_used="hgknockoff",
        w_stats=inner.w_stats, screen_trace=trace, sigma_used=inner.sigma_used,
        diagnostics=diag,
    )


def detect(req):
    """Run the knockoff filter on ``req`` and report the selected contrasts."""
    n_eff = effective_rows(req.X.shape[0], req.spec, req.n_unpenalized)
    m = req.spec.m
    method = route(n_eff, m) if req.method == "auto" else req.method
    if req.method != "auto":
        _check_explicit(req, n_eff, m, method)
    rng = check_rng(req.seed)
    try:
        if method == "gknockoff":
            report = gknockoff(req, rng)
        elif method == "egknockoff":
            report = egknockoff(req, rng)
        else:
            report = hgknockoff(req, rng)
    except DimensionTooSmallError as exc:
        raise RoutingError(str(exc)) from exc
    report.diagnostics.setdefault("route_n_eff", n_eff)
    return report
