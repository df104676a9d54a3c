"""Data-generating processes and a replication engine for FDR/power studies.

Every replication draws its data and its detector randomness from
independent child streams of ``SeedSequence(config.seed)``, so results do
not depend on execution order or on the number of worker processes.
Within a replication all compared methods see the same data set.
"""

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import _jsonio, baselines, fusis, pipeline, structural
from .exceptions import GKnockoffError, InvalidInputError

SCENARIOS = ("piecewise", "integration", "fusis_coverage", "hgk")
COV_KINDS = ("ar", "group")


@dataclass(frozen=True)
class DGPConfig:
    """Simulation settings.

    ``change_locations`` are 0-based rows of the contrast matrix; when
    omitted, piecewise designs place ``J`` changes at ``floor(k p / (J + 1))``
    (1-based positions), and the integration design draws them uniformly
    without replacement in every replication.
    """

    scenario: str = "piecewise"
    n: int = 350
    p: int = 100
    K: int = 5
    J: int = 10
    A: float = 0.1
    rho: float = 0.0
    cov_kind: str = "ar"
    zeta: float = 100.0
    sigma: float = 1.0
    change_locations: tuple = None
    reps: int = 200
    seed: int = 0
    q: float = 0.2

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {self.scenario!r}")
        if self.cov_kind not in COV_KINDS:
            raise InvalidInputError(f"unknown covariance kind {self.cov_kind!r}")
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")
        if not 0 <= self.rho < 1:
            raise InvalidInputError("rho must lie in [0, 1)")
        if self.n < 1 or self.p < 1 or self.J < 0:
            raise InvalidInputError("n, p must be positive and J non-negative")
        if self.A < 0 or not self.sigma > 0:
            raise InvalidInputError("A must be >= 0 and sigma > 0")
        if self.change_locations is not None:
            object.__setattr__(self, "change_locations",
                               tuple(sorted(int(j) for j in self.change_locations)))

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["change_locations"] is not None:
            d["change_locations"] = list(d["change_locations"])
        return d


def gen_covariance(kind, p, rho):
    """AR(1) Toeplitz ``rho^|i-j|`` or ten equal AR(1) diagonal blocks."""
    if not 0 <= rho < 1:
        raise InvalidInputError("rho must lie in [0, 1)")
    if kind == "ar":
        idx = np.arange(p)
        return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)
    if kind == "group":
        if p % 10:
            raise InvalidInputError(f"group covariance needs p divisible by 10, got {p}")
        block = gen_covariance("ar", p // 10, rho)
        return np.kron(np.eye(10), block)
    raise InvalidInputError(f"unknown covariance kind {kind!r}")


def _gaussian_rows(n, p, kind, rho, rng):
    Z = rng.standard_normal((n, p))
    if rho == 0:
        return Z
    L = np.linalg.cholesky(gen_covariance(kind, p, rho))
    return Z @ L.T


def default_locations(p, J):
    """0-based change rows for evenly spaced 1-based positions ``floor(k p / (J + 1))``."""
    if J + 1 > p:
        raise InvalidInputError(f"J + 1 = {J + 1} segments do not fit in p = {p}")
    return tuple((k * p) // (J + 1) - 1 for k in range(1, J + 1))


def piecewise_beta(p, locations, A):
    """Segments alternate ``-A, +A, -A, ...`` between consecutive breaks."""
    locations = sorted(locations)
    if locations and (locations[0] < 0 or locations[-1] > p - 2):
        raise InvalidInputError("change locations must lie in [0, p - 2]")
    beta = np.empty(p)
    bounds = [0] + [j + 1 for j in locations] + [p]
    for k in range(len(bounds) - 1):
        beta[bounds[k]:bounds[k + 1]] = (-1) ** (k + 1) * A
    return beta


def gen_piecewise(config, rng):
    """Returns ``(X, y, S)`` with ``S`` the 0-based change rows (empty if ``A = 0``)."""
    locs = config.change_locations
    if locs is None:
        locs = default_locations(config.p, config.J)
    beta = piecewise_beta(config.p, locs, config.A)
    X = _gaussian_rows(config.n, config.p, config.cov_kind, config.rho, rng)
    y = X @ beta + config.sigma * rng.standard_normal(config.n)
    truth = np.array(locs if config.A > 0 else (), dtype=int)
    return X, y, truth


def integration_beta(K, p, changes, A):
    """Stacked coefficients; a change ``(k, j)`` sets ``beta^(k+1)_j = -beta^(k)_j``."""
    B = np.empty((K, p))
    B[0] = A
    flip = np.zeros((K - 1, p), dtype=bool)
    for k, j in changes:
        flip[k, j] = True
    for k in range(K - 1):
        B[k + 1] = np.where(flip[k], -B[k], B[k])
    return B.ravel()


def gen_integration(config, rng):
    """Returns ``(MultiSourceData, S)``; row ``k p + j`` of ``S`` means source ``k`` vs ``k + 1``."""
    K, p, J = config.K, config.p, config.J
    if K < 2:
        raise InvalidInputError("integration needs K >= 2")
    if J > (K - 1) * p:
        raise InvalidInputError(f"J = {J} exceeds the {(K - 1) * p} adjacent pairs")
    if config.change_locations is not None:
        rows = np.array(config.change_locations, dtype=int)
    else:
        rows = np.sort(rng.choice((K - 1) * p, size=J, replace=False))
    beta = integration_beta(K, p, [(r // p, r % p) for r in rows], config.A)
    sizes = np.maximum(rng.poisson(config.zeta, size=K), 1)
    sources = []
    for k in range(K):
        Xk = rng.standard_normal((sizes[k], p))
        yk = Xk @ beta[k * p:(k + 1) * p] + config.sigma * rng.standard_normal(sizes[k])
        sources.append((Xk, yk))
    truth = rows if config.A > 0 else np.array([], dtype=int)
    return structural.MultiSourceData(sources), truth


def generate(config, rng):
    """Stacked data, contrast spec and truth for any scenario."""
    if config.scenario == "integration":
        data, truth = gen_integration(config, rng)
        X, y = structural.stack_multisource(data)
        spec = structural.spec_for("integration", config.p, config.K)
        return X, y, spec, truth
    X, y, truth = gen_piecewise(config, rng)
    return X, y, structural.spec_for("difference", config.p), truth


def gen_grouped_profile(rng, groups=23, rows_per_group=60, positions=(1, 5, 15, 22),
                        jump=3.0, base=1.0, shared=(0.5, -0.3), sigma=1.0):
    """Grouped data with group-specific slopes and shared covariate effects.

    The slope starts at ``base`` and moves by ``jump`` (alternating up and
    down) after each group listed in ``positions`` (1-based, so position
    ``t`` is a change between groups ``t`` and ``t + 1``).

    Returns
    -------
    columns : dict
        ``group`` (labels ``g01``, ``g02``, ...), ``x``, ``z1``, ``z2``, ... and ``y``.
    slopes : ndarray (groups,)
    """
    positions = sorted(int(t) for t in positions)
    if positions and (positions[0] < 1 or positions[-1] > groups - 1):
        raise InvalidInputError(f"positions must lie in [1, {groups - 1}]")
    slopes = np.empty(groups)
    level, sign = base, 1.0
    for k in range(groups):
        slopes[k] = level
        if k + 1 in positions:
            level += sign * jump
            sign = -sign
    g = np.repeat(np.arange(groups), rows_per_group)
    n = g.size
    x = rng.standard_normal(n)
    Z = rng.standard_normal((n, len(shared)))
    y = slopes[g] * x + Z @ np.asarray(shared, dtype=float) + sigma * rng.standard_normal(n)
    width = len(str(groups))
    cols = {"group": [f"g{k + 1:0{width}d}" for k in g], "x": x}
    for j in range(Z.shape[1]):
        cols[f"z{j + 1}"] = Z[:, j]
    cols["y"] = y
    return cols, slopes


def fdp_tpp(selected, truth):
    """False discovery and true positive proportions with ``0/0 = 0``."""
    sel, true = set(np.asarray(selected).tolist()), set(np.asarray(truth).tolist())
    fdp = len(sel - true) / len(sel) if sel else 0.0
    tpp = len(sel & true) / len(true) if true else 0.0
    return fdp, tpp


# -- detectors --------------------------------------------------------------
# Detectors are picklable callables ``det(X, y, spec, seed) -> selected``.


@dataclass(frozen=True)
class KnockoffDetector:
    q: float = 0.2
    stat: str = "lcd"
    method: str = "auto"
    sigma_override: float = None
    lcd_fraction: float = 0.1

    def __call__(self, X, y, spec, seed):
        req = pipeline.DetectRequest(
            X=X, y=y, spec=spec, q=self.q, method=self.method, stat=self.stat,
            seed=seed, sigma_override=self.sigma_override, lcd_fraction=self.lcd_fraction,
        )
        return pipeline.detect(req).selected


@dataclass(frozen=True)
class BYDetector:
    q: float = 0.2

    def __call__(self, X, y, spec, seed):
        return baselines.by_procedure(X, y, spec, self.q)


@dataclass(frozen=True)
class PermutationDetector:
    q: float = 0.2
    stat: str = "lcd"

    def __call__(self, X, y, spec, seed):
        problem = structural.transform(X, y, spec)
        return baselines.permutation_filter(problem, self.q, self.stat,
                                            rng=np.random.default_rng(seed)).selected


@dataclass(frozen=True)
class ScreenedBYDetector:
    """Split rows, screen on one half, B-Y on the collapsed other half."""

    q: float = 0.2
    split_fraction: float = 0.5

    def __call__(self, X, y, spec, seed):
        rng = np.random.default_rng(seed)
        (X1, y1), (X2, y2) = pipeline.split_rows(X, y, self.split_fraction, rng)
        keep = X2.shape[0] // 2 - 1
        screened = fusis.select_bandwidth(X1, y1, fusis.ScreenConfig(keep_top=keep)).selected
        if screened.size == 0:
            return screened
        XQ = fusis.segment_design(X2, screened)
        D = structural.difference_matrix(XQ.shape[1])
        return screened[baselines.by_procedure(XQ, y2, D, self.q)]


@dataclass(frozen=True)
class FixedDetector:
    """Returns the same selection every time (oracle and empty controls)."""

    selection: tuple = ()

    def __call__(self, X, y, spec, seed):
        return np.array(self.selection, dtype=int)


def make_detector(name, q=0.2, stat="lcd", **kwargs):
    if name in ("gknockoff", "knockoff"):
        return KnockoffDetector(q=q, stat=stat, **kwargs)
    if name == "by":
        return BYDetector(q=q)
    if name == "permutation":
        return PermutationDetector(q=q, stat=stat)
    if name == "screened_by":
        return ScreenedBYDetector(q=q, **kwargs)
    if name == "empty":
        return FixedDetector(())
    raise InvalidInputError(f"unknown detector {name!r}")


# -- studies ----------------------------------------------------------------


@dataclass
class StudyReport:
    """Per-replication outcomes and their averages.

    Failed replications are kept in ``per_rep`` with an ``error`` entry and
    excluded from the averages. Standard errors are ``None`` with fewer
    than two successful replications.
    """

    method: str
    per_rep: list
    fdr_hat: float
    power_hat: float
    se_fdr: float
    se_power: float
    config: dict
    elapsed: float = 0.0
    n_failed: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), None
    if v.size < 2:
        return float(v.mean()), None
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def summarize(method, per_rep, config, elapsed=0.0):
    ok = [r for r in per_rep if r.get("error") is None]
    fdr, se_f = _mean_se([r["fdp"] for r in ok])
    power, se_p = _mean_se([r["tpp"] for r in ok])
    return StudyReport(
        method=method, per_rep=per_rep, fdr_hat=fdr, power_hat=power, se_fdr=se_f,
        se_power=se_p, config=config, elapsed=elapsed, n_failed=len(per_rep) - len(ok),
    )


def replication_seeds(seed, reps):
    """``(data_seed, detector_seed)`` pairs from independent child streams."""
    children = np.random.SeedSequence(int(seed)).spawn(int(reps))
    out = []
    for child in children:
        data, det = child.spawn(2)
        out.append((int(data.generate_state(1, np.uint64)[0]),
                    int(det.generate_state(1, np.uint64)[0])))
    return out


def _one_rep(config, index, seeds, detectors):
    data_seed, det_seed = seeds
    X, y, spec, truth = generate(config, np.random.default_rng(data_seed))
    results = {}
    for name, det in detectors.items():
        rec = {"rep": index, "selected": [], "fdp": None, "tpp": None, "error": None}
        try:
            sel = np.asarray(det(X, y, spec, det_seed), dtype=int)
            fdp, tpp = fdp_tpp(sel, truth)
            rec.update(selected=sorted(sel.tolist()), fdp=fdp, tpp=tpp)
        except (GKnockoffError, ValueError, np.linalg.LinAlgError) as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        results[name] = rec
    return results


def run_comparison(config, detectors, n_jobs=1):
    """Run every detector on the same replications.

    Returns
    -------
    dict
        ``{name: StudyReport}``
    """
    if not detectors:
        raise InvalidInputError("no detectors given")
    start = time.perf_counter()
    seeds = replication_seeds(config.seed, config.reps)
    if n_jobs == 1:
        rows = [_one_rep(config, i, s, detectors) for i, s in enumerate(seeds)]
    else:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_one_rep)(config, i, s, detectors) for i, s in enumerate(seeds)
        )
    elapsed = time.perf_counter() - start
    echo = config.to_dict()
    return {
        name: summarize(name, [r[name] for r in rows], echo, elapsed)
        for name in detectors
    }


def run_study(config, detector, n_jobs=1, name="detector"):
    return run_comparison(config, {name: detector}, n_jobs)[name]


def sweep(config, param, values, detectors, n_jobs=1):
    """Run a comparison for each value of one config field.

    Returns ``{name: [row, ...]}`` with rows holding ``sweep_value``,
    ``fdr_hat``, ``se_fdr``, ``power_hat``, ``se_power``.
    """
    if param not in {f.name for f in dataclasses.fields(DGPConfig)}:
        raise InvalidInputError(f"unknown sweep parameter {param!r}")
    curves = {name: [] for name in detectors}
    reports = []
    for v in values:
        cfg = dataclasses.replace(config, **{param: v})
        out = run_comparison(cfg, detectors, n_jobs)
        reports.append(out)
        for name, rep in out.items():
            curves[name].append({
                "sweep_value": v, "fdr_hat": rep.fdr_hat, "se_fdr": rep.se_fdr,
                "power_hat": rep.power_hat, "se_power": rep.se_power,
            })
    return curves, reports


@dataclass
class CoverageReport:
    """Screening coverage of the true change rows.

    ``coverage`` is the mean fraction of true changes kept per replication;
    ``coverage_all`` the fraction of replications keeping every change.
    """

    coverage: float
    coverage_all: float
    per_rep: list
    bandwidths: list
    config: dict = field(default_factory=dict)


def coverage_study(config, bandwidth=None, bandwidth_grid=None, keep_top=None, n_jobs=1):
    """Coverage of top-``keep_top`` screening (default ``n - 1``).

    With ``bandwidth`` fixed, that bandwidth is used; otherwise it is chosen
    per replication by R^2 over ``bandwidth_grid``.
    """
    keep = config.n - 1 if keep_top is None else int(keep_top)
    seeds = replication_seeds(config.seed, config.reps)

    def one(index, seed_pair):
        X, y, truth = gen_piecewise(config, np.random.default_rng(seed_pair[0]))
        if bandwidth is not None:
            h = int(bandwidth)
            sel = fusis.screen(X, y, h, fusis.ScreenConfig(keep_top=keep))
        else:
            grid = None if bandwidth_grid is None else tuple(bandwidth_grid)
            res = fusis.select_bandwidth(X, y, fusis.ScreenConfig(grid, keep_top=keep))
            sel, h = res.selected, res.chosen_bandwidth
        hit = np.isin(truth, sel)
        return {"rep": index, "covered": float(hit.mean()) if truth.size else 1.0,
                "all": bool(hit.all()), "bandwidth": h}

    if n_jobs == 1:
        rows = [one(i, s) for i, s in enumerate(seeds)]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(one)(i, s) for i, s in enumerate(seeds))
    return CoverageReport(
        coverage=float(np.mean([r["covered"] for r in rows])),
        coverage_all=float(np.mean([r["all"] for r in rows])),
        per_rep=rows, bandwidths=[r["bandwidth"] for r in rows], config=config.to_dict(),
    )


def report_json(obj, **extra):
    """Stable-key JSON with 17 significant digits for floats."""
    payload = obj.to_dict() if hasattr(obj, "to_dict") else obj
    if extra:
        payload = dict(payload, **extra)
    return _jsonio.dumps(payload)
