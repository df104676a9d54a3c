"""Seeded property suites for the knockoff machinery.

Each suite returns a :class:`SuiteResult` with the per-case residuals, not
only a pass flag, so failures can be diagnosed from the JSON log written by
:func:`write_log`.
"""

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _jsonio, knockoffs, lasso, simulation, structural
from .exceptions import ConvergenceWarning

GRAM_TOL = 1e-6
SWAP_TOL = 1e-6


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    max_residual: float
    tolerance: float
    residuals: list = field(default_factory=list)
    counterexample: object = None
    elapsed: float = 0.0

    def to_dict(self):
        return asdict(self)


def _finish(name, residuals, tol, start, counterexample=None):
    res = [float(r) for r in residuals]
    worst = max(res) if res else 0.0
    return SuiteResult(
        name=name, passed=worst <= tol and counterexample is None, cases=len(res),
        max_residual=worst, tolerance=tol, residuals=res, counterexample=counterexample,
        elapsed=time.perf_counter() - start,
    )


def random_instance(rng, n=40, m=10, rho=None):
    """A transformed first-difference problem with ``m`` contrasts and its knockoff."""
    p = m + 1
    rho = rng.uniform(0.0, 0.6) if rho is None else rho
    L = np.linalg.cholesky(simulation.gen_covariance("ar", p, rho))
    X = rng.standard_normal((n, p)) @ L.T
    beta = np.repeat(rng.choice([-1.0, 1.0], size=3), [p // 3, p // 3, p - 2 * (p // 3)])
    y = X @ beta + rng.standard_normal(n)
    spec = structural.spec_for("difference", p)
    problem = structural.transform(X, y, spec)
    s = knockoffs.select_s(problem.sigma_star)
    ens = knockoffs.construct(problem, s, rng)
    return problem, ens


def swap_columns(A, B, G):
    """Exchange columns ``G`` between ``A`` and ``B``."""
    A2, B2 = A.copy(), B.copy()
    G = np.asarray(list(G), dtype=int)
    A2[:, G], B2[:, G] = B[:, G], A[:, G]
    return A2, B2


def _random_swap(rng, m):
    k = rng.integers(0, m + 1)
    return np.sort(rng.choice(m, size=k, replace=False))


def exchangeability_gram_suite(seed=0, instances=100, n=40, m=10, tol=GRAM_TOL):
    """``[X*, Xk]_swap' M [X*, Xk]_swap`` equals the unswapped matrix.

    The first two instances use the empty and the full swap set.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    residuals = []
    for i in range(instances):
        problem, ens = random_instance(rng, n, m)
        if i == 0:
            G = np.array([], dtype=int)
        elif i == 1:
            G = np.arange(m)
        else:
            G = _random_swap(rng, m)
        aug = np.hstack([problem.X_star, ens.X_tilde])
        A, B = swap_columns(problem.X_star, ens.X_tilde, G)
        swapped = np.hstack([A, B])
        lhs = swapped.T @ problem.M @ swapped
        rhs = aug.T @ problem.M @ aug
        residuals.append(np.max(np.abs(lhs - rhs)))
    return _finish("exchangeability_gram", residuals, tol, start)


def projection_invariance_suite(seed=0, instances=100, n=40, m=10):
    """``M Xk`` satisfies both knockoff Gram identities.

    The residual is the larger identity residual divided by the tolerance
    used in construction, so the suite passes when the residual is <= 1.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    residuals = []
    for _ in range(instances):
        problem, ens = random_instance(rng, n, m)
        MX = problem.M @ ens.X_tilde
        r = knockoffs.gram_residuals(MX, problem.X_star, problem.sigma_star, ens.s)
        residuals.append(max(r) / knockoffs.gram_tolerance(problem.sigma_star))
    return _finish("projection_invariance", residuals, 1.0, start)


def enumerate_threshold(w, q, offset=1):
    """Brute-force knockoff threshold: scan every candidate ``t``."""
    w = np.asarray(w, dtype=float)
    best = np.inf
    for t in set(np.abs(w[w != 0]).tolist()):
        ratio = (offset + np.sum(w <= -t)) / max(1, np.sum(w >= t))
        if ratio <= q and t < best:
            best = t
    return best


def threshold_oracle_suite(seed=0, vectors=1000, max_len=12):
    """The vectorized threshold equals enumeration on random ``W`` with ties."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    residuals, bad = [], None
    for _ in range(vectors):
        d = int(rng.integers(1, max_len + 1))
        w = rng.integers(-5, 6, size=d).astype(float)
        q = float(rng.choice([0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0]))
        offset = int(rng.integers(0, 2))
        got = knockoffs.knockoff_threshold(w, q, offset).threshold
        want = enumerate_threshold(w, q, offset)
        same = got == want
        residuals.append(0.0 if same else 1.0)
        if not same and bad is None:
            bad = {"w": w.tolist(), "q": q, "offset": offset, "got": got, "want": want}
    return _finish("threshold_oracle", residuals, 0.0, start, bad)


def kkt_suite(seed=0, instances=50, tol=lasso.KKT_TOL):
    """KKT residuals of single-penalty solves on random knockoff-augmented designs."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    residuals = []
    for _ in range(instances):
        problem, ens = random_instance(rng)
        aug = np.hstack([problem.X_star, ens.X_tilde])
        y = problem.y_star
        lam_max = float(np.max(np.abs(aug.T @ y))) / aug.shape[0]
        lam = lam_max * float(rng.uniform(0.01, 1.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            b = lasso.solve_at(aug, y, lam)
        residuals.append(lasso.kkt_residual(aug, y, b, lam))
    return _finish("kkt", residuals, tol, start)


def swap_antisymmetry_suite(seed=0, instances=50, stat="lcd", tol=SWAP_TOL):
    """Swapping a set ``G`` flips the sign of ``W`` on ``G`` and nothing else."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    residuals = []
    for _ in range(instances):
        problem, ens = random_instance(rng)
        G = _random_swap(rng, problem.m)
        A, B = swap_columns(problem.X_star, ens.X_tilde, G)
        if stat == "lcd":
            w = knockoffs.lcd_from_design(problem.X_star, ens.X_tilde, problem.y_star).w
            ws = knockoffs.lcd_from_design(A, B, problem.y_star).w
        else:
            grid = lasso.default_grid(np.hstack([problem.X_star, ens.X_tilde]), problem.y_star)
            w = knockoffs.signed_max_from_design(problem.X_star, ens.X_tilde,
                                                 problem.y_star, grid).w
            ws = knockoffs.signed_max_from_design(A, B, problem.y_star, grid).w
        flip = np.ones(problem.m)
        flip[G] = -1.0
        residuals.append(np.max(np.abs(ws - flip * w)))
    return _finish(f"swap_antisymmetry_{stat}", residuals, tol, start)


def mc_fdr_gate(config, detector, name="detector", n_jobs=1):
    """Monte-Carlo FDR check: passes when ``fdr_hat <= q + 2 SE``.

    The residual is ``fdr_hat - q - 2 SE`` (negative when passing).
    """
    start = time.perf_counter()
    rep = simulation.run_study(config, detector, n_jobs, name)
    se = rep.se_fdr or 0.0
    excess = rep.fdr_hat - config.q - 2.0 * se
    return _finish(f"mc_fdr_{name}", [excess], 0.0, start), rep


def run_all(seed=0):
    """Every deterministic suite at its default size."""
    return [
        exchangeability_gram_suite(seed),
        projection_invariance_suite(seed),
        threshold_oracle_suite(seed),
        kkt_suite(seed),
        swap_antisymmetry_suite(seed, stat="lcd"),
        swap_antisymmetry_suite(seed, instances=10, stat="signed_max"),
    ]


def write_log(results, path):
    """JSON residual log of a list of :class:`SuiteResult`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_jsonio.dumps({"suites": [r.to_dict() for r in results]}))
        fh.write("\n")


__all__ = [
    "SuiteResult", "enumerate_threshold", "exchangeability_gram_suite",
    "kkt_suite", "projection_invariance_suite", "mc_fdr_gate", "random_instance", "run_all",
    "swap_antisymmetry_suite", "swap_columns", "threshold_oracle_suite", "write_log",
]
