"""Transformation matrices for structural change and the reduced Lasso problem.

A contrast matrix ``D`` (m x p, full row rank) is completed to an invertible
``[D; E]`` whose inverse splits into ``Z`` (p x m) and ``F`` (p x (p - m)).
Projecting out the unpenalized directions ``X F`` turns the generalized
Lasso into an ordinary Lasso on ``(y*, X*) = (M y, M X Z)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import numerics
from ._validation import as_matrix, check_Xy
from .exceptions import InvalidInputError, NotPDError, RankDeficientError

MAX_CONDITION = 1e12
SCENARIOS = ("difference", "integration", "identity", "custom")


@dataclass(frozen=True)
class TransformSpec:
    """A contrast matrix together with its orthonormal completion.

    Attributes
    ----------
    D : ndarray (m, p)
    E : ndarray (p - m, p)
        Orthonormal basis of the complement of ``row(D)``.
    Z, F : ndarray
        Column blocks of ``inv([D; E])``.
    scenario : str
    condition : float
        2-norm condition number of ``[D; E]``.
    """

    D: np.ndarray
    E: np.ndarray
    Z: np.ndarray
    F: np.ndarray
    scenario: str = "custom"
    condition: float = 1.0

    @property
    def m(self):
        return self.D.shape[0]

    @property
    def p(self):
        return self.D.shape[1]

    @property
    def D_tilde(self):
        return np.vstack([self.D, self.E])


@dataclass(frozen=True)
class TransformedProblem:
    """The projected Lasso problem that all knockoff code operates on.

    ``X_star`` columns are rescaled to squared norm ``n`` (the row count of
    the original data); ``col_scales[j]`` is the factor that was divided out,
    so a coefficient ``c_j`` on ``X_star`` corresponds to ``c_j / col_scales[j]``
    on the unscaled contrast ``d_j' beta``.

    ``nuisance_basis`` is an orthonormal basis of every direction that the
    knockoff construction must avoid besides ``col(X_star)``: the projected-out
    unpenalized span, plus any directions reserved for noise estimation.
    """

    y_star: np.ndarray
    X_star: np.ndarray
    M: np.ndarray
    sigma_star: np.ndarray
    col_scales: np.ndarray
    n: int
    m: int
    p: int
    nuisance_basis: np.ndarray
    min_eig: float
    augmented_rows: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_rows(self):
        return self.X_star.shape[0]

    @property
    def n_effective(self):
        """Dimension of ``range(M)``: rows available to the knockoff construction."""
        return self.n_rows - self.nuisance_basis.shape[1]

    def unscale(self, coef):
        return np.asarray(coef) / self.col_scales


@dataclass
class MultiSourceData:
    sources: list

    def __post_init__(self):
        if len(self.sources) == 0:
            raise InvalidInputError("at least one source is required")
        checked = []
        for k, (Xk, yk) in enumerate(self.sources):
            Xk, yk = check_Xy(Xk, yk)
            if Xk.shape[0] < 1:
                raise InvalidInputError(f"source {k} has no rows")
            checked.append((Xk, yk))
        ps = {Xk.shape[1] for Xk, _ in checked}
        if len(ps) != 1:
            raise InvalidInputError(f"sources disagree on p: {sorted(ps)}")
        self.sources = checked

    @property
    def K(self):
        return len(self.sources)

    @property
    def p(self):
        return self.sources[0][0].shape[1]

    @property
    def sizes(self):
        return [Xk.shape[0] for Xk, _ in self.sources]


def difference_matrix(p):
    """First-difference contrasts: row ``j`` is ``beta[j+1] - beta[j]``."""
    p = int(p)
    if p < 2:
        raise InvalidInputError(f"difference matrix needs p >= 2, got {p}")
    D = np.zeros((p - 1, p))
    idx = np.arange(p - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def integration_matrix(K, p):
    """Adjacent-source contrasts: block row ``k`` is ``beta^(k) - beta^(k+1)``."""
    K, p = int(K), int(p)
    if K < 2:
        raise InvalidInputError(f"integration matrix needs K >= 2, got {K}")
    if p < 1:
        raise InvalidInputError(f"integration matrix needs p >= 1, got {p}")
    D = np.zeros(((K - 1) * p, K * p))
    eye = np.eye(p)
    for k in range(K - 1):
        D[k * p:(k + 1) * p, k * p:(k + 1) * p] = eye
        D[k * p:(k + 1) * p, (k + 1) * p:(k + 2) * p] = -eye
    return D


def complete_basis(D, scenario="custom"):
    """Complete ``D`` with an orthonormal basis of the complement of its row space."""
    D = as_matrix(D, "D")
    if scenario not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {scenario!r}")
    m, p = D.shape
    if m == 0 or m > p:
        raise InvalidInputError(f"D must have 1 <= m <= p rows, got shape {D.shape}")
    rank = numerics.matrix_rank(D.T)
    if rank < m:
        raise RankDeficientError(f"D has rank {rank} < {m} rows")
    E = numerics.qr_null_space(D.T).T
    D_tilde = np.vstack([D, E])
    cond = float(np.linalg.cond(D_tilde))
    if cond > MAX_CONDITION:
        raise RankDeficientError(f"completed D is ill-conditioned (cond={cond:.3g})")
    inv = scipy.linalg.solve(D_tilde, np.eye(p))
    return TransformSpec(
        D=D, E=E, Z=inv[:, :m], F=inv[:, m:], scenario=scenario, condition=cond
    )


def spec_for(kind, p, K=None):
    """Convenience constructor for the built-in scenarios."""
    if kind == "difference":
        return complete_basis(difference_matrix(p), "difference")
    if kind == "identity":
        return complete_basis(np.eye(int(p)), "identity")
    if kind == "integration":
        if K is None:
            raise InvalidInputError("integration spec needs K")
        return complete_basis(integration_matrix(K, p), "integration")
    raise InvalidInputError(f"unknown transform kind {kind!r}")


def _unpenalized_block(X, spec, unpenalized):
    XF = X @ spec.F
    if unpenalized is None:
        return XF
    U = as_matrix(unpenalized, "unpenalized")
    if U.shape[0] != X.shape[0]:
        raise InvalidInputError("unpenalized covariates must have one row per sample")
    return np.hstack([XF, U])


def transform(X, y, spec, unpenalized=None):
    """Project out the unpenalized directions and return ``(y*, X*, M, Sigma*)``.

    Parameters
    ----------
    X : array (n, p)
    y : array (n,)
    spec : TransformSpec
    unpenalized : array (n, r), optional
        Extra covariates with shared, unpenalized effects. They are absorbed
        by ``M`` in the same way as the ``X F`` block.
    """
    X, y = check_Xy(X, y)
    n, p = X.shape
    if p != spec.p:
        raise InvalidInputError(f"X has {p} columns but D acts on {spec.p}")
    B = _unpenalized_block(X, spec, unpenalized)
    r = B.shape[1]
    if n <= p + (0 if unpenalized is None else np.shape(unpenalized)[1]):
        raise InvalidInputError(
            f"transform needs n > p + r (n={n}, p={p}); use the screening route"
        )
    if r:
        Q, _, _, rank, _ = numerics._pivoted_qr(B)
        if rank < r:
            raise RankDeficientError(
                f"unpenalized block [XF | extra] has rank {rank} < {r}"
            )
        basis = Q[:, :r]
    else:
        basis = np.zeros((n, 0))
    M = numerics.projection_complement(B)
    y_star = M @ y
    raw = M @ (X @ spec.Z)
    norms = np.sqrt(np.sum(raw ** 2, axis=0))
    if np.any(norms <= 1e-12 * max(1.0, norms.max(initial=0.0))):
        raise RankDeficientError("a transformed column vanished after projection")
    col_scales = norms / np.sqrt(n)
    X_star = raw / col_scales
    sigma_star = X_star.T @ X_star
    sigma_star = 0.5 * (sigma_star + sigma_star.T)
    min_eig = numerics.sym_eig_min(sigma_star / n)
    if min_eig < 1e-10:
        raise NotPDError(
            f"Sigma*/n has minimum eigenvalue {min_eig:.3g}; X must have full column rank"
        )
    return TransformedProblem(
        y_star=y_star,
        X_star=X_star,
        M=M,
        sigma_star=sigma_star,
        col_scales=col_scales,
        n=n,
        m=spec.m,
        p=p,
        nuisance_basis=basis,
        min_eig=min_eig,
        diagnostics={"condition_D_tilde": spec.condition, "min_eig_sigma": min_eig},
    )


def refit(X, y, spec, selected, unpenalized=None):
    """Least squares with contrasts outside ``selected`` constrained to zero.

    Returns
    -------
    beta : ndarray (p,)
    alpha : ndarray (r,)
        Coefficients of the unpenalized covariates (empty if none).
    """
    X, y = check_Xy(X, y)
    selected = np.asarray(sorted(selected), dtype=int)
    B = _unpenalized_block(X, spec, unpenalized)
    design = np.hstack([X @ spec.Z[:, selected], B])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    k = selected.size
    q = spec.F.shape[1]
    beta = spec.Z[:, selected] @ coef[:k] + spec.F @ coef[k:k + q]
    return beta, coef[k + q:]


def stack_multisource(data):
    """Block-diagonal design and concatenated response for ``K`` sources."""
    if not isinstance(data, MultiSourceData):
        data = MultiSourceData(list(data))
    X = scipy.linalg.block_diag(*[Xk for Xk, _ in data.sources])
    y = np.concatenate([yk for _, yk in data.sources])
    return X, y


def unstack_multisource(X, y, sizes, p):
    """Inverse of :func:`stack_multisource`."""
    X, y = check_Xy(X, y)
    bounds = np.cumsum([0] + list(sizes))
    if bounds[-1] != X.shape[0] or X.shape[1] != p * len(sizes):
        raise InvalidInputError("sizes / p do not match the stacked design")
    return MultiSourceData([
        (X[bounds[k]:bounds[k + 1], k * p:(k + 1) * p], y[bounds[k]:bounds[k + 1]])
        for k in range(len(sizes))
    ])
