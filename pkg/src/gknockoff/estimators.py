"""scikit-learn style wrappers around :func:`gknockoff.pipeline.detect`."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import pipeline, structural
from ._validation import as_matrix, check_Xy
from .exceptions import InvalidInputError

CONTRASTS = ("difference", "integration", "identity")


class GKnockoffFilter(BaseEstimator):
    """Select structural changes with knockoff FDR control.

    Parameters
    ----------
    q : float, default=0.2
        Target false discovery rate.
    contrast : {"difference", "integration", "identity"}, default="difference"
        Which contrasts of the coefficients are tested. ``"integration"``
        expects the block-diagonal design of ``n_sources`` stacked sources.
    n_sources : int, optional
        Number of sources for ``contrast="integration"``.
    method : {"auto", "gknockoff", "egknockoff", "hgknockoff"}, default="auto"
    stat : {"lcd", "signed_max"}, default="lcd"
    offset : {0, 1}, default=1
        1 for the knockoff+ threshold, 0 for the plain knockoff threshold.
    split_fraction : float, default=0.5
    sigma : float, optional
        Known noise level; skips the residual estimate of ``egknockoff``.
    lcd_fraction : float, default=0.1
    random_state : int, default=0

    Attributes
    ----------
    selected_ : ndarray
        0-based indices of the selected contrasts.
    threshold_ : float
    method_used_ : str
    report_ : DetectReport
    spec_ : TransformSpec
    """

    def __init__(self, q=0.2, contrast="difference", n_sources=None, method="auto",
                 stat="lcd", offset=1, split_fraction=0.5, sigma=None, lcd_fraction=0.1,
                 random_state=0):
        self.q = q
        self.contrast = contrast
        self.n_sources = n_sources
        self.method = method
        self.stat = stat
        self.offset = offset
        self.split_fraction = split_fraction
        self.sigma = sigma
        self.lcd_fraction = lcd_fraction
        self.random_state = random_state

    def _spec(self, p):
        if self.contrast not in CONTRASTS:
            raise InvalidInputError(f"unknown contrast {self.contrast!r}")
        if self.contrast != "integration":
            return structural.spec_for(self.contrast, p)
        if self.n_sources is None or p % int(self.n_sources):
            raise InvalidInputError("integration needs n_sources dividing the number of columns")
        return structural.spec_for("integration", p // int(self.n_sources), int(self.n_sources))

    def fit(self, X, y, unpenalized=None):
        """Run the filter.

        Parameters
        ----------
        X : array (n, p)
        y : array (n,)
        unpenalized : array (n, r), optional
            Covariates with effects shared by all coefficients; never tested.
        """
        X, y = check_Xy(X, y)
        self.spec_ = self._spec(X.shape[1])
        req = pipeline.DetectRequest(
            X=X, y=y, spec=self.spec_, q=self.q, method=self.method, stat=self.stat,
            split_fraction=self.split_fraction, seed=self.random_state,
            sigma_override=self.sigma, unpenalized=unpenalized,
            lcd_fraction=self.lcd_fraction, offset=self.offset,
        )
        self.report_ = pipeline.detect(req)
        self.selected_ = np.sort(self.report_.selected)
        self.threshold_ = self.report_.threshold
        self.method_used_ = self.report_.method_used
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self):
        """Boolean mask over the contrasts."""
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.spec_.m, dtype=bool)
        mask[self.selected_] = True
        return mask


class GKnockoffRegressor(RegressorMixin, GKnockoffFilter):
    """:class:`GKnockoffFilter` followed by a least-squares refit.

    Contrasts that were not selected are constrained to zero, so the fitted
    coefficients are constant between detected changes.

    Attributes
    ----------
    coef_ : ndarray (p,)
    unpenalized_coef_ : ndarray (r,)
    """

    def fit(self, X, y, unpenalized=None):
        super().fit(X, y, unpenalized)
        X, y = check_Xy(X, y)
        self.coef_, self.unpenalized_coef_ = structural.refit(
            X, y, self.spec_, self.selected_, unpenalized
        )
        return self

    def predict(self, X, unpenalized=None):
        check_is_fitted(self, "coef_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        out = X @ self.coef_
        if self.unpenalized_coef_.size:
            if unpenalized is None:
                raise InvalidInputError("model was fitted with unpenalized covariates")
            out = out + as_matrix(unpenalized, "unpenalized") @ self.unpenalized_coef_
        return out
