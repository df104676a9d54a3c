import numpy as np
import pytest
from sklearn.base import clone

from gknockoff import GKnockoffFilter, GKnockoffRegressor, simulation
from gknockoff.exceptions import InvalidInputError


def _data(seed=0, n=350, p=100, J=9, A=0.5):
    cfg = simulation.DGPConfig(n=n, p=p, J=J, A=A)
    return simulation.gen_piecewise(cfg, np.random.default_rng(seed))


def test_get_params_and_clone():
    est = GKnockoffRegressor(q=0.1, stat="signed_max")
    params = est.get_params()
    assert params["q"] == 0.1 and params["stat"] == "signed_max"
    assert clone(est).get_params() == params
    est.set_params(q=0.3)
    assert est.q == 0.3


def test_filter_selects_true_changes():
    X, y, truth = _data()
    est = GKnockoffFilter(random_state=1).fit(X, y)
    assert est.method_used_ == "gknockoff"
    assert set(truth) <= set(est.selected_.tolist())
    assert est.get_support().sum() == est.selected_.size


def test_regressor_fit_predict():
    X, y, truth = _data(1)
    est = GKnockoffRegressor(random_state=2).fit(X, y)
    beta = simulation.piecewise_beta(100, truth, 0.5)
    assert np.max(np.abs(est.coef_ - beta)) < 0.3
    assert est.score(X, y) > 0.9
    assert est.predict(X[:5]).shape == (5,)


def test_regressor_with_unpenalized_covariates():
    rng = np.random.default_rng(3)
    X, y, _ = _data(3, n=300, p=40, J=9, A=1.0)
    U = rng.standard_normal((300, 2))
    y = y + U @ np.array([1.0, -2.0])
    est = GKnockoffRegressor().fit(X, y, unpenalized=U)
    np.testing.assert_allclose(est.unpenalized_coef_, [1.0, -2.0], atol=0.2)
    with pytest.raises(InvalidInputError):
        est.predict(X)
    assert est.predict(X, unpenalized=U).shape == (300,)


def test_integration_contrast_needs_sources():
    X = np.random.default_rng(0).standard_normal((50, 6))
    with pytest.raises(InvalidInputError):
        GKnockoffFilter(contrast="integration").fit(X, X[:, 0])
    est = GKnockoffFilter(contrast="integration", n_sources=3).fit(X, X[:, 0])
    assert est.spec_.m == 4
