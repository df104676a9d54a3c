import numpy as np
import pytest

from gknockoff import fusis, pipeline, structural
from gknockoff.exceptions import InvalidInputError, RoutingError


def _piecewise(n, p, seed, changes=(), A=1.0, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.full(p, A)
    for c in changes:
        beta[c + 1:] *= -1
    return X, X @ beta + noise * rng.standard_normal(n), beta


@pytest.mark.parametrize("n, p, expected", [
    (350, 100, "gknockoff"), (150, 100, "egknockoff"), (300, 1000, "hgknockoff"),
])
def test_routing(n, p, expected):
    spec = structural.spec_for("difference", p)
    assert pipeline.route(pipeline.effective_rows(n, spec), spec.m) == expected


def test_detect_low_dimensional_uses_gknockoff():
    X, y, _ = _piecewise(350, 100, 0, changes=range(9, 99, 10), A=0.5)
    rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=1))
    assert rep.method_used == "gknockoff"
    assert rep.diagnostics["n_effective"] == 349 and rep.diagnostics["m"] == 99
    assert max(rep.diagnostics["gram_residuals"]) < 1e-6


def test_detect_egknockoff_pseudo_rows_with_known_sigma():
    X, y, _ = _piecewise(150, 100, 1)
    rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=2, sigma_override=1.0))
    assert rep.method_used == "egknockoff"
    # one row is used up by the constant direction, so 2m - (n - 1) rows are appended
    assert rep.diagnostics["pseudo_rows"] == 2 * 99 - 149
    assert rep.sigma_used == 1.0


def test_detect_egknockoff_estimates_sigma_from_residual_split():
    X, y, _ = _piecewise(150, 100, 3, noise=2.0)
    rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=4))
    assert rep.method_used == "egknockoff"
    assert rep.diagnostics["sigma_dof"] == 25
    assert rep.diagnostics["pseudo_rows"] == 2 * 99 - (149 - 25)
    assert 1.2 < rep.sigma_used < 2.8


def test_detect_high_dimensional_routes_to_screening():
    X, y, _ = _piecewise(300, 1000, 5, changes=[499], A=0.5)
    rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=6))
    assert rep.method_used == "hgknockoff"
    assert rep.diagnostics["screened"] == 150 // 2 - 1


def test_screened_set_size_is_forced():
    for n in (120, 151, 200):
        X, y, _ = _piecewise(n, 400, n, changes=[199], noise=0.5)
        rep = pipeline.hgknockoff(pipeline.DetectRequest(X, y, seed=0))
        n2 = n - n // 2
        assert rep.screen_trace.selected.size == n2 // 2 - 1
        assert rep.diagnostics["n2"] == n2


def test_knockoff_plus_cannot_report_a_single_change():
    # a lone detection has ratio (1 + 0) / 1 > q, so knockoff+ reports nothing
    X, y, _ = _piecewise(200, 400, 0, changes=[199], noise=0.0)
    rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=0))
    assert rep.selected.size == 0


def test_screening_route_exact_recovery_noiseless():
    hits = 0
    for seed in range(50):
        X, y, _ = _piecewise(200, 400, seed, changes=[199], noise=0.0)
        rep = pipeline.detect(pipeline.DetectRequest(X, y, seed=seed, offset=0))
        hits += rep.selected.tolist() == [199]
    assert hits / 50 >= 0.9, f"exact recovery in {hits}/50 seeds"


def test_split_half_of_nine_hundred():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((900, 3)), rng.standard_normal(900)
    (X1, _), (X2, _) = pipeline.split_rows(X, y, 0.5, 1)
    assert X1.shape[0] == 450 and X2.shape[0] == 450


def test_split_ten_rows_disjoint_union():
    X = np.arange(20.0).reshape(10, 2)
    y = np.arange(10.0)
    halves, (i1, i2) = pipeline.split_rows(X, y, 0.5, 3, return_indices=True)
    assert len(i1) == len(i2) == 5
    assert set(i1).isdisjoint(i2)
    assert set(i1) | set(i2) == set(range(10))
    np.testing.assert_array_equal(halves[0][1], y[i1])


def test_split_is_deterministic():
    X, y = np.ones((10, 2)), np.arange(10.0)
    a = pipeline.split_rows(X, y, 0.5, 11, return_indices=True)[1]
    b = pipeline.split_rows(X, y, 0.5, 11, return_indices=True)[1]
    np.testing.assert_array_equal(a[0], b[0])


def test_split_rejects_tiny_inputs():
    with pytest.raises(InvalidInputError):
        pipeline.split_rows(np.ones((3, 2)), np.ones(3))


def test_explicit_method_that_cannot_run():
    X, y, _ = _piecewise(150, 100, 0)
    with pytest.raises(RoutingError):
        pipeline.detect(pipeline.DetectRequest(X, y, method="gknockoff"))


def test_screening_route_rejects_unpenalized_covariates():
    X, y, _ = _piecewise(100, 200, 0)
    with pytest.raises(RoutingError):
        pipeline.detect(pipeline.DetectRequest(X, y, unpenalized=np.ones((100, 1))))


def test_detect_is_seed_deterministic():
    X, y, _ = _piecewise(350, 100, 1, changes=range(9, 99, 10), A=0.3)
    a = pipeline.detect(pipeline.DetectRequest(X, y, seed=9))
    b = pipeline.detect(pipeline.DetectRequest(X, y, seed=9))
    np.testing.assert_array_equal(a.w_stats.w, b.w_stats.w)


def test_custom_screen_config_grid_is_used():
    X, y, _ = _piecewise(200, 400, 2, changes=[199], noise=0.1)
    req = pipeline.DetectRequest(X, y, seed=0, screen_config=fusis.ScreenConfig(bandwidth_grid=(5,), keep_top=1))
    rep = pipeline.detect(req)
    assert rep.screen_trace.chosen_bandwidth == 5


def test_request_validation():
    X, y = np.ones((10, 3)), np.ones(10)
    with pytest.raises(InvalidInputError):
        pipeline.DetectRequest(X, y, q=1.5)
    with pytest.raises(InvalidInputError):
        pipeline.DetectRequest(X, y, stat="ridge")
    with pytest.raises(InvalidInputError):
        pipeline.DetectRequest(X, y, spec=structural.spec_for("difference", 4))
