import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gknockoff import checks, knockoffs, lasso, structural
from gknockoff.exceptions import DimensionTooSmallError, InvalidInputError


def _problem(n, p, seed, kind="difference", rho=0.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    if rho:
        X[:, 1:] = rho * X[:, :-1] + np.sqrt(1 - rho ** 2) * X[:, 1:]
    y = X @ np.repeat([1.0, -1.0], [p // 2, p - p // 2]) + rng.standard_normal(n)
    return structural.transform(X, y, structural.spec_for(kind, p))


@pytest.mark.parametrize("rho, expected", [(0.0, 1.0), (0.5, 1.0), (0.9, 0.2)])
def test_select_s_closed_form(rho, expected):
    n = 50.0
    sigma = n * np.array([[1.0, rho], [rho, 1.0]])
    s = knockoffs.select_s(sigma)
    np.testing.assert_allclose(s / n, expected * (1 - knockoffs.S_SHRINK), rtol=1e-12)


def test_select_s_identity():
    s = knockoffs.select_s(30.0 * np.eye(4))
    np.testing.assert_allclose(s / 30.0, 1 - 1e-6)


def test_construct_with_zero_s_copies_design():
    prob = _problem(30, 6, 0)
    ens = knockoffs.construct(prob, np.zeros(prob.m), 1)
    np.testing.assert_allclose(ens.X_tilde, prob.X_star, atol=1e-12)
    assert np.all(ens.C == 0)


def test_construct_gram_identities():
    prob = _problem(40, 11, 21)
    s = knockoffs.select_s(prob.sigma_star)
    ens = knockoffs.construct(prob, s, 21)
    Xt, Xs = ens.X_tilde, prob.X_star
    assert np.max(np.abs(Xt.T @ Xt - prob.sigma_star)) <= 1e-6
    assert np.max(np.abs(Xt.T @ Xs - (prob.sigma_star - np.diag(s)))) <= 1e-6
    # knockoffs live in range(M)
    np.testing.assert_allclose(prob.M @ Xt, Xt, atol=1e-8)


def test_projected_knockoff_is_still_a_knockoff():
    prob = _problem(40, 11, 22)
    s = knockoffs.select_s(prob.sigma_star)
    ens = knockoffs.construct(prob, s, 3)
    r = knockoffs.gram_residuals(prob.M @ ens.X_tilde, prob.X_star, prob.sigma_star, s)
    assert max(r) <= knockoffs.gram_tolerance(prob.sigma_star)


def test_construct_needs_two_m_rows():
    prob = _problem(30, 20, 0)
    with pytest.raises(DimensionTooSmallError):
        knockoffs.construct(prob, knockoffs.select_s(prob.sigma_star))


def test_extend_augment_one_row():
    m = 10
    prob = _problem(2 * m - 1, m, 4, kind="identity")
    assert knockoffs.pseudo_row_count(prob) == 1
    ext = knockoffs.extend_augment(prob, 1.0, 0)
    assert ext.n_rows == 2 * m and ext.augmented_rows == 1
    np.testing.assert_array_equal(ext.X_star[-1], 0.0)
    np.testing.assert_allclose(ext.X_star.T @ ext.X_star, prob.sigma_star, atol=1e-10)
    assert ext.n_effective == 2 * m


def test_extend_augment_noise_variance():
    prob = _problem(14, 8, 5, kind="identity")
    rng = np.random.default_rng(9)
    draws = []
    for _ in range(2000):
        ext = knockoffs.extend_augment(prob, 1.0, rng)
        draws.append(ext.y_star[prob.n_rows:])
    draws = np.concatenate(draws)
    assert abs(draws.var() - 1.0) <= 3 * np.sqrt(2 / draws.size)


def test_estimate_sigma_noiseless():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 4))
    assert knockoffs.estimate_sigma(X, X @ np.arange(4.0)) < 1e-10


def test_estimate_sigma_gaussian_noise():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((500, 5))
    y = X @ np.ones(5) + rng.standard_normal(500)
    assert 0.8 <= knockoffs.estimate_sigma(X, y) <= 1.2


def test_estimate_sigma_without_regressors():
    y = np.random.default_rng(1).standard_normal(50)
    assert knockoffs.estimate_sigma(np.zeros((50, 0)), y) == pytest.approx(np.sqrt(np.mean(y ** 2)))


def test_reserved_noise_directions_are_orthogonal_to_design():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((150, 100))
    y = rng.standard_normal(150)
    prob = structural.transform(X, y, structural.spec_for("difference", 100))
    out, sigma = knockoffs.reserve_noise_directions(prob, X, 0.5, None, rng)
    R = out.nuisance_basis[:, prob.nuisance_basis.shape[1]:]
    assert R.shape[1] == 25
    assert np.max(np.abs(X.T @ R)) < 1e-10
    assert out.n_effective == prob.n_effective - 25
    assert sigma > 0


def test_signed_max_formula():
    lam = np.array([0.3, 0.0, 0.2, 0.1])
    lam_t = np.array([0.1, 0.0, 0.2, 0.4])
    np.testing.assert_allclose(knockoffs._signed_max(lam, lam_t), [0.3, 0.0, 0.0, -0.4])


def _orthogonal_pair(lam):
    # X* = 2 e1, Xk = 2 e2 (squared norm n = 4): b = soft(c, lam) exactly
    n = 4
    Xs, Xt = np.zeros((n, 1)), np.zeros((n, 1))
    Xs[0, 0], Xt[1, 0] = 2.0, 2.0
    y = np.array([2 * (0.5 + lam), 2 * (0.2 + lam), 0.0, 0.0])
    return Xs, Xt, y


def test_lcd_formula():
    Xs, Xt, y = _orthogonal_pair(0.1)
    w = knockoffs.lcd_from_design(Xs, Xt, y, lam=0.1).w
    np.testing.assert_allclose(w, [0.3], atol=1e-9)


def test_lcd_all_zero_gives_zero():
    Xs, Xt, y = _orthogonal_pair(0.1)
    w = knockoffs.lcd_from_design(Xs, Xt, y, lam=10.0).w
    np.testing.assert_array_equal(w, [0.0])


def test_lcd_default_penalty_is_swap_invariant():
    prob = _problem(40, 11, 1)
    ens = knockoffs.construct(prob, knockoffs.select_s(prob.sigma_star), 2)
    a = np.hstack([prob.X_star, ens.X_tilde])
    b = np.hstack([ens.X_tilde, prob.X_star])
    assert knockoffs.default_lcd_lambda(a, prob.y_star) == knockoffs.default_lcd_lambda(b, prob.y_star)
    with pytest.raises(InvalidInputError):
        knockoffs.default_lcd_lambda(a, prob.y_star, 0.0)


@pytest.mark.parametrize("stat", ["lcd", "signed_max"])
def test_single_swap_negates_statistic(stat):
    prob = _problem(40, 11, 6)
    ens = knockoffs.construct(prob, knockoffs.select_s(prob.sigma_star), 7)
    grid = lasso.default_grid(np.hstack([prob.X_star, ens.X_tilde]), prob.y_star)
    fn = (knockoffs.lcd_from_design if stat == "lcd"
          else lambda a, b, y: knockoffs.signed_max_from_design(a, b, y, grid))
    w = fn(prob.X_star, ens.X_tilde, prob.y_star).w
    for j in (0, 4, 9):
        A, B = checks.swap_columns(prob.X_star, ens.X_tilde, [j])
        ws = fn(A, B, prob.y_star).w
        expected = w.copy()
        expected[j] = -w[j]
        np.testing.assert_allclose(ws, expected, atol=1e-7)


def test_threshold_worked_example():
    res = knockoffs.knockoff_plus_threshold(np.array([3.0, 2.0, 1.5, -1.0]), 0.5)
    assert res.threshold == 1.5
    np.testing.assert_array_equal(res.selected, [0, 1, 2])


def test_threshold_all_negative():
    res = knockoffs.knockoff_plus_threshold(-np.arange(1.0, 5.0), 0.2)
    assert res.threshold == np.inf and res.selected.size == 0


def test_threshold_all_zero():
    assert knockoffs.knockoff_plus_threshold(np.zeros(5), 0.3).threshold == np.inf


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=12))
def test_threshold_q_one_matches_enumeration(values):
    w = np.array(values, dtype=float)
    got = knockoffs.knockoff_plus_threshold(w, 1.0).threshold
    assert got == checks.enumerate_threshold(w, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12))
def test_threshold_q_zero_selects_nothing(values):
    res = knockoffs.knockoff_plus_threshold(np.array(values), 0.0)
    assert res.threshold == np.inf and res.selected.size == 0


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=1, max_size=12),
       st.sampled_from([0.05, 0.1, 0.2, 0.3, 0.5]), st.sampled_from([0, 1]))
def test_threshold_matches_enumeration(values, q, offset):
    w = np.array(values, dtype=float)
    assert knockoffs.knockoff_threshold(w, q, offset).threshold == checks.enumerate_threshold(w, q, offset)


def test_knockoff_plus_cannot_select_fewer_than_one_over_q():
    w = np.array([9.0, 8.0, 7.0, 6.0] + [0.0] * 10)
    assert knockoffs.knockoff_plus_threshold(w, 0.2).selected.size == 0
    np.testing.assert_array_equal(knockoffs.knockoff_threshold(w, 0.2, offset=0).selected, [0, 1, 2, 3])


def test_threshold_rejects_bad_offset():
    with pytest.raises(InvalidInputError):
        knockoffs.knockoff_threshold(np.ones(3), 0.2, offset=2)


def test_augmented_problem_builds_knockoffs():
    prob = _problem(150, 100, 8)
    ext = knockoffs.extend_augment(prob, 1.0, 0)
    assert knockoffs.pseudo_row_count(prob) == 2 * 99 - 149
    ens = knockoffs.construct(ext, knockoffs.select_s(ext.sigma_star), 1)
    assert max(ens.gram_residuals) <= knockoffs.gram_tolerance(ext.sigma_star)
    assert dataclasses.replace(ext).n_effective == 2 * 99
