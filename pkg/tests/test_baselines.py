import numpy as np
import pytest
import scipy.stats

from gknockoff import baselines, structural
from gknockoff.exceptions import InvalidInputError, RankDeficientError


def test_by_all_ones_rejects_nothing():
    assert baselines.by_threshold(np.ones(10), 0.2).size == 0


def test_by_single_small_pvalue():
    m = 8
    c_m = sum(1 / i for i in range(1, m + 1))
    pv = np.ones(m)
    pv[3] = 0.2 / (m * c_m)
    np.testing.assert_array_equal(baselines.by_threshold(pv, 0.2), [3])
    pv[3] *= 1.0001
    assert baselines.by_threshold(pv, 0.2).size == 0


def test_by_single_hypothesis_is_level_q():
    assert baselines.by_threshold([0.05], 0.05).tolist() == [0]
    assert baselines.by_threshold([0.0501], 0.05).size == 0


def test_by_matches_step_up_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 15))
        pv = rng.uniform(0, 0.1, m) ** rng.uniform(0.5, 3)
        c_m = sum(1 / i for i in range(1, m + 1))
        srt = np.sort(pv)
        ks = [k for k in range(1, m + 1) if srt[k - 1] <= k * 0.2 / (m * c_m)]
        expected = set() if not ks else {j for j in range(m) if pv[j] <= srt[max(ks) - 1]}
        assert set(baselines.by_threshold(pv, 0.2).tolist()) == expected


def test_contrast_pvalues_match_explicit_formula():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 5))
    y = X @ np.array([1.0, 1.0, 0.0, 0.0, 2.0]) + rng.standard_normal(40)
    D = structural.difference_matrix(5)
    out = baselines.contrast_pvalues(X, y, D)
    b = np.linalg.inv(X.T @ X) @ X.T @ y
    s2 = np.sum((y - X @ b) ** 2) / 35
    se = np.sqrt(s2 * np.einsum("ij,jk,ik->i", D, np.linalg.inv(X.T @ X), D))
    t = D @ b / se
    np.testing.assert_allclose(out.t_stats, t, rtol=1e-10)
    np.testing.assert_allclose(out.p_values, 2 * scipy.stats.t.sf(np.abs(t), 35), rtol=1e-8)
    assert out.dof == 35


def test_contrast_pvalues_with_unpenalized_columns():
    rng = np.random.default_rng(2)
    X, U = rng.standard_normal((30, 3)), rng.standard_normal((30, 2))
    y = rng.standard_normal(30)
    out = baselines.contrast_pvalues(X, y, structural.difference_matrix(3), U)
    assert out.dof == 25 and out.p_values.shape == (2,)


def test_contrast_pvalues_errors():
    X = np.ones((10, 2))
    with pytest.raises(RankDeficientError):
        baselines.contrast_pvalues(X, np.arange(10.0), [[1.0, -1.0]])
    with pytest.raises(InvalidInputError):
        baselines.contrast_pvalues(np.ones((2, 2)), [1.0, 2.0], [[1.0, -1.0]])


def test_by_procedure_accepts_spec():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 6))
    beta = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    y = X @ beta + 0.1 * rng.standard_normal(200)
    assert baselines.by_procedure(X, y, structural.spec_for("difference", 6), 0.2).tolist() == [2]


def test_identity_permutation_selects_nothing():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 11))
    y = X @ np.repeat([1.0, -1.0], [5, 6]) + rng.standard_normal(60)
    prob = structural.transform(X, y, structural.spec_for("difference", 11))
    for stat in ("lcd", "signed_max"):
        res = baselines.permutation_filter(prob, 0.2, stat, permutation=np.arange(60))
        np.testing.assert_array_equal(res.stats.w, 0.0)
        assert res.selected.size == 0


def test_permutation_must_be_a_permutation():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 4))
    prob = structural.transform(X, rng.standard_normal(30), structural.spec_for("difference", 4))
    with pytest.raises(InvalidInputError):
        baselines.permutation_filter(prob, 0.2, permutation=np.zeros(30, dtype=int))
