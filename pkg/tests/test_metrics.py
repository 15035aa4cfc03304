import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from emd2loss.errors import InvalidInputError, UndefinedMetricError
from emd2loss.metrics import (EvalReport, aem_aeo, average_ranks, confusion_matrix, decode_regression,
                              evaluate, expected_score, predict_class, spearman_rho)


def test_aem_aeo_examples():
    assert aem_aeo([0, 1, 2], [0, 1, 2]) == (1.0, 1.0)
    assert aem_aeo([1, 2, 3], [0, 1, 2]) == (0.0, 1.0)
    aem, aeo = aem_aeo([0, 2, 4], [0, 3, 1])
    assert aem == pytest.approx(1 / 3) and aeo == pytest.approx(2 / 3)


def test_aem_aeo_errors():
    with pytest.raises(UndefinedMetricError):
        aem_aeo([], [])
    with pytest.raises(InvalidInputError):
        aem_aeo([0, 1], [0])


def test_predict_class():
    assert predict_class([0.1, 0.8, 0.1]) == 1
    assert predict_class([0.5, 0.5]) == 0
    assert predict_class(np.eye(6)[4]) == 4


def test_expected_score():
    assert expected_score(np.eye(4)[2], [1.0, 2.0, 3.5, 9.0]) == 3.5
    assert expected_score(np.full(10, 0.1), np.arange(10)) == pytest.approx(4.5)
    assert expected_score([0.5, 0.5], [0.2, 0.8]) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        expected_score([0.5, 0.5], [1.0, 2.0, 3.0])


def test_decode_regression():
    assert decode_regression([-1.3, 0.4, 2.6, 11.0], 5).tolist() == [0, 0, 3, 4]


def test_spearman_examples():
    x = [1, 2, 3, 4, 5]
    assert spearman_rho(x, x) == pytest.approx(1.0)
    assert spearman_rho(x, x[::-1]) == pytest.approx(-1.0)
    # 1 - 6 * sum d^2 / (n (n^2 - 1)) with d = [0,0,0,-1,1]: 1 - 12/120
    assert spearman_rho(x, [1, 2, 3, 5, 4]) == pytest.approx(0.9, abs=1e-15)


def test_spearman_undefined_on_constant():
    with pytest.raises(UndefinedMetricError):
        spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInputError):
        spearman_rho([], [])


def test_average_ranks_ties():
    np.testing.assert_array_equal(average_ranks([10, 20, 20, 5]), [2, 3.5, 3.5, 1])


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=60))
@settings(max_examples=100, deadline=None)
def test_spearman_matches_scipy_with_ties(pairs):
    x, y = map(np.array, zip(*pairs))
    if np.all(x == x[0]) or np.all(y == y[0]):
        return
    assert spearman_rho(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)


@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=40, unique=True),
       st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_spearman_invariant_under_monotone_transform(x, seed):
    x = np.array(x, dtype=float)
    y = np.random.default_rng(seed).permutation(x)
    assert spearman_rho(np.exp(x / 500), 3 * y ** 3 - 7) == pytest.approx(spearman_rho(x, y), abs=1e-12)


@given(st.integers(2, 8), st.integers(1, 80), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_report_invariants(C, n, seed):
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, C, n)
    pred = np.clip(truth + rng.integers(-2, 3, n), 0, C - 1)
    rep = evaluate(pred, truth, C)
    assert rep.aeo >= rep.aem
    conf = np.array(rep.confusion)
    np.testing.assert_array_equal(conf.sum(axis=1), np.bincount(truth, minlength=C))
    assert EvalReport.from_json(rep.to_json()) == rep


def test_expected_score_bounded(rng):
    c = np.sort(rng.random(6))
    for _ in range(50):
        s = expected_score(rng.dirichlet(np.ones(6)), c)
        assert c[0] <= s <= c[-1]


def test_confusion_matrix():
    M = confusion_matrix([0, 1, 1, 2], [0, 0, 1, 2], 3)
    assert M.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]


def test_evaluate_with_scores():
    rep = evaluate([0, 1, 2], [0, 1, 2], 3, scores=[0.1, 1.2, 1.9], sdd=0.05)
    assert rep.spearman_rho == pytest.approx(1.0)
    assert rep.sdd == 0.05
    # constant scores leave rho undefined rather than failing the report
    assert evaluate([0, 1], [0, 1], 2, scores=[1.0, 1.0]).spearman_rho is None
