import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bellforge.errors import QuestionError, ZeroProbabilityError
from bellforge.linalg import Layout, Operator, random_state
from bellforge.prepare import (ROBUST_EXPONENT, ideal_target, oracle_suite, outcome_probability,
                               post_measurement_rho, prep_distance_report, robust_prob_oracle,
                               robust_prob_specialization, synthetic_family)
from bellforge.quantum import eigenstate, outcome_strings
from bellforge.questions import Question
from bellforge.strategy import conjugated, deterministic_strategy, honest_strategy

from conftest import ATOL, noisy, specials_of

VECTOR = Layout([("v", 3)])


@pytest.mark.parametrize("n, chi, threshold", [(1, "3", None), (2, "15", None), (3, "243", 1e-6)])
def test_honest_preparation_is_exact(n, chi, threshold):
    strategy = honest_strategy(n)
    report = prep_distance_report(strategy, Question.parse(chi), threshold)
    assert len(report.per_outcome) == 2 ** n
    for entry in report.per_outcome.values():
        assert entry.probability == pytest.approx(2.0 ** -n)
        assert entry.distance <= ATOL
    assert report.total_probability == pytest.approx(1.0)
    assert report.exceed_probability == 0.0
    assert (report.beta0_trace, report.beta1_trace) == pytest.approx((1.0, 0.0), abs=ATOL)
    if threshold is None:
        assert report.specialization is not None
        assert report.threshold == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("chi, a, basis, sign", [("3", (1,), 3, 1), ("1", (-1,), 1, -1),
                                                 ("4", (1,), 4, 1), ("2", (-1,), 2, -1)])
def test_single_pair_post_measurement_states(chi, a, basis, sign):
    rho = post_measurement_rho(honest_strategy(1), Question.parse(chi), a)
    assert_allclose(rho.matrix, eigenstate(basis, sign).projector().matrix, atol=ATOL)


def test_outcome_probability_of_honest_strategy():
    strategy = honest_strategy(2)
    chi = Question.parse("52")
    total = sum(outcome_probability(strategy, chi, a) for a in outcome_strings(2))
    assert total == pytest.approx(1.0)
    with pytest.raises(QuestionError):
        outcome_probability(strategy, chi, (1,))


def test_conjugated_strategy_prepares_conjugate_states():
    report = prep_distance_report(conjugated(honest_strategy(2)), Question.parse("32"), threshold=1e-6)
    assert (report.beta0_trace, report.beta1_trace) == pytest.approx((0.0, 1.0), abs=ATOL)
    assert report.max_distance <= ATOL


def test_ideal_target_without_conjugate_branch():
    beta0 = Operator(np.diag([1.0, 0.0]), hermitian=True)
    beta1 = Operator(np.zeros((2, 2)), hermitian=True)
    target = ideal_target(Question.parse("3"), (1,), beta0, beta1)
    expected = np.zeros((8, 8))
    expected[0, 0] = 1.0
    assert_allclose(target.matrix, expected, atol=ATOL)
    with pytest.raises(QuestionError):
        ideal_target(Question.parse("33"), (1,), beta0, beta1)


def test_ideal_target_conjugate_branch_flips_z():
    beta0 = Operator(np.zeros((1, 1)), hermitian=True)
    beta1 = Operator(np.ones((1, 1)), hermitian=True)
    target = ideal_target(Question.parse("3"), (1,), beta0, beta1)
    # |1> on B' next to the flag |1> on B''
    expected = np.zeros((4, 4))
    expected[3, 3] = 1.0
    assert_allclose(target.matrix, expected, atol=ATOL)


def test_impossible_outcome():
    strategy = deterministic_strategy(1)
    chi = Question.parse("1")
    assert outcome_probability(strategy, chi, (-1,)) == pytest.approx(0.0)
    with pytest.raises(ZeroProbabilityError):
        post_measurement_rho(strategy, chi, (-1,))


def test_noisy_preparation_exceeds_zero_threshold():
    report = prep_distance_report(noisy(1, 0.1), Question.parse("1"), threshold=0.0)
    assert report.max_distance > 0.01
    assert report.exceed_probability == pytest.approx(1.0)
    document = report.to_json()
    assert [row["a"] for row in document["per_outcome"]] == ["+", "-"]


def test_preparation_requires_special(honest2):
    with pytest.raises(QuestionError):
        prep_distance_report(honest2, Question.parse("12"), 0.0, specials_of("21"))


def test_oracle_with_zero_delta(rng):
    u = random_state(VECTOR, rng)
    result = robust_prob_oracle({"s": (1.0, [(u, u)])}, 0.0)
    assert result.hypothesis_holds
    assert result.lhs == 0.0
    assert result.exceed_probability == 0.0
    assert result.passed


def test_oracle_with_single_pair(rng):
    u = random_state(VECTOR, rng)
    error = random_state(VECTOR, rng) * 0.01
    result = robust_prob_oracle({"s": (1.0, [(u, u + error)])}, 0.01)
    assert result.normalized
    assert result.lhs == pytest.approx(1e-4)
    assert result.exceed_probability == 0.0
    assert result.bound == pytest.approx(4 * 0.01 ** (2 * (1 - ROBUST_EXPONENT)))


def test_oracle_flags_broken_hypothesis(rng):
    u = random_state(VECTOR, rng)
    v = random_state(VECTOR, rng)
    result = robust_prob_oracle({"s": (1.0, [(u, v)])}, 0.01)
    assert not result.hypothesis_holds


def test_oracle_rejects_bad_parameters(rng):
    u = random_state(VECTOR, rng)
    with pytest.raises(QuestionError):
        robust_prob_oracle({"s": (1.0, [(u, u)])}, -0.1)
    with pytest.raises(QuestionError):
        robust_prob_oracle({"s": (1.0, [(u, u)])}, 0.1, c=1.0)


def test_synthetic_family_meets_hypothesis_with_equality(rng):
    family = synthetic_family(rng, 0.2)
    lhs = sum(weight * sum((u - v).norm() ** 2 for u, v in pairs) for weight, pairs in family.values())
    assert lhs == pytest.approx(0.04)
    for _, pairs in family.values():
        assert sum(u.norm() ** 2 for u, _ in pairs) == pytest.approx(1.0)


def test_oracle_suite_has_no_violations():
    suite = oracle_suite(seed=2024, count=1000)
    assert suite.violations == 0
    assert suite.hypothesis_failures == 0
    assert suite.worst_margin <= 1e-9
    assert suite.to_json()["count"] == 1000


def test_oracle_suite_replays():
    first = oracle_suite(seed=3, count=20)
    second = oracle_suite(seed=3, count=20)
    assert [r.lhs for r in first.results] == [r.lhs for r in second.results]


def test_noisy_specialization():
    strategy = noisy(2, 0.05)
    report = robust_prob_specialization(strategy, Question.parse("13"))
    assert report.consistent
    assert report.oracle.hypothesis_holds
    assert report.oracle.normalized
    assert report.oracle.passed
    assert report.delta > 0
    assert report.threshold == pytest.approx(report.delta ** ROBUST_EXPONENT)


def test_specialization_of_honest_strategy(honest2):
    report = robust_prob_specialization(honest2, Question.parse("44"))
    assert report.delta <= ATOL
    assert math.isclose(report.delta_from_products, 0.0, abs_tol=ATOL)
    assert isinstance(report.oracle.distances, dict)


def test_post_measurement_rho_is_a_state():
    strategy = noisy(1, 0.2)
    rho = post_measurement_rho(strategy, Question.parse("5"), (1,))
    assert np.trace(rho.matrix).real == pytest.approx(1.0)
    assert rho.is_hermitian(1e-10)


def test_noisy_three_pair_preparation():
    report = prep_distance_report(noisy(3, 0.05), Question.parse("312"), threshold=0.0)
    assert len(report.per_outcome) == 8
    assert report.total_probability == pytest.approx(1.0)
    assert (report.beta0_trace, report.beta1_trace) == pytest.approx((1.0, 0.0), abs=1e-8)
    assert report.max_distance > 0
