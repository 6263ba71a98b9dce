import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bellforge.errors import QuestionError, StrategyError
from bellforge.linalg import Layout, Operator, StateVector, random_involution, random_state
from bellforge.questions import Question, QuestionSet
from bellforge.strategy import (DenseStrategy, ExplicitAliceDevice, ExplicitBobDevice,
                                MeasurementFamily, conjugated, honest_strategy,
                                with_hidden_alice_sector)
from bellforge.selftest import (GLOBAL_CONJ_FACTOR, SLACK, IsometryPlan, SelfTestReport,
                                ancilla_labels, apply_isometry, fingerprint, global_conj_check,
                                linear_residuals, product_action_check, regularized_Q,
                                relation_check, single_copy_isometry, vb_matrix)
from bellforge.verifier import full_audit

from conftest import ATOL, noisy, specials_of

NOISE_LEVELS = [0.01, 0.05, 0.1]


def involution_family(name, matrix):
    identity = np.eye(matrix.shape[0])
    return MeasurementFamily(name, [(1,), (-1,)], [
        Operator((identity + matrix) / 2, projector=True),
        Operator((identity - matrix) / 2, projector=True),
    ])


def random_single_position(rng, dim=2):
    alice = ExplicitAliceDevice(1, dim, {
        Question.parse(str(q)): involution_family(f"alice:{q}", random_involution(dim, rng))
        for q in range(1, 6)
    })
    bob = ExplicitBobDevice(1, dim, {
        y: involution_family(f"bob:{y}", random_involution(dim, rng)) for y in range(1, 7)
    })
    return DenseStrategy(1, random_state(Layout([("A", dim), ("B", dim)]), rng), alice, bob)


def test_ancilla_labels():
    assert ancilla_labels(2) == ("A'2", "B'2", "A''2", "B''2")


def test_regularized_Q_range(honest2):
    assert regularized_Q(honest2, 1, 3).is_unitary()
    with pytest.raises(StrategyError):
        regularized_Q(honest2, 1, 4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_honest_isometry_is_exact(n):
    strategy = honest_strategy(n)
    chi = Question.parse("312"[:n])
    result = apply_isometry(strategy, chi)
    assert result.delta <= ATOL
    assert_allclose(result.junk_weights, (1.0, 0.0), atol=ATOL)
    expected = np.zeros(strategy.dense().psi.layout.dim)
    expected[0] = 1.0
    assert_allclose(result.junk_plus.amplitudes, expected, atol=ATOL)
    assert len(result.product_distances) == 2 ** n


def test_conjugated_honest_lands_in_second_branch():
    result = apply_isometry(conjugated(honest_strategy(2)), Question.parse("23"))
    assert_allclose(result.junk_weights, (0.0, 1.0), atol=ATOL)


def test_honest_relations_vanish():
    strategy = honest_strategy(3)
    report = relation_check(strategy, Question.parse("451"))
    assert report.eta <= ATOL
    assert report.worst_family is None
    assert report.violations(0.0) == []
    assert len(report.comm_bob) == 3 * 9
    assert len(report.conj) == 2


def test_relation_check_needs_a_special(honest2):
    with pytest.raises(QuestionError):
        relation_check(honest2, Question.parse("11"), specials_of("22"))


@pytest.mark.parametrize("p", NOISE_LEVELS)
def test_noisy_relations_within_bounds(p):
    strategy = noisy(2, p)
    chi = Question.parse("31")
    epsilon = full_audit(strategy, QuestionSet([chi])).epsilon
    report = relation_check(strategy, chi)
    assert report.violations(epsilon) == []
    assert report.symmetry[(1, 3)] == pytest.approx(math.sqrt(2 * p), abs=1e-8)
    assert report.conj[(1,)] <= ATOL
    conj = global_conj_check(strategy)
    assert set(conj) == {(1, 1), (1, -1)}
    assert max(conj.values()) <= GLOBAL_CONJ_FACTOR * report.eta + SLACK


@pytest.mark.parametrize("p", NOISE_LEVELS)
def test_noisy_isometry(p):
    strategy = noisy(2, p)
    chi = Question.parse("14")
    result = apply_isometry(strategy, chi)
    assert_allclose(result.junk_weights, (1.0, 0.0), atol=1e-8)
    for positions in ([1], [2], [1, 2]):
        assert product_action_check(strategy, chi, positions, result).holds
    for k in (1, 2):
        assert result.linear[(k, 4)] <= ATOL and result.linear[(k, 5)] <= ATOL
        chained = (result.observable_distances[(k, 1)] + result.observable_distances[(k, 2)]) / math.sqrt(2)
        assert result.observable_distances[(k, 4)] <= chained + result.linear[(k, 4)] + ATOL


def test_product_action_positions(honest2):
    chi = Question.parse("11")
    with pytest.raises(QuestionError):
        product_action_check(honest2, chi, [1, 1])
    with pytest.raises(QuestionError):
        product_action_check(honest2, chi, [3])
    check = product_action_check(honest2, chi, [1, 2])
    assert check.holds
    assert check.distance <= ATOL


def test_linear_residuals_honest(honest2):
    residuals = linear_residuals(honest2, Question.parse("25"))
    assert set(residuals) == {(1, 4), (1, 5), (2, 4), (2, 5)}
    assert max(residuals.values()) <= ATOL


def test_isometry_preserves_norm(rng):
    strategy = noisy(2, 0.05)
    dense = strategy.dense()
    plan = IsometryPlan.build(dense, Question.parse("22"))
    for _ in range(3):
        vector = random_state(dense.psi.layout, rng)
        assert plan.apply(vector).norm() == pytest.approx(1.0, abs=ATOL)


def test_global_conj_needs_two_positions():
    with pytest.raises(StrategyError):
        global_conj_check(honest_strategy(1))


def test_bob_isometry_does_not_depend_on_special(honest2, rng):
    prints = {fingerprint(vb_matrix(honest2, Question.parse(text))) for text in ("11", "35", "42")}
    assert len(prints) == 1
    hidden = with_hidden_alice_sector(honest2, rng)
    assert fingerprint(vb_matrix(hidden, Question.parse("53"))) in prints


def test_bob_isometry_is_an_isometry(honest2):
    matrix = vb_matrix(honest2, Question.parse("11"))
    assert matrix.shape == (4 * 16, 4)
    assert_allclose(matrix.conj().T @ matrix, np.eye(4), atol=ATOL)


def test_single_copy_isometry_matches_circuit(rng):
    amplitudes, distance = single_copy_isometry(honest_strategy(1), Question.parse("3"))
    assert distance <= ATOL
    assert np.linalg.norm(amplitudes) == pytest.approx(1.0)
    for _ in range(5):
        _, distance = single_copy_isometry(random_single_position(rng), Question.parse("2"))
        assert distance <= ATOL


def test_single_copy_needs_one_position(honest2):
    with pytest.raises(StrategyError):
        single_copy_isometry(honest2, Question.parse("11"))


def test_hidden_sector_isometry(honest2, rng):
    hidden = with_hidden_alice_sector(honest2, rng)
    result = apply_isometry(hidden, Question.parse("33"))
    assert result.delta <= ATOL
    assert isinstance(result.junk_plus, StateVector)


def test_self_test_report_json(honest2):
    chi = Question.parse("13")
    report = SelfTestReport(epsilon=0.0)
    report.relations[str(chi)] = relation_check(honest2, chi)
    report.isometries[str(chi)] = apply_isometry(honest2, chi)
    report.fingerprints[str(chi)] = fingerprint(vb_matrix(honest2, chi))
    report.global_conj = global_conj_check(honest2)
    document = report.to_json()
    assert document["vb_consistent"]
    assert document["violations"] == {"13": []}
    assert set(document["global_conj"]) == {"1,+1", "1,-1"}
    assert document["junk_weights"] == pytest.approx([1.0, 0.0], abs=ATOL)
    assert report.delta <= ATOL


def test_isometry_distance_grows_with_noise():
    chi = Question.parse("31")
    deltas = [apply_isometry(noisy(2, p), chi).delta for p in NOISE_LEVELS]
    assert deltas == sorted(deltas)
    assert deltas[0] > 0


def test_environment_batching_matches_direct_application(rng):
    dense = noisy(2, 0.05).dense()
    plan = IsometryPlan.build(dense, Question.parse("31"))
    assert plan.env_dim == 16
    direct = IsometryPlan(plan.n, plan.alice, plan.bob)
    for _ in range(2):
        vector = random_state(dense.psi.layout, rng)
        batched, expected = plan.apply(vector), direct.apply(vector)
        assert batched.layout == expected.layout
        assert_allclose(batched.amplitudes, expected.amplitudes, atol=ATOL)


def test_single_copy_isometry_with_environment():
    _, distance = single_copy_isometry(noisy(1, 0.1), Question.parse("3"))
    assert distance <= ATOL


@pytest.mark.slow
def test_noisy_three_pair_isometry():
    strategy = noisy(3, 0.05)
    chi = Question.parse("312")
    result = apply_isometry(strategy, chi)
    assert_allclose(result.junk_weights, (1.0, 0.0), atol=1e-8)
    assert result.extracted.norm() == pytest.approx(1.0, abs=1e-8)
    assert result.delta > 0
    assert product_action_check(strategy, chi, [1, 3], result).holds
