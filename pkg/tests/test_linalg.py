import math

import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose

from bellforge.errors import InvalidOperatorError, LayoutError
from bellforge.linalg import (Layout, Operator, StateVector, embed, operator_norm,
                              partial_trace, pure_trace_distance, random_hermitian,
                              random_state, random_unitary, regularize,
                              regularized_acomm_bound, state_estimate, tensor_product,
                              trace_norm, vector_distance)
from bellforge.quantum import SIGMA_X, SIGMA_Z, bell_state

from conftest import ATOL, hermitians, unitaries

QUBIT = Layout.qubits(["q"])


def ket(*amplitudes):
    return StateVector(QUBIT, np.array(amplitudes, dtype=np.complex128))


ZERO = ket(1, 0)
ONE = ket(0, 1)
PLUS = ket(1 / math.sqrt(2), 1 / math.sqrt(2))


def test_tensor_product_with_identity():
    product = tensor_product([Operator(SIGMA_X), Operator.identity(2)])
    assert_allclose(product.matrix, np.kron(SIGMA_X, np.eye(2)))
    assert_allclose(tensor_product([np.eye(2), np.eye(2)]).matrix, np.eye(4))


def test_tensor_product_zz_stabilizes_phi_plus():
    phi = bell_state(1)
    zz = tensor_product([Operator(SIGMA_Z), Operator(SIGMA_Z)])
    assert_allclose(phi.apply(zz, ["A", "B"]).amplitudes, phi.amplitudes, atol=ATOL)


def test_tensor_product_rejects_empty_list():
    with pytest.raises(InvalidOperatorError):
        tensor_product([])


def test_operator_must_be_square():
    with pytest.raises(InvalidOperatorError):
        Operator(np.zeros((2, 3)))


def test_validate_catches_wrong_flags():
    with pytest.raises(InvalidOperatorError):
        Operator(np.array([[0, 1], [0, 0]]), hermitian=True).validate()
    with pytest.raises(InvalidOperatorError):
        Operator(2 * np.eye(2), projector=True).validate()


def test_embed_places_operator_on_its_label():
    layout = Layout.qubits(["a", "b", "c"])
    embedded = embed(SIGMA_X, layout, ["b"])
    assert_allclose(embedded.matrix, np.kron(np.kron(np.eye(2), SIGMA_X), np.eye(2)))


def test_partial_trace_of_bell_state_is_maximally_mixed():
    phi = bell_state(1)
    reduced = partial_trace(phi.projector(), phi.layout, ["A"])
    assert_allclose(reduced.matrix, np.eye(2) / 2, atol=ATOL)


def test_partial_trace_of_product(rng):
    rho_a = random_state(QUBIT, rng).projector().matrix
    rho_b = 0.7 * random_state(Layout([("q", 3)]), rng).projector().matrix
    layout = Layout([("A", 2), ("B", 3)])
    reduced = partial_trace(np.kron(rho_a, rho_b), layout, ["A"])
    assert_allclose(reduced.matrix, rho_a * 0.7, atol=ATOL)


def test_partial_trace_over_everything_is_trace(rng):
    layout = Layout.qubits(["a", "b"])
    matrix = random_hermitian(4, rng)
    reduced = partial_trace(matrix, layout, [])
    assert reduced.dim == 1
    assert_allclose(reduced.matrix[0, 0], np.trace(matrix), atol=1e-12)


def test_partial_trace_unknown_label():
    with pytest.raises(LayoutError):
        partial_trace(np.eye(4), Layout.qubits(["a", "b"]), ["c"])


def test_operator_norm_examples():
    assert operator_norm(SIGMA_X) == pytest.approx(1.0)
    assert operator_norm((SIGMA_Z + SIGMA_X) / math.sqrt(2)) == pytest.approx(1.0)
    assert operator_norm(2 * np.eye(2)) == pytest.approx(2.0)


def test_trace_norm_examples():
    assert trace_norm(ZERO.projector() - ONE.projector()) == pytest.approx(2.0)
    assert trace_norm(PLUS.projector()) == pytest.approx(1.0)
    assert trace_norm(ZERO.projector() - PLUS.projector()) == pytest.approx(math.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(unitaries(dim=4))
def test_unitaries_have_unit_norm(unitary):
    assert abs(operator_norm(unitary) - 1.0) <= ATOL


@settings(max_examples=50, deadline=None)
@given(hermitians(dim=6, scale=2.0))
def test_trace_norm_contracts_under_partial_trace(matrix):
    layout = Layout([("A", 2), ("B", 3)])
    assert trace_norm(partial_trace(matrix, layout, ["A"])) <= trace_norm(matrix) + ATOL


def test_regularize_examples():
    assert_allclose(regularize(Operator(SIGMA_X, hermitian=True)).matrix, SIGMA_X, atol=ATOL)
    assert_allclose(regularize(Operator(np.diag([2.0, 0.0]))).matrix, np.eye(2), atol=ATOL)
    assert_allclose(regularize(Operator(np.diag([1.0, -3.0]))).matrix, np.diag([1.0, -1.0]), atol=ATOL)


def test_regularize_rejects_non_hermitian():
    with pytest.raises(InvalidOperatorError):
        regularize(Operator(np.array([[0, 1], [0, 0]])))


def test_regularize_acts_like_any_matching_unitary(rng):
    # T acts on B, the unitary it is compared with on A
    layout = Layout([("A", 3), ("B", 3)])
    for _ in range(200):
        t = Operator(random_hermitian(3, rng, scale=rng.uniform(0.1, 2.0)), hermitian=True)
        u = random_unitary(3, rng)
        psi = random_state(layout, rng)
        regular = regularize(t)
        assert regular.is_unitary()
        eps = vector_distance(psi.apply(u, ["A"]), psi.apply(t, ["B"]))
        assert vector_distance(psi.apply(regular, ["B"]), psi.apply(t, ["B"])) <= eps + ATOL
        assert vector_distance(psi.apply(regular, ["B"]), psi.apply(u, ["A"])) <= 2 * eps + ATOL


def test_regularized_anticommutator_bound(rng):
    layout = Layout([("A", 2), ("B", 2)])
    for _ in range(200):
        first = Operator(random_hermitian(2, rng), hermitian=True)
        second = Operator(random_hermitian(2, rng), hermitian=True)
        measured, bound = regularized_acomm_bound(
            first, second, Operator(random_unitary(2, rng)), Operator(random_unitary(2, rng)),
            random_state(layout, rng), ["B"], ["A"],
        )
        assert measured <= bound + ATOL


def test_vector_distance_examples():
    assert vector_distance(PLUS, PLUS) == 0.0
    assert vector_distance(ZERO, ONE) == pytest.approx(math.sqrt(2))
    assert vector_distance(ZERO, PLUS) == pytest.approx(math.sqrt(2 - math.sqrt(2)))


def test_vector_distance_layout_mismatch():
    with pytest.raises(LayoutError):
        vector_distance(ZERO, bell_state(1))


def test_pure_trace_distance_examples():
    assert pure_trace_distance(ZERO, ONE) == pytest.approx(1.0)
    assert pure_trace_distance(ZERO, PLUS) == pytest.approx(1 / math.sqrt(2))
    assert pure_trace_distance(PLUS, PLUS) == pytest.approx(0.0, abs=ATOL)


def test_pure_trace_distance_rejects_overnormalized():
    with pytest.raises(LayoutError):
        pure_trace_distance(ZERO * 1.1, ONE)


def test_pure_trace_distance_matches_trace_norm(rng):
    layout = Layout([("v", 4)])
    u = random_state(layout, rng) * 0.8
    v = random_state(layout, rng) * 0.5
    expected = 0.5 * trace_norm(u.projector() - v.projector())
    assert pure_trace_distance(u, v) == pytest.approx(expected, abs=ATOL)


def test_trace_distance_bounded_by_vector_distance(rng):
    layout = Layout([("v", 4)])
    for _ in range(500):
        u = random_state(layout, rng)
        v = random_state(layout, rng)
        assert pure_trace_distance(u, v) <= vector_distance(u, v) + ATOL
        u_sub = u * rng.uniform(0, 1)
        v_sub = v * rng.uniform(0, 1)
        assert pure_trace_distance(u_sub, v_sub) <= 2 * vector_distance(u_sub, v_sub) + ATOL


def test_state_estimate_both_directions(rng):
    layout = Layout([("v", 3)])
    for _ in range(500):
        u = random_state(layout, rng)
        v = random_state(layout, rng)
        overlap, distance = state_estimate(u, v)
        assert distance ** 2 == pytest.approx(2 - 2 * overlap, abs=ATOL)
        eps = rng.uniform(0, 2)
        if abs(overlap - (1 - eps)) < 1e-9:
            continue
        assert (overlap >= 1 - eps) == (distance <= math.sqrt(2 * eps))
