"""
Protocol-level quantum objects: the five measurement bases, Bell states,
eigenstates, Born-rule evaluation and projective measurement.
"""

import itertools
import math
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidOperatorError, LayoutError, QuestionError
from .linalg import Layout, Operator, StateVector, tensor_product

Outcome = int
OutcomeString = Tuple[int, ...]

SQRT2 = math.sqrt(2.0)


class Basis(IntEnum):
    """
    The measurement bases a question position can name. The values are the
    protocol's symbols 1..5.
    """
    X = 1
    Y = 2
    Z = 3
    X_PLUS_Y = 4
    X_MINUS_Y = 5

    @property
    def label(self) -> str:
        return _BASIS_LABELS[self]

    @classmethod
    def of(cls, value: int) -> 'Basis':
        try:
            return cls(int(value))
        except ValueError as error:
            raise QuestionError(f"Basis symbol must lie in 1..5, got {value!r}") from error


_BASIS_LABELS = {
    Basis.X: "x",
    Basis.Y: "y",
    Basis.Z: "z",
    Basis.X_PLUS_Y: "x+y",
    Basis.X_MINUS_Y: "x-y",
}

# Equatorial angle of each non-z basis on the Bloch sphere
_EQUATOR_ANGLES = {
    Basis.X: 0.0,
    Basis.Y: math.pi / 2,
    Basis.X_PLUS_Y: math.pi / 4,
    Basis.X_MINUS_Y: -math.pi / 4,
}

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)


def check_outcome(sign: int) -> Outcome:
    if sign not in (1, -1):
        raise QuestionError(f"Outcome must be +1 or -1, got {sign!r}")
    return int(sign)


@lru_cache(maxsize=None)
def _pauli_matrix(basis: Basis) -> np.ndarray:
    if basis == Basis.X:
        matrix = SIGMA_X
    elif basis == Basis.Y:
        matrix = SIGMA_Y
    elif basis == Basis.Z:
        matrix = SIGMA_Z
    elif basis == Basis.X_PLUS_Y:
        matrix = (SIGMA_X + SIGMA_Y) / SQRT2
    else:
        matrix = (SIGMA_X - SIGMA_Y) / SQRT2
    matrix = matrix.copy()
    matrix.setflags(write=False)
    return matrix


def pauli(basis: int) -> Operator:
    """
    The +-1 observable of a basis. Bases 4 and 5 are (sx + sy)/sqrt2 and
    (sx - sy)/sqrt2.
    """
    return Operator(_pauli_matrix(Basis.of(basis)), hermitian=True, unitary=True)


def eigenprojector(basis: int, sign: int) -> Operator:
    """
    (I + s sigma_b) / 2.
    """
    return Operator((IDENTITY + check_outcome(sign) * _pauli_matrix(Basis.of(basis))) / 2,
                    projector=True)


def eigenstate(basis: int, sign: int) -> StateVector:
    """
    The qubit eigenvector of pauli(basis) with eigenvalue `sign`.

    The |0> amplitude is real and nonnegative. For z with sign -1 that amplitude
    vanishes and the |1> amplitude is taken real and positive.
    """
    basis = Basis.of(basis)
    sign = check_outcome(sign)
    layout = Layout.qubits(["q"])
    if basis == Basis.Z:
        return StateVector.basis(layout, 0 if sign == 1 else 1)
    phase = sign * np.exp(1j * _EQUATOR_ANGLES[basis])
    return StateVector(layout, np.array([1.0, phase]) / SQRT2)


def pauli_string(bases: Sequence[int]) -> Operator:
    """
    Tensor product of Pauli observables, where 0 stands for the identity.
    """
    factors = [Operator.identity(2) if basis == 0 else pauli(basis) for basis in bases]
    return tensor_product(factors)


BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")


def bell_state(kind: int = 1, labels: Tuple[str, str] = ("A", "B")) -> StateVector:
    """
    One of the four Bell states: 1 = Phi+, 2 = Phi-, 3 = Psi+, 4 = Psi-.
    """
    amplitudes = np.zeros(4, dtype=np.complex128)
    if kind == 1:
        amplitudes[[0, 3]] = [1, 1]
    elif kind == 2:
        amplitudes[[0, 3]] = [1, -1]
    elif kind == 3:
        amplitudes[[1, 2]] = [1, 1]
    elif kind == 4:
        amplitudes[[1, 2]] = [1, -1]
    else:
        raise QuestionError(f"Bell state index must lie in 1..4, got {kind}")
    return StateVector(Layout.qubits(labels), amplitudes / SQRT2)


def bell_projectors() -> List[Operator]:
    """
    Projectors onto Phi+, Phi-, Psi+, Psi- in that order.
    """
    return [
        Operator(bell_state(kind).projector().matrix, projector=True)
        for kind in range(1, 5)
    ]


def bell_pairs(n: int) -> StateVector:
    """
    n copies of Phi+ in block order: A1..An, then B1..Bn.
    """
    if n < 1:
        raise LayoutError(f"bell_pairs needs at least one pair, got {n}")
    state = bell_state(1, ("A1", "B1"))
    for j in range(2, n + 1):
        state = state.kron(bell_state(1, (f"A{j}", f"B{j}")))
    order = [f"A{j}" for j in range(1, n + 1)] + [f"B{j}" for j in range(1, n + 1)]
    return state.permuted(order)


def expectation(psi: StateVector, op: Operator, labels: Optional[Sequence[str]] = None) -> float:
    """
    <psi|M|psi> for Hermitian M acting on `labels` (default: the whole register).
    """
    if not op.is_hermitian():
        raise InvalidOperatorError("expectation needs a Hermitian operator")
    if labels is None:
        if op.dim != psi.layout.dim:
            raise LayoutError(f"Operator of dim {op.dim} does not act on {psi.layout}")
        labels = psi.layout.labels
    value = psi.inner(psi.apply(op, labels))
    if abs(value.imag) > 1e-9:
        raise InvalidOperatorError(f"Expectation has imaginary part {value.imag:.3e}")
    return value.real


def project(
        psi: StateVector,
        projector: Operator,
        labels: Optional[Sequence[str]] = None,
) -> Tuple[StateVector, float]:
    """
    The unnormalized post-measurement vector P|psi> and its probability.
    """
    if not projector.is_projector():
        raise InvalidOperatorError("project needs a projector")
    if labels is None:
        labels = psi.layout.labels
    projected = psi.apply(projector, labels)
    return projected, projected.norm() ** 2


def conjugate_outcomes(outcomes: Sequence[int], chi: Iterable[int]) -> OutcomeString:
    """
    Flip every outcome at a z position of chi. This turns the outcome string
    of the unconjugated reference into that of the conjugated one.
    """
    bases = list(chi)
    if len(bases) != len(outcomes):
        raise QuestionError(
            f"Outcome string of length {len(outcomes)} does not match question of length {len(bases)}"
        )
    return tuple(
        -check_outcome(sign) if Basis.of(basis) == Basis.Z else check_outcome(sign)
        for sign, basis in zip(outcomes, bases)
    )


def outcome_strings(n: int) -> List[OutcomeString]:
    """
    All +-1 strings of length n, + before - at every position.
    """
    return [tuple(signs) for signs in itertools.product((1, -1), repeat=n)]


def format_outcomes(outcomes: Sequence[int]) -> str:
    return "".join("+" if sign == 1 else "-" for sign in outcomes)


def parse_outcomes(text: str) -> OutcomeString:
    try:
        return tuple({"+": 1, "-": -1}[char] for char in text.strip())
    except KeyError as error:
        raise QuestionError(f"Outcome string may only contain '+' and '-', got {text!r}") from error
