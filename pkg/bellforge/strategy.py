"""
Prover strategies.

A strategy is a shared state together with Alice's measurement for every
question and Bob's measurement for every label: 1..6 for the single-qubit
observables and the two Bell-measurement labels. Two representations exist:

* FactorizedStrategy describes one Bell pair (state, local observables, Bell
  projectors) repeated n times. Every requested correlator touches at most two
  pairs, so it is evaluated as a small local trace and scales to large n.
* DenseStrategy holds an explicit state on Alice's and Bob's blocks and
  explicit measurement devices. It is what adversarial strategy files load
  into and what the self-test and state preparation checks consume.
"""

import base64
import itertools
import json
import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh

from .config import NoiseSpec
from .errors import DenseCapExceeded, StrategyError
from .linalg import (TOLERANCE, Layout, Operator, StateVector, embed, operator_norm,
                     random_unitary, tensor_product)
from .logging import PrettyLogger
from .quantum import (SQRT2, bell_projectors, format_outcomes, outcome_strings,
                      parse_outcomes, pauli)
from .questions import Question, QuestionSet
from .utils import PathLike, to_path

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

DENSE_CAP = 3

DIAMOND_ODD = "◊"
DIAMOND_EVEN = "♦"
OBSERVABLE_LABELS = (1, 2, 3, 4, 5, 6)
BOB_LABELS: Tuple[Union[int, str], ...] = OBSERVABLE_LABELS + (DIAMOND_ODD, DIAMOND_EVEN)

BobLabel = Union[int, str]
Answer = Tuple[int, ...]

STRATEGY_FORMAT = "bellforge-strategy"
STRATEGY_VERSION = 1


def check_bob_label(label: Any) -> BobLabel:
    """
    Normalize a Bob label: 1..6 as int, or one of the two Bell labels.
    """
    if isinstance(label, str) and label in (DIAMOND_ODD, DIAMOND_EVEN):
        return label
    try:
        value = int(label)
    except (TypeError, ValueError) as error:
        raise StrategyError(f"Invalid Bob label {label!r}") from error
    if value not in OBSERVABLE_LABELS:
        raise StrategyError(f"Bob label must be 1..6, {DIAMOND_ODD} or {DIAMOND_EVEN}, got {label!r}")
    return value


def bell_label(j: int) -> str:
    """
    The Bob label whose answer contains the Bell outcome for the pair (j, j+1).
    """
    return DIAMOND_ODD if j % 2 == 1 else DIAMOND_EVEN


def bell_groups(n: int, label: str) -> List[int]:
    """
    First positions j of the pairs (j, j+1) that the given Bell label measures.
    """
    start = 1 if label == DIAMOND_ODD else 2
    return list(range(start, n, 2))


def bell_group_index(j: int) -> int:
    return (j - 1) // 2


def answer_length(n: int, label: BobLabel) -> int:
    label = check_bob_label(label)
    if isinstance(label, str):
        return len(bell_groups(n, label))
    return n


def bell_answers(groups: int) -> List[Answer]:
    return [tuple(answer) for answer in itertools.product((1, 2, 3, 4), repeat=groups)]


def format_answer(label: BobLabel, answer: Sequence[int]) -> str:
    if isinstance(check_bob_label(label), str):
        return "".join(str(int(value)) for value in answer)
    return format_outcomes(answer)


def parse_answer(label: BobLabel, text: str) -> Answer:
    if isinstance(check_bob_label(label), str):
        if text and not all(char in "1234" for char in text):
            raise StrategyError(f"Bell answer must be a string over 1..4, got {text!r}")
        return tuple(int(char) for char in text)
    return parse_outcomes(text)


@dataclass(frozen=True)
class BobTerm:
    """
    Bob's side of a correlator: either his observable for label y at a position,
    or a signed sum of his Bell projectors for the pair starting at a position.
    """
    position: int
    y: Optional[int] = None
    bell_signs: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self) -> None:
        if (self.y is None) == (self.bell_signs is None):
            raise StrategyError("A Bob term needs exactly one of an observable label or Bell signs")

    @property
    def positions(self) -> List[int]:
        if self.y is not None:
            return [self.position]
        return [self.position, self.position + 1]


class MeasurementFamily:
    """
    A projective measurement: one projector per answer.
    """

    def __init__(self, name: str, answers: Sequence[Answer], projectors: Sequence[Operator]):
        if len(answers) != len(projectors):
            raise StrategyError(f"Family {name!r} has {len(answers)} answers but {len(projectors)} projectors")
        if not projectors:
            raise StrategyError(f"Family {name!r} is empty")
        dims = {projector.dim for projector in projectors}
        if len(dims) != 1:
            raise StrategyError(f"Family {name!r} mixes operator dimensions {sorted(dims)}")
        self.name = name
        self.answers: Tuple[Answer, ...] = tuple(tuple(answer) for answer in answers)
        self.projectors: Tuple[Operator, ...] = tuple(projectors)
        self.dim = dims.pop()

    def validate(self, tol: float = TOLERANCE) -> 'MeasurementFamily':
        """
        Check that the family is complete and its projectors are pairwise orthogonal.
        """
        for answer, projector in zip(self.answers, self.projectors):
            if not projector.is_projector(tol):
                raise StrategyError(f"Family {self.name!r}: answer {answer} is not a projector")
        total = sum((projector.matrix for projector in self.projectors), np.zeros((self.dim, self.dim)))
        if operator_norm(total - np.eye(self.dim)) > tol:
            raise StrategyError(f"Family {self.name!r} is not complete")
        for first, second in itertools.combinations(range(len(self.projectors)), 2):
            product = self.projectors[first].matrix @ self.projectors[second].matrix
            if operator_norm(product) > tol:
                raise StrategyError(
                    f"Family {self.name!r}: answers {self.answers[first]} and "
                    f"{self.answers[second]} are not orthogonal"
                )
        return self

    def marginal(self, index: int, value: int) -> Operator:
        """
        The projector for "the answer has `value` at `index`".
        """
        total = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for answer, projector in zip(self.answers, self.projectors):
            if answer[index] == value:
                total = total + projector.matrix
        return Operator(total, projector=True)

    def observable(self, index: int) -> Operator:
        """
        The +-1 observable of the answer at `index`.
        """
        total = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for answer, projector in zip(self.answers, self.projectors):
            total = total + answer[index] * projector.matrix
        return Operator(total, hermitian=True, unitary=True)

    def conj(self) -> 'MeasurementFamily':
        return MeasurementFamily(self.name, self.answers, [p.conj() for p in self.projectors])


def _product_family(
        name: str,
        answers: Sequence[Answer],
        factors: Sequence[Sequence[np.ndarray]],
) -> MeasurementFamily:
    return MeasurementFamily(name, answers, [
        Operator(tensor_product(list(parts)).matrix, projector=True) for parts in factors
    ])


class AliceDevice(ABC):
    """
    Alice's measurements: one family over {+,-}^n per question.
    """

    def __init__(self, n: int, dim: int):
        self.n = n
        self.dim = dim
        self._cache: Dict[Question, MeasurementFamily] = {}
        self._lock = threading.Lock()

    def contains(self, x: Question) -> bool:
        return x.n == self.n

    def family(self, x: Question) -> MeasurementFamily:
        if not self.contains(x):
            raise StrategyError(f"Question {x} is outside the strategy's domain")
        with self._lock:
            if x not in self._cache:
                self._cache[x] = self._build_family(x)
            return self._cache[x]

    @abstractmethod
    def _build_family(self, x: Question) -> MeasurementFamily:
        pass

    def observable(self, x: Question, j: int) -> Operator:
        """
        A_x^(j): the outcome at position j of Alice's measurement for x.
        """
        if not 1 <= j <= self.n:
            raise StrategyError(f"Position {j} out of range 1..{self.n}")
        return self.family(x).observable(j - 1)

    @abstractmethod
    def conj(self) -> 'AliceDevice':
        pass


class ProductAliceDevice(AliceDevice):
    """
    Independent qubit measurements per position, one 2x2 observable per symbol,
    optionally next to an environment register Alice does not touch.
    """

    def __init__(self, n: int, local: Mapping[int, np.ndarray], env_dim: int = 1):
        super().__init__(n, 2 ** n * env_dim)
        self.local = {int(q): np.asarray(matrix, dtype=np.complex128) for q, matrix in local.items()}
        self.env_dim = env_dim
        subsystems = [(f"A{j}", 2) for j in range(1, n + 1)]
        if env_dim > 1:
            subsystems.append(("E", env_dim))
        self.layout = Layout(subsystems)

    def _local(self, x: Question, j: int) -> np.ndarray:
        try:
            return self.local[x.symbol(j)]
        except KeyError as error:
            raise StrategyError(f"No local observable for symbol {x.symbol(j)}") from error

    def observable(self, x: Question, j: int) -> Operator:
        if not self.contains(x):
            raise StrategyError(f"Question {x} is outside the strategy's domain")
        if not 1 <= j <= self.n:
            raise StrategyError(f"Position {j} out of range 1..{self.n}")
        return embed(Operator(self._local(x, j), hermitian=True, unitary=True),
                     self.layout, [f"A{j}"])

    def _build_family(self, x: Question) -> MeasurementFamily:
        identity = np.eye(2)
        answers = outcome_strings(self.n)
        factors = []
        for answer in answers:
            parts = [(identity + sign * self._local(x, j)) / 2 for j, sign in enumerate(answer, start=1)]
            if self.env_dim > 1:
                parts.append(np.eye(self.env_dim))
            factors.append(parts)
        return _product_family(f"alice:{x}", answers, factors)

    def conj(self) -> 'ProductAliceDevice':
        return ProductAliceDevice(self.n, {q: m.conj() for q, m in self.local.items()}, self.env_dim)


class ExplicitAliceDevice(AliceDevice):
    """
    Arbitrary measurement families on Alice's block, given per question.
    """

    def __init__(self, n: int, dim: int, families: Mapping[Question, MeasurementFamily]):
        super().__init__(n, dim)
        self.families = dict(families)
        for x, family in self.families.items():
            if x.n != n:
                raise StrategyError(f"Question {x} does not have length {n}")
            if family.dim != dim:
                raise StrategyError(f"Family {family.name!r} has dimension {family.dim}, expected {dim}")

    def contains(self, x: Question) -> bool:
        return x in self.families

    def _build_family(self, x: Question) -> MeasurementFamily:
        return self.families[x]

    def conj(self) -> 'ExplicitAliceDevice':
        return ExplicitAliceDevice(self.n, self.dim, {x: f.conj() for x, f in self.families.items()})


class HiddenSectorAliceDevice(AliceDevice):
    """
    Doubles Alice's block with a flag qubit. On flag 0 the inner measurements act
    unchanged, on flag 1 a rotated copy of them acts. A state supported on flag 0
    cannot tell the two devices apart.
    """

    def __init__(self, inner: AliceDevice, rotation: np.ndarray):
        super().__init__(inner.n, inner.dim * 2)
        self.inner = inner
        self.rotation = np.asarray(rotation, dtype=np.complex128)

    def contains(self, x: Question) -> bool:
        return self.inner.contains(x)

    def _build_family(self, x: Question) -> MeasurementFamily:
        inner = self.inner.family(x)
        visible = np.diag([1.0, 0.0])
        hidden = np.diag([0.0, 1.0])
        projectors = [
            Operator(np.kron(p.matrix, visible)
                     + np.kron(self.rotation @ p.matrix @ self.rotation.conj().T, hidden),
                     projector=True)
            for p in inner.projectors
        ]
        return MeasurementFamily(inner.name, inner.answers, projectors)

    def conj(self) -> 'HiddenSectorAliceDevice':
        return HiddenSectorAliceDevice(self.inner.conj(), self.rotation.conj())


class BobDevice(ABC):
    """
    Bob's measurements, one family per label.
    """

    def __init__(self, n: int, dim: int):
        self.n = n
        self.dim = dim
        self._cache: Dict[BobLabel, MeasurementFamily] = {}
        self._lock = threading.Lock()

    def family(self, label: BobLabel) -> MeasurementFamily:
        label = check_bob_label(label)
        with self._lock:
            if label not in self._cache:
                self._cache[label] = self._build_family(label)
            return self._cache[label]

    @abstractmethod
    def _build_family(self, label: BobLabel) -> MeasurementFamily:
        pass

    def _check_position(self, j: int, pair: bool = False) -> None:
        upper = self.n - 1 if pair else self.n
        if not 1 <= j <= upper:
            raise StrategyError(f"Position {j} out of range 1..{upper}")

    def observable(self, y: int, j: int) -> Operator:
        """
        B_y^(j) for y in 1..6.
        """
        label = check_bob_label(y)
        if isinstance(label, str):
            raise StrategyError(f"Bob label {label} has no +-1 observable")
        self._check_position(j)
        return self.family(label).observable(j - 1)

    def bell_projector(self, j: int, b: int) -> Operator:
        """
        Gamma_b^(j): Bell outcome b for the pair (j, j+1), grouped out of the
        measurement that covers that pair.
        """
        self._check_position(j, pair=True)
        if b not in (1, 2, 3, 4):
            raise StrategyError(f"Bell outcome must lie in 1..4, got {b}")
        return self.family(bell_label(j)).marginal(bell_group_index(j), b)

    @abstractmethod
    def conj(self) -> 'BobDevice':
        pass


class ProductBobDevice(BobDevice):
    """
    Qubit observables per position and a fixed Bell measurement on neighbouring pairs.
    """

    def __init__(self, n: int, local: Mapping[int, np.ndarray], bell: Sequence[np.ndarray]):
        super().__init__(n, 2 ** n)
        self.local = {int(y): np.asarray(matrix, dtype=np.complex128) for y, matrix in local.items()}
        self.bell = tuple(np.asarray(projector, dtype=np.complex128) for projector in bell)
        self.layout = Layout.qubits([f"B{j}" for j in range(1, n + 1)])

    def observable(self, y: int, j: int) -> Operator:
        label = check_bob_label(y)
        if isinstance(label, str):
            raise StrategyError(f"Bob label {label} has no +-1 observable")
        self._check_position(j)
        return embed(Operator(self.local[label], hermitian=True, unitary=True), self.layout, [f"B{j}"])

    def bell_projector(self, j: int, b: int) -> Operator:
        self._check_position(j, pair=True)
        if b not in (1, 2, 3, 4):
            raise StrategyError(f"Bell outcome must lie in 1..4, got {b}")
        return embed(Operator(self.bell[b - 1], projector=True), self.layout, [f"B{j}", f"B{j + 1}"])

    def _build_family(self, label: BobLabel) -> MeasurementFamily:
        if isinstance(label, str):
            groups = bell_groups(self.n, label)
            answers = bell_answers(len(groups))
            projectors = []
            for answer in answers:
                total = np.eye(self.dim, dtype=np.complex128)
                for j, b in zip(groups, answer):
                    total = total @ self.bell_projector(j, b).matrix
                projectors.append(Operator(total, projector=True))
            return MeasurementFamily(f"bob:{label}", answers, projectors)

        identity = np.eye(2)
        answers = outcome_strings(self.n)
        factors = [[(identity + sign * self.local[label]) / 2 for sign in answer] for answer in answers]
        return _product_family(f"bob:{label}", answers, factors)

    def conj(self) -> 'ProductBobDevice':
        return ProductBobDevice(self.n, {y: m.conj() for y, m in self.local.items()},
                                [projector.conj() for projector in self.bell])


class ExplicitBobDevice(BobDevice):
    """
    Arbitrary measurement families on Bob's block, given per label.
    """

    def __init__(self, n: int, dim: int, families: Mapping[BobLabel, MeasurementFamily]):
        super().__init__(n, dim)
        self.families = {check_bob_label(label): family for label, family in families.items()}
        for label in self.required_labels(n):
            if label not in self.families:
                raise StrategyError(f"Bob family {label!r} is missing")
        for family in self.families.values():
            if family.dim != dim:
                raise StrategyError(f"Family {family.name!r} has dimension {family.dim}, expected {dim}")

    @staticmethod
    def required_labels(n: int) -> List[BobLabel]:
        labels: List[BobLabel] = list(OBSERVABLE_LABELS)
        if n >= 2:
            labels.append(DIAMOND_ODD)
        if n >= 3:
            labels.append(DIAMOND_EVEN)
        return labels

    def _build_family(self, label: BobLabel) -> MeasurementFamily:
        if label not in self.families:
            if isinstance(label, str) and not bell_groups(self.n, label):
                return MeasurementFamily(f"bob:{label}", [()], [Operator.identity(self.dim)])
            raise StrategyError(f"Bob family {label!r} is missing")
        return self.families[label]

    def conj(self) -> 'ExplicitBobDevice':
        return ExplicitBobDevice(self.n, self.dim, {y: f.conj() for y, f in self.families.items()})


def bob_combination_from(observable: Any, q: int, j: int) -> Operator:
    """
    Bob's combination Q_q^(j) from his six observables at position j:
    X, Y from the (x, y) pair, Z from the (z, x) pair, then D_xy and E_xy.
    """
    def b(y: int) -> np.ndarray:
        return observable(y, j).matrix

    if q == 1:
        matrix = (b(5) + b(6)) / SQRT2
    elif q == 2:
        matrix = (b(5) - b(6)) / SQRT2
    elif q == 3:
        matrix = (b(1) + b(2)) / SQRT2
    elif q == 4:
        matrix = b(5)
    elif q == 5:
        matrix = b(6)
    else:
        raise StrategyError(f"Bob combination index must lie in 1..5, got {q}")
    return Operator(matrix, hermitian=True)


def _normalized(probabilities: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.real(probabilities), 0.0, None)
    total = clipped.sum()
    if total <= 0:
        raise StrategyError("Outcome distribution has no probability mass")
    return clipped / total


class Strategy(ABC):
    """
    A prover strategy for n positions.
    """

    def __init__(self, n: int):
        if n < 1:
            raise StrategyError(f"A strategy needs at least one position, got {n}")
        self._n = n
        self._dense: Optional['DenseStrategy'] = None
        self._dense_lock = threading.Lock()

    @property
    def n(self) -> int:
        return self._n

    def contains(self, x: Question) -> bool:
        return x.n == self._n

    def require(self, x: Question) -> None:
        if not self.contains(x):
            raise StrategyError(f"Question {x} is outside the strategy's domain")

    def _check_positions(self, positions: Sequence[int], term: BobTerm) -> None:
        for j in list(positions) + term.positions:
            if not 1 <= j <= self._n:
                raise StrategyError(f"Position {j} out of range 1..{self._n}")

    @abstractmethod
    def correlator(self, x: Question, positions: Sequence[int], term: BobTerm) -> float:
        """
        <psi| prod_{j in positions} A_x^(j) (x) Bob's term |psi>.
        """

    @abstractmethod
    def sample_rounds(
            self, x: Question, y: BobLabel, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Draw `count` independent rounds. Returns Alice's answers (count x n, +-1)
        and Bob's answers (count x answer length).
        """

    def sample_round(self, x: Question, y: BobLabel, rng: np.random.Generator) -> Tuple[Answer, Answer]:
        alice, bob = self.sample_rounds(x, y, 1, rng)
        return tuple(int(v) for v in alice[0]), tuple(int(v) for v in bob[0])

    def dense(self) -> 'DenseStrategy':
        """
        The explicit state-and-devices form, built once even when several
        threads ask for it.
        """
        with self._dense_lock:
            if self._dense is None:
                self._dense = self._build_dense()
            return self._dense

    @abstractmethod
    def _build_dense(self) -> 'DenseStrategy':
        pass

    @abstractmethod
    def conjugated(self) -> 'Strategy':
        """
        The strategy with state and every measurement complex conjugated.
        """

    def alice_observable(self, x: Question, j: int) -> Operator:
        return self.dense().alice_observable(x, j)

    def bob_observable(self, y: int, j: int) -> Operator:
        return self.dense().bob_observable(y, j)

    def bob_combination(self, q: int, j: int) -> Operator:
        return self.dense().bob_combination(q, j)

    def bell_projector(self, j: int, b: int) -> Operator:
        return self.dense().bell_projector(j, b)


@dataclass(frozen=True, eq=False)
class PairModel:
    """
    One Bell pair: its state on (A, B), Alice's observable per symbol 1..5,
    Bob's observable per label 1..6 and his four Bell projectors on (B_j, B_j+1).
    """
    rho: np.ndarray
    alice: Mapping[int, np.ndarray]
    bob: Mapping[int, np.ndarray]
    bell: Tuple[np.ndarray, ...]
    noise: float = field(default=0.0)

    def validate(self) -> 'PairModel':
        rho = Operator(self.rho)
        if rho.dim != 4 or not rho.is_hermitian(1e-10):
            raise StrategyError("Pair state must be a Hermitian 4x4 matrix")
        if abs(np.trace(self.rho).real - 1.0) > TOLERANCE or np.min(eigh(self.rho, eigvals_only=True)) < -TOLERANCE:
            raise StrategyError("Pair state must be a density matrix")
        for name, observables, labels in (("alice", self.alice, range(1, 6)), ("bob", self.bob, OBSERVABLE_LABELS)):
            for label in labels:
                if label not in observables:
                    raise StrategyError(f"Pair model has no {name} observable {label}")
                op = Operator(observables[label], hermitian=True, unitary=True)
                if op.dim != 2:
                    raise StrategyError(f"{name} observable {label} must be 2x2")
                op.validate()
        MeasurementFamily("bell", [(b,) for b in range(1, 5)],
                          [Operator(p, projector=True) for p in self.bell]).validate()
        return self

    def conj(self) -> 'PairModel':
        return PairModel(
            rho=self.rho.conj(),
            alice={q: m.conj() for q, m in self.alice.items()},
            bob={y: m.conj() for y, m in self.bob.items()},
            bell=tuple(p.conj() for p in self.bell),
            noise=self.noise,
        )

    def depolarized(self, p: float) -> 'PairModel':
        rho = (1 - p) * self.rho + p * np.eye(4) / 4
        return replace(self, rho=rho, noise=1 - (1 - self.noise) * (1 - p))

    def purification(self) -> Tuple[np.ndarray, int]:
        """
        A vector on (A, B, E) whose reduced state on (A, B) is rho, with the
        environment dimension (1 if rho is pure).
        """
        values, vectors = eigh(self.rho)
        keep = values > 1e-14
        values, vectors = values[keep], vectors[:, keep]
        if len(values) == 1:
            return vectors[:, 0] * math.sqrt(values[0]), 1
        env_dim = 4
        amplitudes = np.zeros((4, env_dim), dtype=np.complex128)
        for k, (value, vector) in enumerate(zip(values, vectors.T)):
            amplitudes[:, k] = math.sqrt(value) * vector
        return amplitudes.reshape(-1), env_dim


def _d(k: int, l: int) -> np.ndarray:
    return (pauli(k).matrix + pauli(l).matrix) / SQRT2


def _e(k: int, l: int) -> np.ndarray:
    return (pauli(k).matrix - pauli(l).matrix) / SQRT2


HONEST_ALICE = {
    1: pauli(1).matrix,
    2: -pauli(2).matrix,
    3: pauli(3).matrix,
    4: pauli(5).matrix,
    5: pauli(4).matrix,
}

HONEST_BOB = {
    1: _d(3, 1),
    2: _e(3, 1),
    3: _d(3, 2),
    4: _e(3, 2),
    5: _d(1, 2),
    6: _e(1, 2),
}


def honest_pair() -> PairModel:
    return PairModel(
        rho=np.outer(np.array([1, 0, 0, 1]) / SQRT2, np.array([1, 0, 0, 1]) / SQRT2).astype(np.complex128),
        alice=HONEST_ALICE,
        bob=HONEST_BOB,
        bell=tuple(p.matrix for p in bell_projectors()),
    )


class FactorizedStrategy(Strategy):
    """
    n identical, independent copies of a pair model.
    """

    def __init__(self, n: int, model: PairModel):
        super().__init__(n)
        self.model = model

    @property
    def noise(self) -> float:
        return self.model.noise

    def _local_layout(self, pairs: Sequence[int]) -> Layout:
        subsystems = []
        for j in pairs:
            subsystems += [(f"A{j}", 2), (f"B{j}", 2)]
        return Layout(subsystems)

    def _alice_local(self, x: Question, j: int) -> np.ndarray:
        return self.model.alice[x.symbol(j)]

    def _bob_operator(self, term: BobTerm) -> Tuple[np.ndarray, List[str]]:
        if term.y is not None:
            return self.model.bob[check_bob_label(term.y)], [f"B{term.position}"]
        if term.position >= self._n:
            raise StrategyError(f"No Bell measurement for the pair starting at {term.position}")
        signs = term.bell_signs or ()
        matrix = sum(sign * projector for sign, projector in zip(signs, self.model.bell))
        return np.asarray(matrix), [f"B{term.position}", f"B{term.position + 1}"]

    def correlator(self, x: Question, positions: Sequence[int], term: BobTerm) -> float:
        self.require(x)
        self._check_positions(positions, term)
        pairs = sorted(set(positions) | set(term.positions))
        layout = self._local_layout(pairs)
        rho = tensor_product([self.model.rho] * len(pairs)).matrix
        op = np.eye(layout.dim, dtype=np.complex128)
        for j in positions:
            op = op @ embed(self._alice_local(x, j), layout, [f"A{j}"]).matrix
        bob, labels = self._bob_operator(term)
        op = op @ embed(bob, layout, labels).matrix
        return float(np.trace(rho @ op).real)

    def _sample_pair(
            self, x: Question, j: int, y: int, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        outcomes = [(a, b) for a in (1, -1) for b in (1, -1)]
        alice = self._alice_local(x, j)
        bob = self.model.bob[y]
        probabilities = np.array([
            np.trace(self.model.rho @ np.kron((np.eye(2) + a * alice) / 2, (np.eye(2) + b * bob) / 2))
            for a, b in outcomes
        ])
        drawn = rng.choice(len(outcomes), size=count, p=_normalized(probabilities))
        chosen = np.array(outcomes)[drawn]
        return chosen[:, 0], chosen[:, 1]

    def _sample_bell_group(
            self, x: Question, j: int, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        layout = self._local_layout([j, j + 1])
        rho = np.kron(self.model.rho, self.model.rho)
        outcomes = [(a, c, b) for a in (1, -1) for c in (1, -1) for b in (1, 2, 3, 4)]
        first = self._alice_local(x, j)
        second = self._alice_local(x, j + 1)
        probabilities = []
        for a, c, b in outcomes:
            op = (embed((np.eye(2) + a * first) / 2, layout, [f"A{j}"]).matrix
                  @ embed((np.eye(2) + c * second) / 2, layout, [f"A{j + 1}"]).matrix
                  @ embed(self.model.bell[b - 1], layout, [f"B{j}", f"B{j + 1}"]).matrix)
            probabilities.append(np.trace(rho @ op))
        drawn = rng.choice(len(outcomes), size=count, p=_normalized(np.array(probabilities)))
        chosen = np.array(outcomes)[drawn]
        return chosen[:, 0], chosen[:, 1], chosen[:, 2]

    def _sample_alice(self, x: Question, j: int, count: int, rng: np.random.Generator) -> np.ndarray:
        reduced = self.model.rho.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
        alice = self._alice_local(x, j)
        probabilities = np.array([np.trace(reduced @ (np.eye(2) + a * alice) / 2) for a in (1, -1)])
        drawn = rng.choice(2, size=count, p=_normalized(probabilities))
        return np.array([1, -1])[drawn]

    def sample_rounds(
            self, x: Question, y: BobLabel, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        self.require(x)
        label = check_bob_label(y)
        alice = np.zeros((count, self._n), dtype=np.int8)
        if not isinstance(label, str):
            bob = np.zeros((count, self._n), dtype=np.int8)
            for j in range(1, self._n + 1):
                alice[:, j - 1], bob[:, j - 1] = self._sample_pair(x, j, label, count, rng)
            return alice, bob

        groups = bell_groups(self._n, label)
        bob = np.zeros((count, len(groups)), dtype=np.int8)
        j = 1
        while j <= self._n:
            if j in groups:
                group = groups.index(j)
                alice[:, j - 1], alice[:, j], bob[:, group] = self._sample_bell_group(x, j, count, rng)
                j += 2
            else:
                alice[:, j - 1] = self._sample_alice(x, j, count, rng)
                j += 1
        return alice, bob

    def _build_dense(self) -> 'DenseStrategy':
        if self._n > DENSE_CAP:
            raise DenseCapExceeded(f"Dense form is limited to n <= {DENSE_CAP}, got n = {self._n}")
        pair, env_dim = self.model.purification()
        state: Optional[StateVector] = None
        for j in range(1, self._n + 1):
            subsystems = [(f"A{j}", 2), (f"B{j}", 2)]
            if env_dim > 1:
                subsystems.append((f"E{j}", env_dim))
            vector = StateVector(Layout(subsystems), pair)
            state = vector if state is None else state.kron(vector)
        assert state is not None
        order = [f"A{j}" for j in range(1, self._n + 1)]
        if env_dim > 1:
            order += [f"E{j}" for j in range(1, self._n + 1)]
        order += [f"B{j}" for j in range(1, self._n + 1)]
        state = state.permuted(order)
        total_env = env_dim ** self._n
        layout = Layout([("A", 2 ** self._n * total_env), ("B", 2 ** self._n)])
        return DenseStrategy(
            self._n,
            state.relabeled(layout),
            ProductAliceDevice(self._n, self.model.alice, total_env),
            ProductBobDevice(self._n, self.model.bob, self.model.bell),
        )

    def conjugated(self) -> 'FactorizedStrategy':
        return FactorizedStrategy(self._n, self.model.conj())


class DenseStrategy(Strategy):
    """
    An explicit state on Alice's block "A" and Bob's block "B" with explicit devices.
    """

    def __init__(self, n: int, psi: StateVector, alice: AliceDevice, bob: BobDevice):
        super().__init__(n)
        if n > DENSE_CAP:
            raise DenseCapExceeded(f"Dense strategies are limited to n <= {DENSE_CAP}, got n = {n}")
        if psi.layout.labels != ("A", "B"):
            raise StrategyError(f"Dense strategy state must be laid out as (A, B), got {psi.layout}")
        if psi.layout.dims != (alice.dim, bob.dim):
            raise StrategyError(
                f"State dimensions {psi.layout.dims} do not match devices ({alice.dim}, {bob.dim})"
            )
        if alice.n != n or bob.n != n:
            raise StrategyError("Devices and strategy disagree on n")
        psi.check_normalized()
        self.psi = psi
        self.alice = alice
        self.bob = bob

    @property
    def alice_dim(self) -> int:
        return self.alice.dim

    @property
    def bob_dim(self) -> int:
        return self.bob.dim

    def contains(self, x: Question) -> bool:
        return self.alice.contains(x)

    def alice_observable(self, x: Question, j: int) -> Operator:
        self.require(x)
        return self.alice.observable(x, j)

    def bob_observable(self, y: int, j: int) -> Operator:
        return self.bob.observable(y, j)

    def bob_combination(self, q: int, j: int) -> Operator:
        return bob_combination_from(self.bob.observable, q, j)

    def bell_projector(self, j: int, b: int) -> Operator:
        return self.bob.bell_projector(j, b)

    def bob_operator(self, term: BobTerm) -> Operator:
        if term.y is not None:
            return self.bob_observable(term.y, term.position)
        if term.position >= self._n:
            raise StrategyError(f"No Bell measurement for the pair starting at {term.position}")
        signs = term.bell_signs or ()
        total = np.zeros((self.bob_dim, self.bob_dim), dtype=np.complex128)
        for b, sign in enumerate(signs, start=1):
            total = total + sign * self.bell_projector(term.position, b).matrix
        return Operator(total, hermitian=True)

    def correlator(self, x: Question, positions: Sequence[int], term: BobTerm) -> float:
        self.require(x)
        self._check_positions(positions, term)
        vector = self.psi.apply(self.bob_operator(term), ["B"])
        for j in positions:
            vector = vector.apply(self.alice_observable(x, j), ["A"])
        return self.psi.inner(vector).real

    def joint_distribution(
            self, x: Question, y: BobLabel
    ) -> Tuple[Tuple[Answer, ...], Tuple[Answer, ...], np.ndarray]:
        """
        Born probabilities of every (Alice answer, Bob answer) pair.
        """
        self.require(x)
        alice = self.alice.family(x)
        bob = self.bob.family(y)
        probabilities = np.zeros((len(alice.answers), len(bob.answers)))
        for a, alice_projector in enumerate(alice.projectors):
            projected = self.psi.apply(alice_projector, ["A"])
            for b, bob_projector in enumerate(bob.projectors):
                probabilities[a, b] = projected.apply(bob_projector, ["B"]).norm() ** 2
        return alice.answers, bob.answers, probabilities

    def sample_rounds(
            self, x: Question, y: BobLabel, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        alice_answers, bob_answers, probabilities = self.joint_distribution(x, y)
        drawn = rng.choice(probabilities.size, size=count, p=_normalized(probabilities.reshape(-1)))
        alice_index, bob_index = np.divmod(drawn, len(bob_answers))
        alice = np.array(alice_answers, dtype=np.int8).reshape(len(alice_answers), self._n)[alice_index]
        width = answer_length(self._n, y)
        bob = np.array(bob_answers, dtype=np.int8).reshape(len(bob_answers), width)[bob_index]
        return alice, bob

    def _build_dense(self) -> 'DenseStrategy':
        return self

    def conjugated(self) -> 'DenseStrategy':
        return DenseStrategy(self._n, self.psi.conj(), self.alice.conj(), self.bob.conj())


def honest_strategy(n: int) -> FactorizedStrategy:
    """
    n Bell pairs measured with the ideal observables.
    """
    return FactorizedStrategy(n, honest_pair())


def deterministic_strategy(n: int) -> FactorizedStrategy:
    """
    Every observable is the identity and every Bell measurement answers 1.
    """
    zero = np.zeros((4, 4))
    return FactorizedStrategy(n, PairModel(
        rho=honest_pair().rho,
        alice={q: np.eye(2) for q in range(1, 6)},
        bob={y: np.eye(2) for y in OBSERVABLE_LABELS},
        bell=(np.eye(4), zero, zero, zero),
    ))


def depolarize(strategy: Strategy, spec: NoiseSpec) -> FactorizedStrategy:
    """
    Replace every pair state rho by (1-p) rho + p I/4. Measurements are unchanged.
    """
    spec.validate()
    if not isinstance(strategy, FactorizedStrategy):
        raise StrategyError("Only factorized strategies can be depolarized")
    if not spec.active:
        return strategy
    return FactorizedStrategy(strategy.n, strategy.model.depolarized(spec.p))


def conjugated(strategy: Strategy) -> Strategy:
    return strategy.conjugated()


def with_hidden_alice_sector(strategy: Strategy, rng: np.random.Generator) -> DenseStrategy:
    """
    The same correlations, but Alice's devices act differently on an unused
    sector of her block. Bob's side is untouched.
    """
    dense = strategy.dense()
    amplitudes = dense.psi.amplitudes.reshape(dense.alice_dim, 1, dense.bob_dim)
    padded = np.concatenate([amplitudes, np.zeros_like(amplitudes)], axis=1)
    layout = Layout([("A", dense.alice_dim * 2), ("B", dense.bob_dim)])
    rotation = random_unitary(dense.alice_dim, rng)
    return DenseStrategy(dense.n, StateVector(layout, padded),
                         HiddenSectorAliceDevice(dense.alice, rotation), dense.bob)


def _encode_matrix(matrix: np.ndarray) -> Dict[str, Any]:
    array = np.asarray(matrix, dtype=np.complex128)
    interleaved = np.stack([array.real, array.imag], axis=-1).astype("<f8")
    return {
        "shape": list(array.shape),
        "data": base64.b64encode(interleaved.tobytes()).decode("ascii"),
    }


def _decode_matrix(payload: Mapping[str, Any], where: str) -> np.ndarray:
    try:
        shape = tuple(int(size) for size in payload["shape"])
        raw = np.frombuffer(base64.b64decode(payload["data"], validate=True), dtype="<f8")
    except (KeyError, TypeError, ValueError) as error:
        raise StrategyError(f"Malformed matrix payload at {where}: {error}") from error
    if raw.size != 2 * int(np.prod(shape)):
        raise StrategyError(f"Matrix payload at {where} does not match its shape {list(shape)}")
    return (raw[0::2] + 1j * raw[1::2]).reshape(shape)


def _encode_family(label: BobLabel, family: MeasurementFamily) -> Dict[str, Any]:
    return {
        "answers": [format_answer(label, answer) for answer in family.answers],
        "projectors": [_encode_matrix(p.matrix) for p in family.projectors],
    }


def _decode_family(name: str, label: BobLabel, raw: Mapping[str, Any]) -> MeasurementFamily:
    try:
        answers = [parse_answer(label, text) for text in raw["answers"]]
        payloads = raw["projectors"]
    except (KeyError, TypeError) as error:
        raise StrategyError(f"Family {name!r} is malformed: {error}") from error
    projectors = [
        Operator(_decode_matrix(payload, f"{name}[{index}]"), projector=True)
        for index, payload in enumerate(payloads)
    ]
    return MeasurementFamily(name, answers, projectors).validate()


def save_strategy(strategy: Strategy, path: PathLike, questions: QuestionSet) -> None:
    """
    Write the dense form of a strategy, with Alice's families for `questions`.
    """
    dense = strategy.dense()
    bob_labels = ExplicitBobDevice.required_labels(dense.n)
    document = {
        "format": STRATEGY_FORMAT,
        "version": STRATEGY_VERSION,
        "n": dense.n,
        "m": questions.m,
        "layout": {"A": dense.alice_dim, "B": dense.bob_dim},
        "state": _encode_matrix(dense.psi.amplitudes),
        "index": {
            "alice": questions.to_lines(),
            "bob": [str(label) for label in bob_labels],
        },
        "alice": {
            str(x): _encode_family(1, dense.alice.family(x)) for x in questions
        },
        "bob": {
            str(label): _encode_family(label, dense.bob.family(label)) for label in bob_labels
        },
    }
    target = to_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as file:
        json.dump(document, file, sort_keys=True, indent=2, ensure_ascii=False)
        file.write("\n")


def load_strategy(path: PathLike) -> DenseStrategy:
    """
    Read and validate an adversarial strategy file.
    """
    target = to_path(path)
    try:
        with open(target, "r", encoding="utf-8") as file:
            document = json.load(file)
    except OSError as error:
        raise StrategyError(f"Could not read strategy {str(target)!r}: {error}") from error
    except json.JSONDecodeError as error:
        raise StrategyError(f"Strategy {str(target)!r} is not valid JSON: {error}") from error

    if not isinstance(document, dict) or document.get("format") != STRATEGY_FORMAT:
        raise StrategyError(f"{str(target)!r} is not a {STRATEGY_FORMAT} file")
    if document.get("version") != STRATEGY_VERSION:
        raise StrategyError(f"Unsupported strategy file version {document.get('version')!r}")

    try:
        n = int(document["n"])
        m = int(document.get("m", 5))
        alice_dim = int(document["layout"]["A"])
        bob_dim = int(document["layout"]["B"])
        alice_raw = document["alice"]
        bob_raw = document["bob"]
        state_raw = document["state"]
    except (KeyError, TypeError, ValueError) as error:
        raise StrategyError(f"Strategy {str(target)!r} is missing a field: {error}") from error

    layout = Layout([("A", alice_dim), ("B", bob_dim)])
    psi = StateVector(layout, _decode_matrix(state_raw, "state"))

    alice_families = {
        Question.parse(text, m): _decode_family(f"alice:{text}", 1, raw)
        for text, raw in alice_raw.items()
    }
    for label in ExplicitBobDevice.required_labels(n):
        if str(label) not in bob_raw:
            raise StrategyError(f"Bob family {str(label)!r} is missing from {str(target)!r}")
    bob_families = {
        check_bob_label(label): _decode_family(f"bob:{label}", check_bob_label(label), raw)
        for label, raw in bob_raw.items()
    }
    LOGGER.debug("Loaded strategy with %d Alice questions from %s", len(alice_families), target)
    return DenseStrategy(
        n, psi,
        ExplicitAliceDevice(n, alice_dim, alice_families),
        ExplicitBobDevice(n, bob_dim, bob_families),
    )
