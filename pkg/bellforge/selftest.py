"""
Self-testing: Bob's regularized observables, the operator relations they must
satisfy, and the local swap / phase-kickback isometry that extracts n Bell pairs
from a strategy.

The isometry appends four qubits per position. W^(j) swaps the j-th qubit of
Alice and of Bob into A'_j and B'_j. K^(j) then kicks the sign of the leftover
z observable into A''_j and B''_j, which records whether the strategy behaved
like the reference or like its complex conjugate.
"""

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DenseCapExceeded, QuestionError, StrategyError
from .linalg import Layout, Operator, StateVector, regularize, vector_distance
from .logging import PrettyLogger
from .quantum import SQRT2, pauli
from .questions import Question, QuestionSet
from .strategy import DenseStrategy, ProductAliceDevice, Strategy

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

AMPLITUDE_CAP = 2 ** 22
SLACK = 1e-9
GLOBAL_CONJ_FACTOR = 118.0

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / SQRT2

# Multiples of sqrt(epsilon) bounding each relation family
RELATION_FACTORS: Dict[str, float] = {
    "symmetry": 2.0,
    "comm_bob": 8.0,
    "comm_alice": 16.0,
    "acomm_alice": 2.0 * (1.0 + SQRT2),
    "conj": 21.0,
}
ACOMM_BOB_FACTORS: Dict[Tuple[int, int], float] = {
    (1, 2): 2.0 * (3.0 + SQRT2),
    (1, 3): 2.0 * (4.0 + SQRT2),
    (2, 3): 2.0 * (5.0 + SQRT2),
}


def _check_special(chi: Question, specials: Optional[QuestionSet]) -> None:
    if specials is not None and chi not in specials:
        raise QuestionError(f"{chi} is not a special question")


def regularized_Q(strategy: Strategy, j: int, q: int) -> Operator:  # pylint: disable=invalid-name
    """
    The unitary regularization of Bob's combination Q_q^(j), q in 1..3.
    """
    if q not in (1, 2, 3):
        raise StrategyError(f"Regularized combinations exist for q in 1..3, got {q}")
    return regularize(strategy.bob_combination(q, j))


def _alice(dense: DenseStrategy, chi: Question, j: int, q: int) -> Operator:
    return dense.alice_observable(chi.replace(j, q), j)


def _on_alice(vector: StateVector, *ops: Operator) -> StateVector:
    """
    Apply Alice operators, rightmost first.
    """
    for op in reversed(ops):
        vector = vector.apply(op, ["A"])
    return vector


def _on_bob(vector: StateVector, *ops: Operator) -> StateVector:
    for op in reversed(ops):
        vector = vector.apply(op, ["B"])
    return vector


@dataclass
class RelationReport:
    """
    Residuals |X psi| of every operator relation for one special question.
    """
    chi: Question
    symmetry: Dict[Tuple[int, int], float] = field(default_factory=dict)
    comm_bob: Dict[Tuple[int, int, int, int], float] = field(default_factory=dict)
    comm_alice: Dict[Tuple[int, int, int, int], float] = field(default_factory=dict)
    acomm_alice: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    acomm_bob: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    conj: Dict[Tuple[int], float] = field(default_factory=dict)

    def families(self) -> Dict[str, Dict]:
        return {
            "symmetry": self.symmetry,
            "comm_bob": self.comm_bob,
            "comm_alice": self.comm_alice,
            "acomm_alice": self.acomm_alice,
            "acomm_bob": self.acomm_bob,
            "conj": self.conj,
        }

    def entries(self) -> List[Tuple[str, Tuple[int, ...], float]]:
        return [
            (family, key, value)
            for family, values in self.families().items()
            for key, value in values.items()
        ]

    @property
    def eta(self) -> float:
        return max([0.0] + [value for _, _, value in self.entries()])

    @property
    def worst_family(self) -> Optional[str]:
        worst = max(self.entries(), key=lambda entry: entry[2], default=None)
        if worst is None or worst[2] <= SLACK:
            return None
        return f"{worst[0]} {worst[1]}"

    @staticmethod
    def bound(family: str, key: Tuple[int, ...], epsilon: float) -> float:
        if family == "acomm_bob":
            factor = ACOMM_BOB_FACTORS[(key[1], key[2])]
        else:
            factor = RELATION_FACTORS[family]
        return factor * math.sqrt(max(epsilon, 0.0))

    def violations(self, epsilon: float) -> List[Tuple[str, Tuple[int, ...], float, float]]:
        """
        Every entry above its bound at the audited epsilon, as
        (family, key, residual, bound).
        """
        result = []
        for family, key, value in self.entries():
            bound = self.bound(family, key, epsilon)
            if value > bound + SLACK:
                result.append((family, key, value, bound))
        return result

    def to_json(self) -> Dict[str, object]:
        table = {
            family: {",".join(str(part) for part in key): value for key, value in values.items()}
            for family, values in self.families().items()
        }
        return {"chi": str(self.chi), "table": table, "eta": self.eta, "worst": self.worst_family}


def relation_check(
        strategy: Strategy,
        chi: Question,
        specials: Optional[QuestionSet] = None,
        chi_prime: Optional[Question] = None,
) -> RelationReport:
    """
    Measure every operator relation on the strategy's state.

    The conjugation relation at (j, j+1) uses Alice's measurement for chi'
    (default chi) with both positions set to the same basis.
    """
    _check_special(chi, specials)
    dense = strategy.dense()
    n = dense.n
    psi = dense.psi
    chi_prime = chi if chi_prime is None else chi_prime
    report = RelationReport(chi)

    regular = {(j, q): regularized_Q(dense, j, q) for j in range(1, n + 1) for q in (1, 2, 3)}
    alice = {(j, q): _alice(dense, chi, j, q) for j in range(1, n + 1) for q in (1, 2, 3)}

    for j in range(1, n + 1):
        for q in (1, 2, 3):
            report.symmetry[(j, q)] = vector_distance(
                _on_alice(psi, alice[(j, q)]), _on_bob(psi, regular[(j, q)])
            )

    for j, k in itertools.combinations(range(1, n + 1), 2):
        for q, r in itertools.product((1, 2, 3), repeat=2):
            first, second = regular[(j, q)], regular[(k, r)]
            report.comm_bob[(j, k, q, r)] = vector_distance(
                _on_bob(psi, first, second), _on_bob(psi, second, first)
            )
            first, second = alice[(j, q)], alice[(k, r)]
            report.comm_alice[(j, k, q, r)] = vector_distance(
                _on_alice(psi, first, second), _on_alice(psi, second, first)
            )

    for j in range(1, n + 1):
        for q, r in itertools.combinations((1, 2, 3), 2):
            first, second = alice[(j, q)], alice[(j, r)]
            report.acomm_alice[(j, q, r)] = (
                _on_alice(psi, first, second) + _on_alice(psi, second, first)
            ).norm()
            first, second = regular[(j, q)], regular[(j, r)]
            report.acomm_bob[(j, q, r)] = (
                _on_bob(psi, first, second) + _on_bob(psi, second, first)
            ).norm()

    for j in range(1, n):
        ops = []
        for q in (1, 2, 3):
            w = chi_prime.replace(j, q).replace(j + 1, q)
            ops += [dense.alice_observable(w, j), dense.alice_observable(w, j + 1)]
        report.conj[(j,)] = (psi + _on_alice(psi, *ops)).norm()

    LOGGER.debug("Relation check for %s: eta = %.3e", chi, report.eta)
    return report


def global_conj_check(strategy: Strategy) -> Dict[Tuple[int, int], float]:
    """
    |(I +- T3^(j))(I + i T2^(j) T1^(j))(I -+ T3^(j+1))(I + i T2^(j+1) T1^(j+1)) psi|
    for every j < n and both sign choices, keyed by (j, sign).
    """
    dense = strategy.dense()
    n = dense.n
    if n < 2:
        raise StrategyError("The global conjugation check needs at least two positions")
    identity = np.eye(dense.bob_dim)
    results: Dict[Tuple[int, int], float] = {}
    for j in range(1, n):
        t = {(k, q): regularized_Q(dense, k, q).matrix for k in (j, j + 1) for q in (1, 2, 3)}
        kick = {k: identity + 1j * t[(k, 2)] @ t[(k, 1)] for k in (j, j + 1)}
        for sign in (1, -1):
            op = ((identity + sign * t[(j, 3)]) @ kick[j]
                  @ (identity - sign * t[(j + 1, 3)]) @ kick[j + 1])
            results[(j, sign)] = dense.psi.apply(op, ["B"]).norm()
    return results


def linear_residuals(strategy: Strategy, chi: Question) -> Dict[Tuple[int, int], float]:
    """
    |A_4 psi - (A_1 + A_2)/sqrt2 psi| and |A_5 psi - (A_1 - A_2)/sqrt2 psi| per position.
    """
    dense = strategy.dense()
    psi = dense.psi
    results = {}
    for j in range(1, dense.n + 1):
        first = psi.apply(_alice(dense, chi, j, 1), ["A"])
        second = psi.apply(_alice(dense, chi, j, 2), ["A"])
        results[(j, 4)] = vector_distance(psi.apply(_alice(dense, chi, j, 4), ["A"]), (first + second) * (1 / SQRT2))
        results[(j, 5)] = vector_distance(psi.apply(_alice(dense, chi, j, 5), ["A"]), (first - second) * (1 / SQRT2))
    return results


def ancilla_labels(j: int) -> Tuple[str, str, str, str]:
    """
    The four qubits appended for position j: A'_j, B'_j, A''_j, B''_j.
    """
    return f"A'{j}", f"B'{j}", f"A''{j}", f"B''{j}"


def _swap_stage(vector: StateVector, system: str, ancilla: str,
                first: np.ndarray, kick: np.ndarray) -> StateVector:
    vector = vector.apply(HADAMARD, [ancilla])
    vector = vector.apply_controlled(ancilla, kick, [system])
    vector = vector.apply(HADAMARD, [ancilla])
    return vector.apply_controlled(ancilla, first, [system])


def _kickback_stage(vector: StateVector, system: str, ancilla: str, third: np.ndarray) -> StateVector:
    vector = vector.apply(HADAMARD, [ancilla])
    vector = vector.apply_controlled(ancilla, third, [system])
    return vector.apply(HADAMARD, [ancilla])


def _strip_environment(matrix: np.ndarray, local_dim: int, env_dim: int) -> np.ndarray:
    """
    M from an operator M (x) I_E whose environment factor comes last.
    """
    block = matrix.reshape(local_dim, env_dim, local_dim, env_dim)[:, 0, :, 0]
    if not np.allclose(np.kron(block, np.eye(env_dim)), matrix, atol=SLACK):
        raise StrategyError("Alice's operator acts on the environment register")
    return block


def _fresh_ancillas(j: int) -> StateVector:
    amplitudes = np.zeros(16, dtype=np.complex128)
    amplitudes[0] = 1.0
    return StateVector(Layout.qubits(ancilla_labels(j)), amplitudes)


@dataclass
class IsometryPlan:
    """
    The operators the isometry is built from: Alice's S_1..S_3 and Bob's
    regularized T_1..T_3 at every position.

    When Alice's block carries an environment register of dimension
    `env_dim` (its trailing factor), every Alice operator acts trivially on
    it and V is applied to all environment components at once.
    """
    n: int
    alice: List[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    bob: List[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    env_dim: int = 1
    _columns: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def build(cls, strategy: Strategy, chi: Question) -> 'IsometryPlan':
        dense = strategy.dense()
        alice = []
        bob = []
        for j in range(1, dense.n + 1):
            alice.append(tuple(_alice(dense, chi, j, q).matrix for q in (1, 2, 3)))
            bob.append(tuple(regularized_Q(dense, j, q).matrix for q in (1, 2, 3)))
        env_dim = dense.alice.env_dim if isinstance(dense.alice, ProductAliceDevice) else 1
        return cls(dense.n, alice, bob, env_dim)  # type: ignore

    def apply_alice(self, vector: StateVector, j: int, system: str = "A") -> StateVector:
        first, second, third = self.alice[j - 1]
        prime, _, double_prime, _ = ancilla_labels(j)
        vector = _swap_stage(vector, system, prime, first, -1j * second @ first)
        return _kickback_stage(vector, system, double_prime, third)

    def apply_bob(self, vector: StateVector, j: int, system: str = "B") -> StateVector:
        first, second, third = self.bob[j - 1]
        _, prime, _, double_prime = ancilla_labels(j)
        vector = _swap_stage(vector, system, prime, first, 1j * second @ first)
        return _kickback_stage(vector, system, double_prime, third)

    def ancilla_layout(self) -> Layout:
        return Layout.qubits([label for j in range(1, self.n + 1) for label in ancilla_labels(j)])

    def apply(self, vector: StateVector) -> StateVector:
        """
        V = V^(n) ... V^(1) on a vector over (A, B), with V^(j) = K^(j) W^(j).
        """
        if self.env_dim > 1:
            return self._apply_per_environment(vector)
        layout = vector.layout.concat(self.ancilla_layout())
        if layout.dim > AMPLITUDE_CAP:
            raise DenseCapExceeded(
                f"The isometry output has {layout.dim} amplitudes, the limit is {AMPLITUDE_CAP}"
            )
        zeros = np.zeros(16 ** self.n, dtype=np.complex128)
        zeros[0] = 1.0
        extended = StateVector(layout, np.kron(vector.amplitudes, zeros))
        for j in range(1, self.n + 1):
            extended = self.apply_alice(extended, j)
            extended = self.apply_bob(extended, j)
        return extended

    def columns(self, local_dim: int, bob_dim: int) -> np.ndarray:
        """
        V restricted to Alice's qubits and Bob's block, one column per basis
        vector of (A, B) without the environment. Rows are ordered as
        (A, B, A'_1, B'_1, A''_1, B''_1, ..., A''_n, B''_n).
        """
        if self._columns is not None:
            return self._columns
        dim = local_dim * bob_dim * 16 ** self.n
        if dim > AMPLITUDE_CAP:
            raise DenseCapExceeded(
                f"The isometry output has {dim} amplitudes per environment component, "
                f"the limit is {AMPLITUDE_CAP}"
            )
        local = IsometryPlan(
            self.n,
            [tuple(_strip_environment(op, local_dim, self.env_dim) for op in ops)  # type: ignore
             for ops in self.alice],
            self.bob,
        )
        count = local_dim * bob_dim
        vector = StateVector(Layout([("col", count), ("A", local_dim), ("B", bob_dim)]),
                             np.eye(count, dtype=np.complex128).reshape(-1))
        for j in range(1, self.n + 1):
            vector = vector.kron(_fresh_ancillas(j))
            vector = local.apply_alice(vector, j)
            vector = local.apply_bob(vector, j)
        self._columns = np.ascontiguousarray(np.moveaxis(vector.tensor(), 0, -1).reshape(dim, count))
        return self._columns

    def _apply_per_environment(self, vector: StateVector) -> StateVector:
        alice_dim, bob_dim = vector.layout.dims
        local_dim = alice_dim // self.env_dim
        columns = self.columns(local_dim, bob_dim)
        components = (vector.amplitudes.reshape(local_dim, self.env_dim, bob_dim)
                      .transpose(0, 2, 1).reshape(local_dim * bob_dim, self.env_dim))
        output = (columns @ components).reshape(local_dim, bob_dim, 16 ** self.n, self.env_dim)
        return StateVector(vector.layout.concat(self.ancilla_layout()),
                           output.transpose(0, 3, 1, 2).reshape(-1))

    def junk(self, psi: StateVector) -> Tuple[StateVector, StateVector]:
        """
        xi_0 = J_+^(n) ... J_+^(1) psi and xi_1 = J_-^(n) ... J_-^(1) psi, with
        J_+- = (I +- T3)(I + i T2 T1) / (2 sqrt2) acting on Bob.
        """
        dim = self.bob[0][0].shape[0]
        identity = np.eye(dim)
        plus, minus = psi, psi
        for first, second, third in self.bob:
            kick = identity + 1j * second @ first
            plus = plus.apply((identity + third) @ kick / (2 * SQRT2), ["B"])
            minus = minus.apply((identity - third) @ kick / (2 * SQRT2), ["B"])
        return plus, minus


def _ancilla_block(bit: int) -> np.ndarray:
    """
    Phi+ on (A'_j, B'_j) next to |bit bit> on (A''_j, B''_j).
    """
    phi = np.array([1, 0, 0, 1], dtype=np.complex128) / SQRT2
    flag = np.zeros(4, dtype=np.complex128)
    flag[3 * bit] = 1.0
    return np.kron(phi, flag)


def reference_state(
        xi0: StateVector,
        xi1: StateVector,
        layout: Layout,
        ops: Optional[Dict[int, np.ndarray]] = None,
        branch_sign: float = 1.0,
) -> StateVector:
    """
    Phi+^n (x) (|0..0>|0..0> xi_0 + sign |1..1>|1..1> xi_1), with a qubit
    operator applied on B'_k for each k in ops.
    """
    n = (len(layout) - 2) // 4
    zero, one = _ancilla_block(0), _ancilla_block(1)
    block0, block1 = zero, one
    for _ in range(n - 1):
        block0 = np.kron(block0, zero)
        block1 = np.kron(block1, one)
    vector = StateVector(layout, np.kron(xi0.amplitudes, block0)
                         + branch_sign * np.kron(xi1.amplitudes, block1))
    for k, op in sorted((ops or {}).items()):
        vector = vector.apply(op, [ancilla_labels(k)[1]])
    return vector


def _product_key(bits: Sequence[int]) -> str:
    return "".join(str(bit) for bit in bits)


@dataclass
class IsometryResult:
    """
    The extracted state V psi and its distances from the reference, plus the
    junk states and their weights.
    """
    chi: Question
    extracted: StateVector
    extracted_state_distance: float
    observable_distances: Dict[Tuple[int, int], float]
    product_distances: Dict[str, float]
    junk_plus: StateVector
    junk_minus: StateVector
    linear: Dict[Tuple[int, int], float]

    @property
    def junk_weights(self) -> Tuple[float, float]:
        return self.junk_plus.norm() ** 2, self.junk_minus.norm() ** 2

    @property
    def delta(self) -> float:
        """
        The largest distance over the state, every single observable and every product.
        """
        return max([self.extracted_state_distance]
                   + list(self.observable_distances.values())
                   + list(self.product_distances.values()))

    def to_json(self) -> Dict[str, object]:
        return {
            "chi": str(self.chi),
            "state_distance": self.extracted_state_distance,
            "observable_distances": {
                f"{k},{q}": value for (k, q), value in self.observable_distances.items()
            },
            "product_distances": dict(self.product_distances),
            "junk_weights": list(self.junk_weights),
            "linear_residuals": {f"{j},{q}": value for (j, q), value in self.linear.items()},
        }


def apply_isometry(
        strategy: Strategy, chi: Question, specials: Optional[QuestionSet] = None
) -> IsometryResult:
    """
    Apply V to psi and to every A psi the self-test certifies.

    In the second branch the extracted qubit is the complex conjugate, seen
    through an X flip. Only the z observable changes sign under that map.
    """
    _check_special(chi, specials)
    dense = strategy.dense()
    n = dense.n
    psi = dense.psi
    plan = IsometryPlan.build(dense, chi)
    xi0, xi1 = plan.junk(psi)

    extracted = plan.apply(psi)
    layout = extracted.layout
    state_distance = vector_distance(extracted, reference_state(xi0, xi1, layout))

    observable_distances = {}
    for k in range(1, n + 1):
        for q in range(1, 6):
            physical = plan.apply(psi.apply(_alice(dense, chi, k, q), ["A"]))
            reference = reference_state(xi0, xi1, layout, {k: pauli(q).matrix},
                                        -1.0 if q == 3 else 1.0)
            observable_distances[(k, q)] = vector_distance(physical, reference)

    product_distances = {}
    for bits in itertools.product((0, 1), repeat=n):
        product_distances[_product_key(bits)] = _product_distance(dense, plan, chi, bits, xi0, xi1, layout)

    result = IsometryResult(
        chi, extracted, state_distance, observable_distances, product_distances,
        xi0, xi1, linear_residuals(dense, chi),
    )
    LOGGER.debug("Isometry for %s: delta = %.3e, junk weights %s", chi, result.delta, result.junk_weights)
    return result


def _product_distance(dense: DenseStrategy, plan: IsometryPlan, chi: Question,
                      bits: Sequence[int], xi0: StateVector, xi1: StateVector, layout: Layout) -> float:
    vector = dense.psi
    ops = {}
    flips = 0
    for k, bit in enumerate(bits, start=1):
        if bit:
            vector = vector.apply(dense.alice_observable(chi, k), ["A"])
            ops[k] = pauli(chi.symbol(k)).matrix
            flips += chi.symbol(k) == 3
    reference = reference_state(xi0, xi1, layout, ops, (-1.0) ** flips)
    return vector_distance(plan.apply(vector), reference)


@dataclass(frozen=True)
class ProductActionCheck:
    distance: float
    delta: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.distance <= self.bound + SLACK


def product_action_check(
        strategy: Strategy,
        chi: Question,
        positions: Sequence[int],
        result: Optional[IsometryResult] = None,
) -> ProductActionCheck:
    """
    Distance of V (prod_k A_chi^(k)) psi from its reference for distinct
    positions, against (2m + 1) delta where delta bounds the m single-observable
    distances and the state distance.
    """
    dense = strategy.dense()
    chosen = sorted(set(positions))
    if len(chosen) != len(positions) or not chosen:
        raise QuestionError(f"Positions must be distinct and non-empty, got {list(positions)}")
    if chosen[0] < 1 or chosen[-1] > dense.n:
        raise QuestionError(f"Positions {list(positions)} out of range 1..{dense.n}")
    if result is None:
        result = apply_isometry(dense, chi)
    plan = IsometryPlan.build(dense, chi)
    bits = [1 if k in chosen else 0 for k in range(1, dense.n + 1)]
    distance = _product_distance(dense, plan, chi, bits, result.junk_plus, result.junk_minus,
                                 result.extracted.layout)
    delta = max([result.extracted_state_distance]
                + [result.observable_distances[(k, chi.symbol(k))] for k in chosen])
    return ProductActionCheck(distance, delta, (2 * len(chosen) + 1) * delta)


def vb_matrix(strategy: Strategy, chi: Question) -> np.ndarray:
    """
    Bob's half of the isometry as an explicit (dim_B 4^n) x dim_B matrix, with
    output rows ordered as (B, B'_1, B''_1, ..., B'_n, B''_n).
    """
    dense = strategy.dense()
    plan = IsometryPlan.build(dense, chi)
    n, dim = dense.n, dense.bob_dim
    ancillas = [label for j in range(1, n + 1) for label in (ancilla_labels(j)[1], ancilla_labels(j)[3])]
    layout = Layout([("col", dim), ("B", dim)]).concat(Layout.qubits(ancillas))
    if layout.dim > AMPLITUDE_CAP:
        raise DenseCapExceeded(f"V_B has {layout.dim} entries, the limit is {AMPLITUDE_CAP}")
    zeros = np.zeros(4 ** n, dtype=np.complex128)
    zeros[0] = 1.0
    vector = StateVector(layout, np.kron(np.eye(dim).reshape(-1), zeros))
    for j in range(1, n + 1):
        vector = plan.apply_bob(vector, j)
    tensor = np.moveaxis(vector.tensor(), 0, -1)
    return np.ascontiguousarray(tensor.reshape(dim * 4 ** n, dim))


def fingerprint(matrix: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(matrix, dtype=np.complex128).tobytes()).hexdigest()


def _controlled(dim: int, control_axis: int, target: np.ndarray) -> np.ndarray:
    """
    Controlled target on a (system, qubit, qubit) space, controlled by qubit 1 or 2.
    """
    flags = [np.eye(2), np.eye(2)]
    off = [np.eye(2), np.eye(2)]
    flags[control_axis - 1] = np.diag([0.0, 1.0])
    off[control_axis - 1] = np.diag([1.0, 0.0])
    return (np.kron(np.eye(dim), np.kron(*off))
            + np.kron(target, np.kron(*flags)))


def _local_hadamard(dim: int, axis: int) -> np.ndarray:
    parts = [np.eye(2), np.eye(2)]
    parts[axis - 1] = HADAMARD
    return np.kron(np.eye(dim), np.kron(*parts))


def _single_side(first: np.ndarray, second: np.ndarray, third: np.ndarray, kick_phase: complex) -> np.ndarray:
    dim = first.shape[0]
    h_prime = _local_hadamard(dim, 1)
    h_double = _local_hadamard(dim, 2)
    swap = (_controlled(dim, 1, first) @ h_prime
            @ _controlled(dim, 1, kick_phase * second @ first) @ h_prime)
    kickback = h_double @ _controlled(dim, 2, third) @ h_double
    embedding = np.kron(np.eye(dim), np.array([[1.0], [0.0], [0.0], [0.0]]))
    return kickback @ swap @ embedding


def single_copy_isometry(strategy: Strategy, chi: Question) -> Tuple[np.ndarray, float]:
    """
    The n = 1 isometry written out as V_A (x) V_B matrices, applied to psi and
    compared with apply_isometry. Returns the output vector over
    (A, B, A', B', A'', B'') and the distance between the two constructions.
    """
    dense = strategy.dense()
    if dense.n != 1:
        raise StrategyError(f"The single-copy isometry needs n = 1, got n = {dense.n}")
    plan = IsometryPlan.build(dense, chi)
    v_a = _single_side(*plan.alice[0], kick_phase=-1j)
    v_b = _single_side(*plan.bob[0], kick_phase=1j)
    output = np.kron(v_a, v_b) @ dense.psi.amplitudes
    layout = Layout([("A", dense.alice_dim), ("A'1", 2), ("A''1", 2),
                     ("B", dense.bob_dim), ("B'1", 2), ("B''1", 2)])
    explicit = StateVector(layout, output).permuted(["A", "B", "A'1", "B'1", "A''1", "B''1"])
    circuit = plan.apply(dense.psi)
    return explicit.amplitudes, vector_distance(explicit, circuit)


@dataclass
class SelfTestReport:
    """
    Relations, isometry distances and V_B fingerprints for a set of special questions.
    """
    epsilon: Optional[float]
    relations: Dict[str, RelationReport] = field(default_factory=dict)
    isometries: Dict[str, IsometryResult] = field(default_factory=dict)
    fingerprints: Dict[str, str] = field(default_factory=dict)
    global_conj: Dict[Tuple[int, int], float] = field(default_factory=dict)

    @property
    def eta(self) -> float:
        return max([0.0] + [report.eta for report in self.relations.values()])

    @property
    def vb_consistent(self) -> bool:
        return len(set(self.fingerprints.values())) <= 1

    @property
    def delta(self) -> float:
        return max([0.0] + [result.delta for result in self.isometries.values()])

    def to_json(self) -> Dict[str, object]:
        first = next(iter(self.isometries.values()), None)
        result: Dict[str, object] = {
            "eta_table": {chi: report.to_json() for chi, report in self.relations.items()},
            "eta": self.eta,
            "isometries": {chi: iso.to_json() for chi, iso in self.isometries.items()},
            "vb_fingerprints": dict(self.fingerprints),
            "vb_fingerprint": next(iter(self.fingerprints.values()), None),
            "vb_consistent": self.vb_consistent,
            "global_conj": {f"{j},{sign:+d}": value for (j, sign), value in self.global_conj.items()},
            "global_conj_bound": GLOBAL_CONJ_FACTOR * self.eta,
        }
        if first is not None:
            result["state_distance"] = max(iso.extracted_state_distance for iso in self.isometries.values())
            result["observable_distances"] = first.to_json()["observable_distances"]
            result["product_distances"] = first.to_json()["product_distances"]
            result["junk_weights"] = list(first.junk_weights)
        if self.epsilon is not None:
            result["epsilon"] = self.epsilon
            result["violations"] = {
                chi: [
                    {"family": family, "key": list(key), "residual": value, "bound": bound}
                    for family, key, value, bound in report.violations(self.epsilon)
                ]
                for chi, report in self.relations.items()
            }
        return result
