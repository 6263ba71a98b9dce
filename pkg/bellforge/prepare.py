"""
Remote state preparation: Bob's post-measurement states after Alice answers a
special question, their distance from the ideal e / e* mixture, and the
probabilistic trace-distance bound that turns an isometry distance into a bound
on how often a prepared state is far from ideal.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import QuestionError, ZeroProbabilityError
from .linalg import (Layout, Operator, StateVector, pure_trace_distance,
                     random_state, summed, tensor_product, trace_norm)
from .logging import PrettyLogger
from .progress import track
from .quantum import (conjugate_outcomes, eigenstate, format_outcomes,
                      outcome_strings, pauli)
from .questions import Question, QuestionSet
from .selftest import (IsometryPlan, IsometryResult, apply_isometry, reference_state,
                       vb_matrix)
from .strategy import DenseStrategy, Strategy
from .utils import substream

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

MIN_PROBABILITY = 1e-12
ROBUST_EXPONENT = 2.0 / 3.0


def _alice_projector(dense: DenseStrategy, chi: Question, a: Sequence[int]) -> Operator:
    family = dense.alice.family(chi)
    answer = tuple(int(sign) for sign in a)
    try:
        return family.projectors[family.answers.index(answer)]
    except ValueError as error:
        raise QuestionError(f"{format_outcomes(answer)} is not an answer to {chi}") from error


def outcome_probability(strategy: Strategy, chi: Question, a: Sequence[int]) -> float:
    dense = strategy.dense()
    return dense.psi.apply(_alice_projector(dense, chi, a), ["A"]).norm() ** 2


def post_measurement_rho(strategy: Strategy, chi: Question, a: Sequence[int]) -> Operator:
    """
    Bob's reduced state after Alice answers a to chi, normalized.
    """
    dense = strategy.dense()
    projected = dense.psi.apply(_alice_projector(dense, chi, a), ["A"])
    probability = projected.norm() ** 2
    if probability < MIN_PROBABILITY:
        raise ZeroProbabilityError(
            f"Outcome {format_outcomes(a)} of {chi} has probability {probability:.3e}"
        )
    return projected.reduced(["B"]) / probability


def _qubit_payload(chi: Question, outcomes: Sequence[int], flag: int) -> np.ndarray:
    """
    (x)_k |e_k><e_k| (x) |flag><flag|, ordered as B'_1, B''_1, B'_2, ...
    """
    flag_projector = np.diag([1.0, 0.0]) if flag == 0 else np.diag([0.0, 1.0])
    parts = []
    for basis, sign in zip(chi.symbols, outcomes):
        parts += [eigenstate(basis, sign).projector().matrix, flag_projector]
    return tensor_product(parts).matrix


def ideal_target(chi: Question, a: Sequence[int], beta0: Operator, beta1: Operator) -> Operator:
    """
    beta_0 (x) |e><e| (x) |0><0| + beta_1 (x) |e*><e*| (x) |1><1|, in the row
    order of Bob's isometry output.
    """
    if len(a) != chi.n:
        raise QuestionError(f"Outcome string of length {len(a)} does not match {chi}")
    conjugate = conjugate_outcomes(a, chi.symbols)
    target = (np.kron(beta0.matrix, _qubit_payload(chi, a, 0))
              + np.kron(beta1.matrix, _qubit_payload(chi, conjugate, 1)))
    return Operator(target, hermitian=True)


@dataclass
class OutcomeEntry:
    probability: float
    distance: Optional[float]


@dataclass
class PrepReport:
    """
    Per-outcome probabilities and trace distances for one special question.
    """
    chi: Question
    per_outcome: Dict[str, OutcomeEntry]
    beta0_trace: float
    beta1_trace: float
    threshold: float
    tolerance: float = 1e-9
    specialization: Optional['SpecializationReport'] = None

    @property
    def total_probability(self) -> float:
        return sum(entry.probability for entry in self.per_outcome.values())

    @property
    def exceed_probability(self) -> float:
        return sum(
            entry.probability for entry in self.per_outcome.values()
            if entry.distance is not None and entry.distance > self.threshold + self.tolerance
        )

    @property
    def max_distance(self) -> float:
        return max([0.0] + [e.distance for e in self.per_outcome.values() if e.distance is not None])

    def to_json(self) -> Dict[str, object]:
        result: Dict[str, object] = {
            "chi": str(self.chi),
            "per_outcome": [
                {"a": a, "p": entry.probability, "D": entry.distance}
                for a, entry in self.per_outcome.items()
            ],
            "beta0_trace": self.beta0_trace,
            "beta1_trace": self.beta1_trace,
            "threshold": self.threshold,
            "exceed_probability": self.exceed_probability,
        }
        if self.specialization is not None:
            result["specialization"] = self.specialization.to_json()
        return result


def prep_distance_report(
        strategy: Strategy,
        chi: Question,
        threshold: Optional[float] = None,
        specials: Optional[QuestionSet] = None,
        tolerance: float = 1e-9,
) -> PrepReport:
    """
    D(a) = 1/2 |V_B rho_B^(a) V_B^dagger - ideal target|_1 for every outcome a.

    Without an explicit threshold the robust-probability specialization is run
    and its delta^(2/3) is used.
    """
    if specials is not None and chi not in specials:
        raise QuestionError(f"{chi} is not a special question")
    dense = strategy.dense()
    specialization = None
    if threshold is None:
        specialization = robust_prob_specialization(dense, chi)
        threshold = specialization.threshold

    isometry = vb_matrix(dense, chi)
    xi0, xi1 = IsometryPlan.build(dense, chi).junk(dense.psi)
    beta0, beta1 = xi0.reduced(["B"]), xi1.reduced(["B"])

    per_outcome: Dict[str, OutcomeEntry] = {}
    for a in track(outcome_strings(dense.n), "outcomes", "outcomes"):
        probability = outcome_probability(dense, chi, a)
        if probability < MIN_PROBABILITY:
            per_outcome[format_outcomes(a)] = OutcomeEntry(probability, None)
            continue
        rho = post_measurement_rho(dense, chi, a)
        mapped = isometry @ rho.matrix @ isometry.conj().T
        target = ideal_target(chi, a, beta0, beta1)
        distance = 0.5 * trace_norm(Operator(mapped - target.matrix, hermitian=True))
        per_outcome[format_outcomes(a)] = OutcomeEntry(probability, distance)

    report = PrepReport(
        chi, per_outcome,
        float(np.trace(beta0.matrix).real), float(np.trace(beta1.matrix).real),
        threshold, tolerance, specialization,
    )
    LOGGER.debug("Preparation for %s: max D = %.3e, exceed = %.3e",
                 chi, report.max_distance, report.exceed_probability)
    return report


VectorPair = Tuple[StateVector, StateVector]


@dataclass
class OracleResult:
    """
    The probabilistic trace-distance bound evaluated on one family.
    """
    delta: float
    c: float
    lhs: float
    hypothesis_holds: bool
    normalized: bool
    exceed_probability: float
    distances: Dict[Tuple[str, int], float] = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return 4.0 * self.delta ** (2.0 * (1.0 - self.c))

    @property
    def passed(self) -> bool:
        return self.exceed_probability <= self.bound + 1e-9

    def to_json(self) -> Dict[str, object]:
        return {
            "delta": self.delta,
            "c": self.c,
            "lhs": self.lhs,
            "hypothesis_holds": self.hypothesis_holds,
            "normalized": self.normalized,
            "exceed_probability": self.exceed_probability,
            "bound": self.bound,
            "passed": self.passed,
        }


def _normalized_distance(u: StateVector, v: StateVector) -> float:
    if v.norm() == 0:
        return 1.0
    return pure_trace_distance(u.normalized(), v.normalized())


def robust_prob_oracle(
        families: Mapping[str, Tuple[float, Sequence[VectorPair]]],
        delta: float,
        c: float = ROBUST_EXPONENT,
        tolerance: float = 1e-9,
) -> OracleResult:
    """
    families maps sigma to (pi(sigma), [(u_omega, v_omega)]). With
    sum_sigma pi sum_omega |u - v|^2 <= delta^2, the mass of pairs whose
    normalized vectors are more than delta^c apart in trace distance is at most
    4 delta^(2(1 - c)).
    """
    if delta < 0:
        raise QuestionError(f"delta must be non-negative, got {delta}")
    if not 0.0 < c < 1.0:
        raise QuestionError(f"c must lie in (0, 1), got {c}")
    lhs = 0.0
    normalized = True
    exceed = 0.0
    distances: Dict[Tuple[str, int], float] = {}
    threshold = delta ** c
    for sigma, (weight, pairs) in families.items():
        mass = sum(u.norm() ** 2 for u, _ in pairs)
        normalized = normalized and abs(mass - 1.0) <= 1e-9
        for omega, (u, v) in enumerate(pairs):
            lhs += weight * (u - v).norm() ** 2
            if u.norm() == 0:
                continue
            distance = _normalized_distance(u, v)
            distances[(sigma, omega)] = distance
            if distance > threshold + tolerance:
                exceed += weight * u.norm() ** 2
    result = OracleResult(delta, c, lhs, lhs <= delta ** 2 + tolerance, normalized, exceed, distances)
    if not result.hypothesis_holds:
        PRETTY.warning(f"Oracle hypothesis violated: {lhs:.3e} > delta^2 = {delta ** 2:.3e}")
    return result


def synthetic_family(
        rng: np.random.Generator,
        delta: float,
        sigmas: int = 3,
        omegas: int = 4,
        dim: int = 4,
) -> Dict[str, Tuple[float, List[VectorPair]]]:
    """
    A random family meeting the oracle hypothesis with equality: normalized u,
    and v = u + e with the errors scaled so that the weighted total is delta^2.
    """
    layout = Layout([("v", dim)])
    weights = rng.dirichlet(np.ones(sigmas))
    us: List[List[np.ndarray]] = []
    errors: List[List[np.ndarray]] = []
    for _ in range(sigmas):
        raw = [random_state(layout, rng).amplitudes * rng.uniform(0.1, 1.0) for _ in range(omegas)]
        total = math.sqrt(sum(np.linalg.norm(u) ** 2 for u in raw))
        us.append([u / total for u in raw])
        errors.append([random_state(layout, rng).amplitudes * rng.exponential() for _ in range(omegas)])
    size = sum(w * sum(np.linalg.norm(e) ** 2 for e in es) for w, es in zip(weights, errors))
    scale = delta / math.sqrt(size) if size > 0 else 0.0
    return {
        f"s{index}": (float(weight), [
            (StateVector(layout, u), StateVector(layout, u + scale * e)) for u, e in zip(u_list, e_list)
        ])
        for index, (weight, u_list, e_list) in enumerate(zip(weights, us, errors))
    }


@dataclass
class OracleSuite:
    count: int
    c: float
    results: List[OracleResult]

    @property
    def violations(self) -> int:
        return sum(1 for result in self.results if result.hypothesis_holds and not result.passed)

    @property
    def hypothesis_failures(self) -> int:
        return sum(1 for result in self.results if not result.hypothesis_holds)

    @property
    def worst_margin(self) -> float:
        """
        The largest exceed probability minus its bound. Negative means slack everywhere.
        """
        return max((r.exceed_probability - r.bound for r in self.results), default=0.0)

    def to_json(self) -> Dict[str, object]:
        return {
            "count": self.count,
            "c": self.c,
            "violations": self.violations,
            "hypothesis_failures": self.hypothesis_failures,
            "worst_margin": self.worst_margin,
        }


def oracle_suite(seed: int, count: int = 1000, c: float = ROBUST_EXPONENT) -> OracleSuite:
    """
    Run the oracle on `count` synthetic families, each from its own substream.
    """
    results = []
    for index in track(list(range(count)), "oracle", "families"):
        rng = substream(seed, "oracle", index)
        delta = float(rng.uniform(0.0, 0.5))
        results.append(robust_prob_oracle(synthetic_family(rng, delta), delta, c))
    return OracleSuite(count, c, results)


@dataclass
class SpecializationReport:
    """
    The oracle applied to the outcome branches of a real strategy:
    u_a = V Pi_a psi against the reference branch M'_a psi'.
    """
    chi: Question
    delta: float
    delta_from_products: float
    oracle: OracleResult

    @property
    def threshold(self) -> float:
        return self.delta ** ROBUST_EXPONENT

    @property
    def consistent(self) -> bool:
        return abs(self.delta - self.delta_from_products) <= 1e-9

    def to_json(self) -> Dict[str, object]:
        return {
            "chi": str(self.chi),
            "delta": self.delta,
            "delta_from_products": self.delta_from_products,
            "threshold": self.threshold,
            "oracle": self.oracle.to_json(),
        }


def robust_prob_specialization(
        strategy: Strategy, chi: Question, isometry: Optional[IsometryResult] = None
) -> SpecializationReport:
    """
    delta^2 = sum_a |V Pi_a psi - M'_a psi'|^2, where M'_a psi' is the reference
    outcome branch 2^-n sum_s a^s ref_s. By orthogonality of the characters a^s
    this equals the mean of the squared product distances.
    """
    dense = strategy.dense()
    n = dense.n
    if isometry is None:
        isometry = apply_isometry(dense, chi)
    plan = IsometryPlan.build(dense, chi)
    layout = isometry.extracted.layout
    xi0, xi1 = isometry.junk_plus, isometry.junk_minus

    references: Dict[Tuple[int, ...], StateVector] = {}
    for key in isometry.product_distances:
        bits = tuple(int(bit) for bit in key)
        ops = {k: pauli(chi.symbol(k)).matrix for k, bit in enumerate(bits, start=1) if bit}
        flips = sum(1 for k, bit in enumerate(bits, start=1) if bit and chi.symbol(k) == 3)
        references[bits] = reference_state(xi0, xi1, layout, ops, (-1.0) ** flips)

    pairs: List[VectorPair] = []
    for a in outcome_strings(n):
        u = plan.apply(dense.psi.apply(_alice_projector(dense, chi, a), ["A"]))
        branches = [
            reference * (float(np.prod([a[k] for k in range(n) if bits[k]])) / 2 ** n)
            for bits, reference in references.items()
        ]
        pairs.append((u, summed(branches)))

    delta = math.sqrt(sum((u - v).norm() ** 2 for u, v in pairs))
    from_products = math.sqrt(
        sum(d ** 2 for d in isometry.product_distances.values()) / len(isometry.product_distances)
    )
    oracle = robust_prob_oracle({str(chi): (1.0, pairs)}, delta, ROBUST_EXPONENT)
    return SpecializationReport(chi, delta, from_products, oracle)
