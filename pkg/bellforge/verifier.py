"""
The verifier's audit: every requested Bell expression and correlation, either
evaluated exactly on a strategy or estimated from trial records.

Three kinds of requests are made:

* a triple CHSH expression at every position j for every reduced string of j,
* perfect correlations between Alice's x+y / x-y questions and Bob's D_xy / E_xy,
* conjugation correlations between two neighbouring positions asked the same
  basis and Bob's Bell measurement on that pair.

Each request has its own deficit convention. The audit rescales them to a single
tolerance epsilon.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import (Callable, Dict, Iterable, List, Optional, Sequence, Tuple,
                    TypeVar)

import numpy as np

from .config import thread_count
from .errors import MissingCellError, QuestionError, StrategyError
from .linalg import Operator, operator_norm
from .logging import PrettyLogger
from .progress import ProgressSettings, progress_for
from .questions import Question, QuestionSet, reduced_set
from .quantum import SQRT2, format_outcomes
from .strategy import (Answer, BobLabel, BobTerm, Strategy, bell_group_index,
                       bell_label, check_bob_label, format_answer, parse_answer)
from .utils import PathLike, substream, to_path

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

T = TypeVar("T")

CHSH_MAX = 2 * SQRT2
TRIPLE_CHSH_MAX = 6 * SQRT2

# (Alice symbol, Bob label, sign) per block
CHSH_BLOCKS: Dict[str, Tuple[Tuple[int, int, int], ...]] = {
    "zx": ((3, 1, 1), (3, 2, 1), (1, 1, 1), (1, 2, -1)),
    "zy": ((3, 3, 1), (3, 4, 1), (2, 3, 1), (2, 4, -1)),
    "xy": ((1, 5, 1), (1, 6, 1), (2, 5, 1), (2, 6, -1)),
}

# (name, Alice symbol, Bob label, Bob label, sign): F = A - (B + sign B') / sqrt2
SOS_TERMS: Tuple[Tuple[str, int, int, int, int], ...] = (
    ("zx+", 3, 1, 2, 1),
    ("zx-", 1, 1, 2, -1),
    ("zy+", 3, 3, 4, 1),
    ("zy-", 2, 3, 4, -1),
    ("xy+", 1, 5, 6, 1),
    ("xy-", 2, 5, 6, -1),
)

# Which Bob observable pairs with which Alice symbol in the perfect correlations
PERFECT_PARTNERS = {4: 5, 5: 6}

SCALE_TRIPLE_CHSH = SQRT2
SCALE_PERFECT = 1.0
SCALE_CONJUGATION = 2.0


def conj_signs(q: int) -> Tuple[float, float, float, float]:
    """
    Coefficients of the four Bell projectors that reproduce sigma_q (x) sigma_q
    on a pair of Bob's qubits.
    """
    if q not in (1, 2, 3):
        raise QuestionError(f"Conjugation correlations exist for q in 1..3, got {q}")
    return (
        -1.0 if q == 2 else 1.0,
        -1.0 if q == 1 else 1.0,
        -1.0 if q == 3 else 1.0,
        -1.0,
    )


def conj_question(chi_prime: Question, j: int, q: int) -> Question:
    """
    chi' with both positions j and j+1 set to q.
    """
    return chi_prime.replace(j, q).replace(j + 1, q)


@dataclass(frozen=True)
class Correlator:
    """
    One expectation value <A_x^(positions) (x) Bob's term>, weighted by a coefficient.
    """
    x: Question
    positions: Tuple[int, ...]
    term: BobTerm
    coefficient: float = 1.0

    @property
    def label(self) -> BobLabel:
        if self.term.y is not None:
            return self.term.y
        return bell_label(self.term.position)


@dataclass(frozen=True)
class Request:
    """
    A requested Bell expression: a weighted sum of correlators with its ideal
    value and the factor that turns its deficit into the global tolerance.
    """
    family: str
    key: Tuple[object, ...]
    correlators: Tuple[Correlator, ...]
    target: float
    scale: float

    @property
    def name(self) -> str:
        return _key_name(self.family, self.key)


def _key_name(family: str, key: Tuple[object, ...]) -> str:
    if family == "triple_chsh":
        return f"j={key[0]} x={key[1]}"
    if family == "perfect_corr":
        return f"j={key[0]} chi={key[1]} which={key[2]}"
    return f"j={key[0]} q={key[1]} chi={key[2]}"


def _check_reduced(n: int, j: int, xj: Question) -> None:
    if not 1 <= j <= n:
        raise QuestionError(f"Position {j} out of range 1..{n}")
    if xj.n != n - 1:
        raise QuestionError(f"Reduced question {xj} must have length {n - 1}")


def chsh_correlators(j: int, xj: Question, block: str) -> Tuple[Correlator, ...]:
    if block not in CHSH_BLOCKS:
        raise QuestionError(f"Unknown CHSH block {block!r}")
    return tuple(
        Correlator(xj.insert(j, q), (j,), BobTerm(j, y=y), float(sign))
        for q, y, sign in CHSH_BLOCKS[block]
    )


def triple_chsh_request(j: int, xj: Question) -> Request:
    correlators = tuple(
        correlator for block in CHSH_BLOCKS for correlator in chsh_correlators(j, xj, block)
    )
    return Request("triple_chsh", (j, str(xj)), correlators, TRIPLE_CHSH_MAX, SCALE_TRIPLE_CHSH)


def perfect_request(j: int, chi: Question, which: int) -> Request:
    if which not in PERFECT_PARTNERS:
        raise QuestionError(f"Perfect correlations exist for symbols 4 and 5, got {which}")
    correlator = Correlator(chi.replace(j, which), (j,), BobTerm(j, y=PERFECT_PARTNERS[which]))
    return Request("perfect_corr", (j, str(chi), which), (correlator,), 1.0, SCALE_PERFECT)


def conj_request(n: int, j: int, q: int, chi_prime: Question) -> Request:
    if not 1 <= j < n:
        raise StrategyError(
            f"Conjugation correlations need a pair (j, j+1) inside 1..{n}, got j = {j}"
        )
    correlator = Correlator(conj_question(chi_prime, j, q), (j, j + 1),
                            BobTerm(j, bell_signs=conj_signs(q)))
    return Request("conj_corr", (j, q, str(chi_prime)), (correlator,), 1.0, SCALE_CONJUGATION)


def requests_for(specials: QuestionSet) -> List[Request]:
    """
    Every request of the audit, in a fixed order.
    """
    n = specials.n
    requests: List[Request] = []
    for j in range(1, n + 1):
        for xj in reduced_set(specials, j):
            requests.append(triple_chsh_request(j, xj))
    for chi in specials:
        for j in range(1, n + 1):
            for which in (4, 5):
                requests.append(perfect_request(j, chi, which))
    chi_prime = specials.members[0]
    for j in range(1, n):
        for q in (1, 2, 3):
            requests.append(conj_request(n, j, q, chi_prime))
    return requests


def requested_cells(specials: QuestionSet) -> List[Tuple[Question, BobLabel]]:
    """
    Every (question, Bob label) pair the audit needs samples for, sorted.
    """
    cells = {
        (correlator.x, correlator.label)
        for request in requests_for(specials)
        for correlator in request.correlators
    }
    return sorted(cells, key=lambda cell: (cell[0].values, str(cell[1])))


def correlator_count(specials: QuestionSet) -> int:
    return sum(len(request.correlators) for request in requests_for(specials))


def _evaluate(strategy: Strategy, request: Request) -> float:
    return sum(
        correlator.coefficient * strategy.correlator(correlator.x, correlator.positions, correlator.term)
        for correlator in request.correlators
    )


def chsh_value(strategy: Strategy, j: int, xj: Question, block: str) -> float:
    """
    A single CHSH block at position j. Quantum maximum 2 sqrt2, classical maximum 2.
    """
    _check_reduced(strategy.n, j, xj)
    return sum(
        c.coefficient * strategy.correlator(c.x, c.positions, c.term)
        for c in chsh_correlators(j, xj, block)
    )


def triple_chsh_value(
        strategy: Strategy, j: int, xj: Question, reduced: Optional[QuestionSet] = None
) -> float:
    """
    <C^(j)_xj>, the sum of three CHSH blocks sharing Alice's observables.
    """
    _check_reduced(strategy.n, j, xj)
    if reduced is not None and xj not in reduced:
        raise QuestionError(f"{xj} is not a reduced question for position {j}")
    return _evaluate(strategy, triple_chsh_request(j, xj))


def perfect_corr_value(strategy: Strategy, j: int, chi: Question, which: int) -> float:
    return _evaluate(strategy, perfect_request(j, chi, which))


def conj_corr_value(strategy: Strategy, j: int, q: int, chi_prime: Question) -> float:
    return _evaluate(strategy, conj_request(strategy.n, j, q, chi_prime))


def sos_residuals(strategy: Strategy, j: int, xj: Question) -> List[float]:
    """
    The norms |F psi| of the six squared terms of the triple CHSH
    sum-of-squares decomposition at position j.
    """
    _check_reduced(strategy.n, j, xj)
    dense = strategy.dense()
    residuals = []
    for _, q, first, second, sign in SOS_TERMS:
        alice = dense.alice_observable(xj.insert(j, q), j)
        bob = Operator((dense.bob_observable(first, j).matrix
                        + sign * dense.bob_observable(second, j).matrix) / SQRT2)
        residuals.append((dense.psi.apply(alice, ["A"]) - dense.psi.apply(bob, ["B"])).norm())
    return residuals


def sos_identity_gap(alice: Dict[int, np.ndarray], bob: Dict[int, np.ndarray]) -> float:
    """
    |(6 sqrt2 I - C) - sum_i F_i^2 / sqrt2|_op for one position, with Alice's
    observables on the first tensor factor and Bob's on the second.
    """
    dim_a = next(iter(alice.values())).shape[0]
    dim_b = next(iter(bob.values())).shape[0]
    eye_a, eye_b = np.eye(dim_a), np.eye(dim_b)

    def a(q: int) -> np.ndarray:
        return np.kron(alice[q], eye_b)

    def b(y: int) -> np.ndarray:
        return np.kron(eye_a, bob[y])

    bell = np.zeros((dim_a * dim_b, dim_a * dim_b), dtype=np.complex128)
    for block in CHSH_BLOCKS.values():
        for q, y, sign in block:
            bell = bell + sign * a(q) @ b(y)
    squares = np.zeros_like(bell)
    for _, q, first, second, sign in SOS_TERMS:
        term = a(q) - (b(first) + sign * b(second)) / SQRT2
        squares = squares + term.conj().T @ term
    return operator_norm(TRIPLE_CHSH_MAX * np.eye(dim_a * dim_b) - bell - squares / SQRT2)


@dataclass
class AuditEntry:
    """
    Value and deficit of one request, with its confidence radius when estimated.
    """
    value: float
    deficit: float
    scaled: float
    radius: Optional[float] = None
    samples: Optional[int] = None

    def to_json(self) -> Dict[str, object]:
        result: Dict[str, object] = {"value": self.value, "deficit": self.deficit, "scaled": self.scaled}
        if self.radius is not None:
            result["radius"] = self.radius
            result["samples"] = self.samples
        return result


@dataclass
class AuditReport:
    """
    All request values and the global tolerance epsilon derived from them.
    """
    n: int
    triple_chsh: Dict[Tuple[int, str], AuditEntry] = field(default_factory=dict)
    perfect_corr: Dict[Tuple[int, str, int], AuditEntry] = field(default_factory=dict)
    conj_corr: Dict[Tuple[int, int, str], AuditEntry] = field(default_factory=dict)
    correlator_count: int = 0
    alpha: Optional[float] = None

    def _families(self) -> Dict[str, Dict]:
        return {
            "triple_chsh": self.triple_chsh,
            "perfect_corr": self.perfect_corr,
            "conj_corr": self.conj_corr,
        }

    def add(self, request: Request, entry: AuditEntry) -> None:
        self._families()[request.family][request.key] = entry

    def entries(self) -> Iterable[Tuple[str, Tuple[object, ...], AuditEntry]]:
        for family, entries in self._families().items():
            for key, entry in entries.items():
                yield family, key, entry

    @property
    def epsilon(self) -> float:
        """
        max(0, sqrt2 x triple CHSH deficit, perfect deficit, 2 x conjugation deficit)
        """
        return max([0.0] + [entry.scaled for _, _, entry in self.entries()])

    @property
    def epsilon_upper(self) -> Optional[float]:
        """
        The same maximum with every deficit pushed up by its confidence radius.
        """
        if self.alpha is None:
            return None
        scales = {"triple_chsh": SCALE_TRIPLE_CHSH, "perfect_corr": SCALE_PERFECT,
                  "conj_corr": SCALE_CONJUGATION}
        return max([0.0] + [
            scales[family] * (entry.deficit + (entry.radius or 0.0))
            for family, _, entry in self.entries()
        ])

    @property
    def worst_cell(self) -> Optional[str]:
        worst = max(self.entries(), key=lambda item: item[2].scaled, default=None)
        if worst is None or worst[2].scaled <= 0:
            return None
        return f"{worst[0]} {_key_name(worst[0], worst[1])}"

    def to_json(self) -> Dict[str, object]:
        result: Dict[str, object] = {
            family: {_key_name(family, key): entry.to_json() for key, entry in entries.items()}
            for family, entries in self._families().items()
        }
        result.update({
            "n": self.n,
            "epsilon": self.epsilon,
            "worst_cell": self.worst_cell,
            "correlator_count": self.correlator_count,
        })
        if self.alpha is not None:
            result["alpha"] = self.alpha
            result["epsilon_upper"] = self.epsilon_upper
        return result


def _entry(request: Request, value: float, radius: Optional[float] = None,
           samples: Optional[int] = None) -> AuditEntry:
    deficit = request.target - value
    return AuditEntry(value, deficit, request.scale * deficit, radius, samples)


def _run_parallel(tasks: Sequence[Callable[[], T]], name: str) -> List[T]:
    """
    Run independent tasks, keeping their order in the result.
    """
    settings = ProgressSettings.for_items(name, len(tasks))
    results: List[T] = []
    with progress_for(settings) as progress:
        with ThreadPoolExecutor(max_workers=thread_count()) as executor:
            for result in executor.map(lambda task: task(), tasks):
                results.append(result)
                progress.advance(1)
    return results


def full_audit(strategy: Strategy, specials: QuestionSet) -> AuditReport:
    """
    Evaluate every request exactly.
    """
    if specials.n != strategy.n:
        raise QuestionError(f"Special questions have length {specials.n}, strategy has n = {strategy.n}")
    requests = requests_for(specials)
    values = _run_parallel(
        [lambda request=request: _evaluate(strategy, request) for request in requests],  # type: ignore
        "audit",
    )
    report = AuditReport(strategy.n)
    for request, value in zip(requests, values):
        report.add(request, _entry(request, value))
        report.correlator_count += len(request.correlators)
    LOGGER.debug("Audited %d requests", len(requests))
    return report


def hoeffding_radius(samples: int, alpha: float, value_range: float = 2.0) -> float:
    """
    Two-sided Hoeffding radius for the mean of `samples` values in an interval of
    width `value_range`, at confidence 1 - alpha:
    value_range * sqrt(ln(2 / alpha) / (2 samples)).

    Correlators take values in [-1, 1], so the default width is 2 and the
    radius is twice sqrt(ln(2 / alpha) / (2 samples)), the radius for values
    in [0, 1]. Pass value_range=1.0 for that form.
    """
    if value_range <= 0:
        raise QuestionError(f"value_range must be positive, got {value_range}")
    if samples <= 0:
        return math.inf
    return value_range * math.sqrt(math.log(2.0 / alpha) / (2.0 * samples))


@dataclass(frozen=True)
class TrialRecord:
    """
    One protocol round: the questions sent and the answers received.
    """
    round: int
    x: Question
    y: BobLabel
    a: Answer
    b: Answer


CellSamples = Dict[Tuple[Question, str], Tuple[np.ndarray, np.ndarray]]


def sample_cells(
        strategy: Strategy,
        specials: QuestionSet,
        trials_per_cell: int,
        seed: int,
) -> CellSamples:
    """
    Alice's and Bob's answer arrays for every requested cell, keyed by
    (question, Bob label). Each cell draws from its own substream, so the
    arrays only depend on the seed.
    """
    cells = requested_cells(specials)

    def sample(index: int) -> Tuple[np.ndarray, np.ndarray]:
        x, y = cells[index]
        return strategy.sample_rounds(x, y, trials_per_cell, substream(seed, "sampling", index))

    drawn = _run_parallel([lambda index=index: sample(index) for index in range(len(cells))],  # type: ignore
                          "sampling")
    return {(x, str(y)): answers for (x, y), answers in zip(cells, drawn)}


def sample_trials(
        strategy: Strategy,
        specials: QuestionSet,
        trials_per_cell: int,
        seed: int,
) -> List[TrialRecord]:
    """
    The rounds of sample_cells as records, round-robin over every requested cell.
    """
    cells = requested_cells(specials)
    count = len(cells)
    drawn = sample_cells(strategy, specials, trials_per_cell, seed)
    records: List[Optional[TrialRecord]] = [None] * (count * trials_per_cell)
    for index, (x, y) in enumerate(cells):
        alice, bob = drawn[(x, str(y))]
        for trial, (a, b) in enumerate(zip(alice.tolist(), bob.tolist())):
            round_index = trial * count + index
            records[round_index] = TrialRecord(round_index, x, y, tuple(a), tuple(b))
    return [record for record in records if record is not None]


TRIAL_FIELDS = ("round", "x", "y", "a", "b")


def write_trials(path: PathLike, records: Iterable[TrialRecord]) -> None:
    target = to_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(TRIAL_FIELDS)
        for record in records:
            writer.writerow([
                record.round, str(record.x), str(record.y),
                format_outcomes(record.a), format_answer(record.y, record.b),
            ])


def read_trials(path: PathLike, m: int = 5) -> List[TrialRecord]:
    target = to_path(path)
    records = []
    try:
        with open(target, "r", encoding="utf-8", newline="") as file:
            reader = csv.DictReader(file)
            if tuple(reader.fieldnames or ()) != TRIAL_FIELDS:
                raise StrategyError(f"Trial log {str(target)!r} must have the columns {','.join(TRIAL_FIELDS)}")
            for row in reader:
                label = check_bob_label(row["y"])
                records.append(TrialRecord(
                    int(row["round"]),
                    Question.parse(row["x"], m),
                    label,
                    parse_answer(1, row["a"]),
                    parse_answer(label, row["b"]),
                ))
    except OSError as error:
        raise StrategyError(f"Could not read trial log {str(target)!r}: {error}") from error
    return records


def _cell_arrays(records: Iterable[TrialRecord]) -> CellSamples:
    grouped: Dict[Tuple[Question, str], Tuple[List[Answer], List[Answer]]] = {}
    for record in records:
        alice, bob = grouped.setdefault((record.x, str(record.y)), ([], []))
        alice.append(record.a)
        bob.append(record.b)
    return {
        cell: (np.array(alice, dtype=np.int64).reshape(len(alice), -1),
               np.array(bob, dtype=np.int64).reshape(len(bob), -1))
        for cell, (alice, bob) in grouped.items()
    }


def _empirical(correlator: Correlator, alice: np.ndarray, bob: np.ndarray) -> np.ndarray:
    """
    Per-round products whose mean estimates the correlator.
    """
    product = np.prod(alice[:, [j - 1 for j in correlator.positions]], axis=1)
    term = correlator.term
    if term.y is not None:
        return product * bob[:, term.position - 1]
    signs = np.array(term.bell_signs or (), dtype=float)
    return product * signs[bob[:, bell_group_index(term.position)] - 1]


def estimate_from_trials(
        records: Iterable[TrialRecord], specials: QuestionSet, alpha: float = 0.01
) -> AuditReport:
    """
    The audit with every correlator replaced by its empirical mean over the
    matching records and every value carrying a Hoeffding radius.
    """
    return estimate_from_cells(_cell_arrays(records), specials, alpha)


def estimate_from_cells(cells: CellSamples, specials: QuestionSet, alpha: float = 0.01) -> AuditReport:
    if not 0 < alpha < 1:
        raise QuestionError(f"alpha must lie in (0, 1), got {alpha}")
    requests = requests_for(specials)
    missing = sorted({
        f"{c.x}/{c.label}"
        for request in requests for c in request.correlators
        if (c.x, str(c.label)) not in cells
    })
    if missing:
        raise MissingCellError(missing)

    report = AuditReport(specials.n, alpha=alpha)
    for request in requests:
        value = 0.0
        radius = 0.0
        samples = None
        for correlator in request.correlators:
            alice, bob = cells[(correlator.x, str(correlator.label))]
            value += correlator.coefficient * float(np.mean(_empirical(correlator, alice, bob)))
            radius += abs(correlator.coefficient) * hoeffding_radius(len(alice), alpha)
            samples = len(alice) if samples is None else min(samples, len(alice))
        report.add(request, _entry(request, value, radius, samples))
        report.correlator_count += len(request.correlators)
    return report
