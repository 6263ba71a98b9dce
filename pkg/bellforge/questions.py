"""
The verifier's question sets.

A question is a string over an alphabet of m symbols, displayed as digits 1..m
and stored as values 0..m-1 so that adding questions is componentwise addition
modulo m. From a set of special questions the verifier builds

* the base set of offsets with at most two nonzero entries,
* the expansion of every special question by those offsets (Alice's questions),
* for each position j, the reduced set of length n-1 strings that the question
  may take away from j, and
* the position set obtained by inserting every symbol at j into a reduced string.
"""

import itertools
import logging
import math
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import QuestionError
from .logging import PrettyLogger
from .utils import PathLike, to_path

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

PROTOCOL_ALPHABET = 5
Z_SYMBOL = 3


class Question:
    """
    An immutable question string. Positions are 1-based in the public API.
    """

    __slots__ = ("_values", "_m")

    def __init__(self, values: Iterable[int], m: int = PROTOCOL_ALPHABET):
        if m < 2:
            raise QuestionError(f"Alphabet size must be at least 2, got {m}")
        self._values: Tuple[int, ...] = tuple(int(value) for value in values)
        self._m = int(m)
        for value in self._values:
            if not 0 <= value < m:
                raise QuestionError(f"Question value {value} outside 0..{m - 1}")

    @classmethod
    def from_symbols(cls, symbols: Iterable[int], m: int = PROTOCOL_ALPHABET) -> 'Question':
        """
        Build from display symbols 1..m.
        """
        symbols = list(symbols)
        for symbol in symbols:
            if not 1 <= int(symbol) <= m:
                raise QuestionError(f"Question symbol {symbol} outside 1..{m}")
        return cls((int(symbol) - 1 for symbol in symbols), m)

    @classmethod
    def parse(cls, text: str, m: int = PROTOCOL_ALPHABET) -> 'Question':
        """
        Parse a digit string such as "131".
        """
        text = text.strip()
        if not text.isdigit() and text != "":
            raise QuestionError(f"Question must be a digit string, got {text!r}")
        return cls.from_symbols((int(char) for char in text), m)

    @property
    def values(self) -> Tuple[int, ...]:
        return self._values

    @property
    def symbols(self) -> Tuple[int, ...]:
        return tuple(value + 1 for value in self._values)

    @property
    def m(self) -> int:
        return self._m

    @property
    def n(self) -> int:
        return len(self._values)

    def symbol(self, j: int) -> int:
        """
        The display symbol at 1-based position j.
        """
        self._check_position(j)
        return self._values[j - 1] + 1

    def _check_position(self, j: int, extra: int = 0) -> None:
        if not 1 <= j <= self.n + extra:
            raise QuestionError(f"Position {j} out of range 1..{self.n + extra}")

    def __add__(self, other: 'Question') -> 'Question':
        if other.n != self.n or other.m != self.m:
            raise QuestionError("Only questions of equal length and alphabet can be added")
        return Question(((a + b) % self._m for a, b in zip(self._values, other.values)), self._m)

    def drop(self, j: int) -> 'Question':
        self._check_position(j)
        return Question(self._values[:j - 1] + self._values[j:], self._m)

    def insert(self, j: int, symbol: int) -> 'Question':
        """
        Insert a display symbol so that it ends up at position j.
        """
        self._check_position(j, extra=1)
        if not 1 <= symbol <= self._m:
            raise QuestionError(f"Question symbol {symbol} outside 1..{self._m}")
        return Question(self._values[:j - 1] + (symbol - 1,) + self._values[j - 1:], self._m)

    def replace(self, j: int, symbol: int) -> 'Question':
        """
        The same question with the symbol at position j swapped out.
        """
        return self.drop(j).insert(j, symbol)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Question) and self._values == other._values and self._m == other._m

    def __lt__(self, other: 'Question') -> bool:
        return self._values < other._values

    def __hash__(self) -> int:
        return hash((self._values, self._m))

    def __str__(self) -> str:
        return "".join(str(symbol) for symbol in self.symbols)

    def __repr__(self) -> str:
        return f"Question({str(self)!r})"


class QuestionSet:
    """
    A deduplicated, lexicographically ordered set of questions of equal length.
    """

    def __init__(self, members: Iterable[Question], m: int = PROTOCOL_ALPHABET,
                 n: Optional[int] = None):
        unique = sorted(set(members))
        lengths = {member.n for member in unique}
        if len(lengths) > 1:
            raise QuestionError(f"Questions of different lengths in one set: {sorted(lengths)}")
        if any(member.m != m for member in unique):
            raise QuestionError(f"All questions of the set must use the alphabet of size {m}")
        self._members: Tuple[Question, ...] = tuple(unique)
        self._index = {member: position for position, member in enumerate(unique)}
        self._m = m
        self._n = lengths.pop() if lengths else (n if n is not None else 0)

    @property
    def members(self) -> Tuple[Question, ...]:
        return self._members

    @property
    def m(self) -> int:
        return self._m

    @property
    def n(self) -> int:
        return self._n

    def union(self, other: 'QuestionSet') -> 'QuestionSet':
        return QuestionSet(self._members + other.members, self._m, self._n)

    def index(self, question: Question) -> int:
        return self._index[question]

    def __contains__(self, question: object) -> bool:
        return question in self._index

    def __iter__(self) -> Iterator[Question]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, QuestionSet) and self._members == other.members

    def __repr__(self) -> str:
        return f"QuestionSet(m={self._m}, n={self._n}, size={len(self)})"

    def to_lines(self) -> List[str]:
        return [str(member) for member in self._members]


def alice_bound(m: int, n: int) -> int:
    """
    Size of the base set, 1 + (m-1)n + (m-1)^2 n(n-1)/2, which bounds the number
    of questions one special question expands into.
    """
    return 1 + (m - 1) * n + (m - 1) ** 2 * n * (n - 1) // 2


def reduced_bound(m: int, n: int) -> int:
    """
    The larger per-special bound on a reduced set. Enumeration gives the
    tighter 1 + (m-1)(n-1).
    """
    return 1 + (m - 1) * n


def base_set(m: int, n: int) -> QuestionSet:
    """
    All offsets k e_i + l e_j with i < j. For n = 1 no pair exists and the
    offsets are k e_1 instead.
    """
    if m < 2:
        raise QuestionError(f"Alphabet size must be at least 2, got {m}")
    if n < 1:
        raise QuestionError(f"Question length must be at least 1, got {n}")
    members: List[Question] = []
    if n == 1:
        members = [Question((k,), m) for k in range(m)]
    else:
        for i, j in itertools.combinations(range(n), 2):
            for k, l in itertools.product(range(m), repeat=2):
                values = [0] * n
                values[i] = k
                values[j] = l
                members.append(Question(values, m))
    return QuestionSet(members, m, n)


def expand_special(chi: Question, m: Optional[int] = None) -> QuestionSet:
    """
    The special question shifted by every offset of the base set.
    """
    m = chi.m if m is None else m
    if m != chi.m:
        raise QuestionError(f"Special question {chi} is not over the alphabet of size {m}")
    return QuestionSet((chi + offset for offset in base_set(m, chi.n)), m, chi.n)


def _check_specials(specials: QuestionSet) -> None:
    if len(specials) == 0:
        raise QuestionError("The set of special questions is empty")
    if specials.n < 1:
        raise QuestionError("Special questions must have length at least 1")


def build_question_set(specials: QuestionSet) -> QuestionSet:
    """
    Alice's full question set: the union of all expansions.
    """
    _check_specials(specials)
    result = QuestionSet([], specials.m, specials.n)
    for chi in specials:
        result = result.union(expand_special(chi))
    return result


def _check_special_position(specials: QuestionSet, j: int) -> None:
    _check_specials(specials)
    if not 1 <= j <= specials.n:
        raise QuestionError(f"Position {j} out of range 1..{specials.n}")


def reduced_set(specials: QuestionSet, j: int) -> QuestionSet:
    """
    The length n-1 strings chi_j + k e_i over every special chi. At n = 1 this is
    the set holding only the empty string.
    """
    _check_special_position(specials, j)
    m, n = specials.m, specials.n
    members: List[Question] = []
    for chi in specials:
        shortened = chi.drop(j)
        members.append(shortened)
        for i in range(n - 1):
            for k in range(1, m):
                values = list(shortened.values)
                values[i] = (values[i] + k) % m
                members.append(Question(values, m))
    return QuestionSet(members, m, n - 1)


def position_set(specials: QuestionSet, j: int) -> QuestionSet:
    """
    Every symbol inserted at position j into every reduced string for j.
    """
    reduced = reduced_set(specials, j)
    return QuestionSet(
        (member.insert(j, symbol) for member in reduced for symbol in range(1, specials.m + 1)),
        specials.m, specials.n,
    )


def drop_position(question: Question, j: int) -> Question:
    return question.drop(j)


def insert_position(question: Question, j: int, symbol: int) -> Question:
    return question.insert(j, symbol)


def random_specials(
        count: int,
        n: int,
        rng: np.random.Generator,
        m: int = PROTOCOL_ALPHABET,
        min_z_fraction: float = 0.0,
) -> QuestionSet:
    """
    Draw `count` distinct uniformly random special questions. At least
    ceil(min_z_fraction * n) positions of each are forced to z, at positions
    drawn uniformly.
    """
    if count < 1:
        raise QuestionError(f"Need at least one special question, got {count}")
    forced = math.ceil(min_z_fraction * n - 1e-12)
    if forced > 0 and m < Z_SYMBOL:
        raise QuestionError(f"Alphabet of size {m} has no z symbol")
    available = sum(math.comb(n, zs) * (m - 1) ** (n - zs) for zs in range(forced, n + 1))
    if count > available:
        raise QuestionError(f"Cannot draw {count} distinct special questions of length {n}")

    drawn: Dict[Question, None] = {}
    while len(drawn) < count:
        values = rng.integers(0, m, size=n)
        if forced:
            positions = rng.choice(n, size=forced, replace=False)
            values[positions] = Z_SYMBOL - 1
        question = Question(values.tolist(), m)
        if question not in drawn:
            drawn[question] = None
    return QuestionSet(drawn, m, n)


def specials_from_strings(lines: Sequence[str], m: int = PROTOCOL_ALPHABET) -> QuestionSet:
    """
    Parse explicit special questions, warning about duplicates.
    """
    questions = [Question.parse(line, m) for line in lines if line.strip()]
    if not questions:
        raise QuestionError("The set of special questions is empty")
    specials = QuestionSet(questions, m)
    if len(specials) < len(questions):
        PRETTY.warning(
            f"Dropped {len(questions) - len(specials)} duplicate special question(s)"
        )
    return specials


def write_questions(path: PathLike, questions: QuestionSet) -> None:
    """
    One question per line, digits only, trailing newline.
    """
    target = to_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="\n") as file:
        for line in questions.to_lines():
            file.write(line + "\n")


def read_questions(path: PathLike, m: int = PROTOCOL_ALPHABET) -> QuestionSet:
    target = to_path(path)
    try:
        with open(target, "r", encoding="utf-8") as file:
            lines = file.read().splitlines()
    except OSError as error:
        raise QuestionError(f"Could not read questions from {str(target)!r}: {error}") from error
    return specials_from_strings(lines, m)


def question_report(specials: QuestionSet) -> Dict[str, object]:
    """
    The JSON export of a question set together with its cardinality checks.
    """
    questions = build_question_set(specials)
    m, n = specials.m, specials.n
    reduced_sizes = {str(j): len(reduced_set(specials, j)) for j in range(1, n + 1)}
    return {
        "m": m,
        "n": n,
        "specials": specials.to_lines(),
        "questions": questions.to_lines(),
        "cardinality": {
            "questions": len(questions),
            "questions_bound": len(specials) * alice_bound(m, n),
            "reduced": reduced_sizes,
            "reduced_bound": len(specials) * reduced_bound(m, n),
        },
        "within_bounds": (
            len(questions) <= len(specials) * alice_bound(m, n)
            and all(size <= len(specials) * reduced_bound(m, n) for size in reduced_sizes.values())
        ),
    }
