import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellforge.errors import QuestionError
from bellforge.questions import (Question, QuestionSet, alice_bound, base_set, build_question_set,
                                 drop_position, expand_special, insert_position, position_set,
                                 question_report, random_specials, read_questions, reduced_bound,
                                 reduced_set, specials_from_strings, write_questions)

from conftest import specials_of


def test_question_symbols_and_values():
    question = Question.parse("131")
    assert question.values == (0, 2, 0)
    assert question.symbols == (1, 3, 1)
    assert question.symbol(2) == 3
    assert str(question) == "131"
    assert Question.from_symbols([1, 3, 1]) == question


@pytest.mark.parametrize("text", ["16", "0", "1a"])
def test_question_rejects_bad_symbols(text):
    with pytest.raises(QuestionError):
        Question.parse(text)


def test_question_edits():
    question = Question.parse("2451")
    assert question.drop(2) == Question.parse("251")
    assert question.insert(5, 3) == Question.parse("24513")
    assert question.replace(1, 5) == Question.parse("5451")
    with pytest.raises(QuestionError):
        question.drop(5)
    with pytest.raises(QuestionError):
        question.insert(6, 1)


def test_addition_wraps_modulo_alphabet():
    assert Question.parse("55") + Question.parse("21") == Question.parse("15")
    with pytest.raises(QuestionError):
        Question.parse("1") + Question.parse("11")


def test_question_set_dedupes_and_sorts():
    questions = QuestionSet([Question.parse(t) for t in ("21", "11", "21")])
    assert questions.to_lines() == ["11", "21"]
    assert Question.parse("21") in questions
    with pytest.raises(QuestionError):
        QuestionSet([Question.parse("1"), Question.parse("11")])


def test_empty_question_has_length_zero():
    assert Question([], 5).n == 0
    assert str(Question([], 5)) == ""


@pytest.mark.parametrize("m, n, size", [(3, 3, 19), (5, 2, 25), (5, 1, 5), (5, 3, 61)])
def test_base_set_size(m, n, size):
    offsets = base_set(m, n)
    assert len(offsets) == size
    assert size == alice_bound(m, n) or n == 1
    assert Question([0] * n, m) in offsets


def test_base_set_rejects_degenerate_parameters():
    with pytest.raises(QuestionError):
        base_set(1, 2)
    with pytest.raises(QuestionError):
        base_set(5, 0)


def test_expand_special_small_alphabet():
    expanded = expand_special(Question.parse("111", 3))
    assert len(expanded) == 19
    assert Question.parse("231", 3) in expanded
    assert Question.parse("133", 3) in expanded
    assert Question.parse("222", 3) not in expanded


def test_expand_special_wraps():
    chi = Question.parse("55")
    expanded = expand_special(chi)
    assert len(expanded) == 25
    assert chi in expanded
    assert Question.parse("11") in expanded


def test_build_question_set_of_one_special():
    specials = specials_of("243")
    assert build_question_set(specials) == expand_special(Question.parse("243"))


def test_question_count_bound(rng):
    specials = random_specials(4, 3, rng)
    assert len(build_question_set(specials)) <= 4 * alice_bound(5, 3) == 244


def test_build_question_set_rejects_empty():
    with pytest.raises(QuestionError):
        build_question_set(QuestionSet([], 5, 3))


def test_reduced_set_size():
    reduced = reduced_set(specials_of("123"), 2)
    assert len(reduced) == 9
    assert reduced.n == 2
    assert Question.parse("13") in reduced
    assert len(reduced) <= reduced_bound(5, 3)


def test_reduced_set_single_position():
    reduced = reduced_set(specials_of("4"), 1)
    assert reduced.to_lines() == [""]
    assert len(position_set(specials_of("4"), 1)) == 5


def test_reduced_set_position_out_of_range():
    with pytest.raises(QuestionError):
        reduced_set(specials_of("12"), 3)


def _all_specials(n):
    return [Question(values) for values in itertools.product(range(5), repeat=n)]


def _check_pair_properties(chi):
    specials = QuestionSet([chi])
    expanded = expand_special(chi)
    reduced = {j: reduced_set(specials, j) for j in range(1, chi.n + 1)}
    for i, j in itertools.combinations(range(1, chi.n + 1), 2):
        for q, r in itertools.product(range(1, 6), repeat=2):
            x = chi.replace(i, q).replace(j, r)
            assert x in expanded
            assert drop_position(x, i) in reduced[i]
            assert drop_position(x, j) in reduced[j]


@pytest.mark.parametrize("n", [2, 3])
def test_pair_properties_exhaustive(n):
    for chi in _all_specials(n):
        _check_pair_properties(chi)


def test_pair_properties_length_four(rng):
    for values in rng.integers(0, 5, size=(20, 4)):
        _check_pair_properties(Question(values.tolist()))


def _position_union(specials):
    union = QuestionSet([], specials.m, specials.n)
    for j in range(1, specials.n + 1):
        union = union.union(position_set(specials, j))
    return union


@pytest.mark.parametrize("n", [1, 2, 3])
def test_position_sets_cover_question_set_exhaustively(n):
    for chi in _all_specials(n):
        specials = QuestionSet([chi])
        assert _position_union(specials) == build_question_set(specials)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_position_sets_cover_question_set(n, count, seed):
    count = min(count, 5 ** n)
    specials = random_specials(count, n, np.random.default_rng(seed))
    assert _position_union(specials) == build_question_set(specials)


def test_drop_and_insert_are_inverse():
    x = Question.parse("3152")
    for j in range(1, 5):
        assert insert_position(drop_position(x, j), j, x.symbol(j)) == x


def test_random_specials_forces_z(rng):
    specials = random_specials(10, 4, rng, min_z_fraction=0.5)
    assert len(specials) == 10
    for chi in specials:
        assert sum(symbol == 3 for symbol in chi) >= 2


def test_random_specials_is_reproducible():
    first = random_specials(5, 3, np.random.default_rng(7))
    second = random_specials(5, 3, np.random.default_rng(7))
    assert first == second


def test_random_specials_too_many():
    with pytest.raises(QuestionError):
        random_specials(6, 1, np.random.default_rng(0))
    with pytest.raises(QuestionError):
        random_specials(0, 2, np.random.default_rng(0))


def test_specials_from_strings_drops_duplicates():
    specials = specials_from_strings(["12", "31", "12", ""])
    assert specials.to_lines() == ["12", "31"]
    with pytest.raises(QuestionError):
        specials_from_strings(["", "  "])


def test_write_and_read_questions(tmp_path):
    specials = specials_of("123", "345")
    target = tmp_path / "nested" / "specials.txt"
    write_questions(target, specials)
    assert target.read_text(encoding="utf-8") == "123\n345\n"
    assert read_questions(target) == specials


def test_read_missing_questions(tmp_path):
    with pytest.raises(QuestionError):
        read_questions(tmp_path / "absent.txt")


def test_question_report():
    report = question_report(specials_of("11", "33"))
    assert report["n"] == 2
    assert report["specials"] == ["11", "33"]
    assert report["cardinality"]["questions"] == len(report["questions"])
    assert report["cardinality"]["questions_bound"] == 50
    assert report["within_bounds"]
