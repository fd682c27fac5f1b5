import itertools

import numpy as np
import pytest

from loh.errors import MissingIndexError, SpaceTooLargeError
from loh.formula import (
    And,
    Choice,
    Const,
    Not,
    Or,
    PlaceholderRef,
    Var,
    build_program,
    is_discrete,
    parse_formula,
    parse_program,
)
from loh.hypothesis import enumerate_space, eval_indices, iter_indices, reachable_choices, space_size
from loh.templates import width_k_clause

from helpers import inline, oracle_space, random_program, select


def F(text):
    return parse_formula(text)


class TestWorkedExamples:
    def test_example_1(self):
        p = parse_program("out y = [a, b] & [c, d] & !e;")
        got = enumerate_space(p, "y")
        assert got == [F("a & c & !e"), F("a & d & !e"), F("b & c & !e"), F("b & d & !e")]
        assert space_size(p, "y") == 4

    def test_example_2(self):
        p = parse_program("out y = [a, [b, c]] & ![c, d];")
        got = set(enumerate_space(p, "y"))
        assert got == {F(s) for s in ("a & !c", "a & !d", "b & !c", "b & !d", "c & !c", "c & !d")}

    def test_example_3_without_placeholder(self):
        p = parse_program("out y = [a, b] & [a, b];")
        assert enumerate_space(p, "y") == [F("a & a"), F("a & b"), F("b & a"), F("b & b")]

    def test_example_3_with_placeholder(self):
        p = parse_program("let p = [a, b]; out y = p & p;")
        assert enumerate_space(p, "y") == [F("a & a"), F("b & b")]


class TestEvalIndices:
    def test_example_1_member(self):
        p = parse_program("out y = [a, b] & [c, d] & !e;")
        assert eval_indices(p, "y", (0, 1)) == F("a & d & !e")
        assert eval_indices(p, "y", {0: 1, 1: 0}) == F("b & c & !e")

    def test_choice_free(self):
        p = parse_program("out y = a;")
        assert eval_indices(p, "y", ()) == Var("a")

    def test_shared_selection(self):
        p = parse_program("let p = [a, b]; out y = p & p;")
        assert eval_indices(p, "y", (1,)) == F("b & b")

    def test_missing_index(self):
        p = parse_program("out y = [a, b] & [c, d];")
        with pytest.raises(MissingIndexError):
            eval_indices(p, "y", {0: 0})
        with pytest.raises(MissingIndexError):
            eval_indices(p, "y", (0,))

    def test_out_of_range(self):
        p = parse_program("out y = [a, b];")
        with pytest.raises(MissingIndexError):
            eval_indices(p, "y", (2,))

    def test_reachable_only(self):
        p = parse_program("let p = [a, b]; let q = [c, d]; out y = q; out z = p & q;")
        assert [c.id for c in reachable_choices(p, "y")] == [1]
        assert [c.id for c in reachable_choices(p, "z")] == [0, 1]


class TestEnumerate:
    @pytest.mark.parametrize("seed", range(200))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=4, depth=5, n_decls=0)
        got = enumerate_space(p, "y0")
        assert len(got) == space_size(p, "y0")
        assert set(got) == oracle_space(p.output("y0"))
        assert all(is_discrete(f) for f in got)

    @pytest.mark.parametrize("seed", range(50))
    def test_placeholder_sharing(self, seed):
        rng = np.random.default_rng(1000 + seed)
        p = random_program(rng, max_choices=4, depth=4, n_decls=2)
        expanded = inline(p.output("y0"), p)
        for idx in itertools.islice(iter_indices(p, "y0"), 50):
            assert eval_indices(p, "y0", idx) == select(expanded, idx)
        assert space_size(p, "y0") == int(np.prod([c.arity for c in reachable_choices(p, "y0")]))

    def test_lexicographic_order(self):
        p = parse_program("out y = [a, b, c] & [d, e];")
        got = [eval_indices(p, "y", idx) for idx in iter_indices(p, "y")]
        assert got == enumerate_space(p, "y")
        assert got[1] == F("a & e") and got[2] == F("b & d")

    def test_dedup(self):
        p = parse_program("out y = [a, a] & [b, b];")
        assert len(enumerate_space(p, "y")) == 4
        assert enumerate_space(p, "y", dedup=True) == [F("a & b")]

    def test_limit(self):
        p = parse_program("out y = [a, b] & [c, d] & [e, a];")
        with pytest.raises(SpaceTooLargeError):
            enumerate_space(p, "y", limit=7)
        assert len(enumerate_space(p, "y", limit=8)) == 8


class TestSpaceSize:
    def test_choice_free(self):
        assert space_size(parse_program("out y = a & !b;"), "y") == 1

    def test_width_3_clause_over_10_vars(self):
        names = [f"v{i}" for i in range(1, 11)]
        p = build_program([], [("y", width_k_clause(names, 3))])
        assert space_size(p, "y") == 20 ** 3 == 8000
        assert len(enumerate_space(p, "y")) == 8000

    def test_big_integer(self):
        names = [f"v{i}" for i in range(1, 11)]
        p = build_program([], [("y", width_k_clause(names, 20))])
        assert space_size(p, "y") == 20 ** 20
