import warnings

import numpy as np
import pytest

from loh.compiler import PRODUCT, compile_program
from loh.data import gen_clause_dataset, gen_random_clauses
from loh.engine import ParameterStore
from loh.errors import SemanticsError
from loh.extraction import TieWarning, discretize, extract, simplify_formula, verify_lossless
from loh.formula import FALSE, TRUE, build_program, eval_bool, parse_formula, parse_program, print_formula
from loh.hypothesis import enumerate_space
from loh.templates import select_rules

from helpers import bool_env, random_program, truth_table


def store(g, logits):
    params = ParameterStore.init(g, 0)
    for cid, z in logits.items():
        params.z[cid] = np.asarray(z, dtype=np.float64)
    return params


def equivalent(f, g):
    names = sorted(set(_vars(f)) | set(_vars(g))) or ["_"]
    X = truth_table(names)
    env = bool_env(names, X)
    a = np.broadcast_to(eval_bool(f, env), (len(X),))
    b = np.broadcast_to(eval_bool(g, env), (len(X),))
    return bool(np.array_equal(a, b))


def _vars(f):
    from loh.formula import variables
    return variables(f)


class TestDiscretize:
    def test_argmax(self):
        g = compile_program(parse_program("out y = [a, b, c] & [d, e];"))
        params = store(g, {0: [2.0, 0.0, -1.0], 1: [-5.0, 3.0]})
        assert discretize(params) == {0: 0, 1: 1}

    def test_tie_warns_and_picks_first(self):
        g = compile_program(parse_program("out y = [a, b];"))
        params = store(g, {0: [1.0, 1.0]})
        with pytest.warns(TieWarning):
            assert discretize(params) == {0: 0}

    def test_no_warning_without_tie(self):
        g = compile_program(parse_program("out y = [a, b];"))
        params = store(g, {0: [1.0, 0.5]})
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            discretize(params)


class TestExtract:
    def test_example_member(self):
        p = parse_program("out y = [a, b] & [c, d] & !e;")
        g = compile_program(p)
        rules = extract(g, store(g, {0: [0.0, 1.0], 1: [1.0, 0.0]}), p)
        assert print_formula(rules.formulas["y"]) == "b & c & !e"
        assert rules.to_text() == "out y = b & c & !e;\n"

    def test_choice_free(self):
        p = parse_program("out y = a | !b;")
        g = compile_program(p)
        rules = extract(g, ParameterStore.init(g, 0))
        assert rules.formulas["y"] == p.output("y")

    def test_dropped_rule(self):
        rules = [parse_formula(s) for s in ("a | b", "!c", "d | e")]
        p = select_rules(rules)
        g = compile_program(p)
        params = store(g, {0: [1.0, -1.0], 1: [-1.0, 1.0], 2: [1.0, -1.0]})
        out = extract(g, params, p, simplify=True)
        assert print_formula(out.formulas["y"]) == "(a | b) & (d | e)"
        assert out.simplified

    @pytest.mark.parametrize("seed", range(30))
    def test_member_of_space(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=4, depth=4)
        g = compile_program(p)
        params = ParameterStore.init(g, seed)
        rules = extract(g, params, p)
        assert rules.formulas["y0"] in set(enumerate_space(p, "y0"))


class TestSimplify:
    @pytest.mark.parametrize("text, expected", [
        ("(a & true) | false", "a"),
        ("!true | b", "b"),
        ("!false & b", "b"),
        ("a & false | c", "c"),
        ("a | true", "true"),
        ("!!a", "a"),
        ("a & b & a", "a & b"),
        ("a & b | a & b & c", "a & b"),
        ("c & !c", "false"),
        ("(a | !a) & b", "b"),
        ("(a | b) & (a | b | c) & (b | a)", "a | b"),
        ("c & !c | d", "d"),
    ])
    def test_cases(self, text, expected):
        f = parse_formula(text)
        got = simplify_formula(f)
        assert print_formula(got) == expected
        assert equivalent(f, got)

    def test_constants(self):
        assert simplify_formula(TRUE) == TRUE
        assert simplify_formula(parse_formula("!(a & false)")) == TRUE
        assert simplify_formula(parse_formula("a & !a | b & !b")) == FALSE

    @pytest.mark.parametrize("seed", range(150))
    def test_preserves_semantics(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=0, depth=6, n_decls=0)
        f = p.output("y0")
        assert equivalent(f, simplify_formula(f))

    @pytest.mark.parametrize("seed", range(50))
    def test_preserves_semantics_two_level(self, seed):
        rng = np.random.default_rng(seed)
        kind = "disjunctive" if seed % 2 else "conjunctive"
        combine = "conjunction" if kind == "disjunctive" else "disjunction"
        from loh.data import clauses_formula, var_names
        clauses = gen_random_clauses(5, 6, (1, 4), kind, rng)
        f = clauses_formula(clauses, var_names(5), combine)
        assert equivalent(f, simplify_formula(f))


class TestVerify:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_init_is_lossless(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=5, depth=5, n_outputs=2)
        g = compile_program(p)
        params = ParameterStore.init(g, seed)
        rules = extract(g, params, p)
        report = verify_lossless(g, params, rules)
        assert report.mismatches == 0 and report.exhaustive
        assert report.samples == 2 ** len(g.input_names)
        assert rules.verification is report

    def test_dataset_rows(self):
        rng = np.random.default_rng(0)
        clauses = gen_random_clauses(6, 3, (2, 3), "disjunctive", rng)
        data = gen_clause_dataset(6, clauses)
        from loh.templates import width_k_clause, clause_conjunction
        p = clause_conjunction([width_k_clause(data.feature_names, 2) for _ in range(3)])
        g = compile_program(p)
        params = ParameterStore.init(g, 1)
        report = verify_lossless(g, params, extract(g, params, p), data, exhaustive=False)
        assert report.samples == len(data) and report.mismatches == 0 and not report.exhaustive

    def test_product_refused(self):
        p = parse_program("out y = [a, b]@disj;")
        g = compile_program(p, PRODUCT)
        params = ParameterStore.init(g, 0)
        with pytest.raises(SemanticsError, match="0.42"):
            verify_lossless(g, params, extract(g, params, p))

    def test_detects_mismatch(self):
        p = parse_program("out y = [a, b];")
        g = compile_program(p)
        params = store(g, {0: [1.0, -1.0]})
        rules = extract(g, params, p)
        rules.formulas["y"] = parse_formula("b")
        report = verify_lossless(g, params, rules)
        assert report.mismatches == 2

    def test_near_threshold_flag(self):
        p = parse_program("out y = [a, b];")
        g = compile_program(p)
        params = store(g, {0: [0.0, 0.0]})
        with pytest.warns(TieWarning):
            rules = extract(g, params, p)
        report = verify_lossless(g, params, rules)
        assert report.near_threshold > 0
        assert report.to_json()["samples"] == 4

    def test_build_program_output(self):
        p = build_program([], [("y", parse_formula("a & [b, c]"))])
        g = compile_program(p)
        params = ParameterStore.init(g, 2)
        assert verify_lossless(g, params, extract(g, params)).mismatches == 0
