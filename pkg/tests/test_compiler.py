import itertools

import numpy as np
import pytest

from loh.compiler import (
    COGATE,
    CONJUNCTIVE,
    DISJUNCTIVE,
    GATE,
    GODEL,
    MAX,
    MIN,
    NEG,
    PRODUCT,
    compile_program,
    resolve_variants,
    substitute_discrete,
)
from loh.engine import forward
from loh.errors import MissingIndexError
from loh.formula import Choice, Not, build_program, eval_bool, parse_formula, parse_program, print_formula
from loh.hypothesis import eval_indices, iter_indices
from loh.templates import select_rules

from helpers import bool_env, fuzzy_eval, hard_weights, random_program, truth_table


def flat_text(f):
    """Printed form with associativity-only parentheses removed."""
    return print_formula(f).replace("(", "").replace(")", "")


def run(g, X, weights):
    return forward(g, None, X, weights=weights)[0]


class TestShapes:
    def test_disjunctive_choice(self):
        g = compile_program(parse_program("out y = [a, b]@disj;"))
        (b,) = g.blocks
        top = g.nodes[b.node]
        assert top.kind == MAX and len(top.children) == 2
        for slot, term in enumerate(top.children):
            gate, branch = g.nodes[term].children
            assert g.nodes[term].kind == MIN
            assert g.nodes[gate].kind == GATE and g.nodes[gate].slot == slot
            assert g.nodes[branch].name == "ab"[slot]

    def test_conjunctive_choice(self):
        g = compile_program(parse_program("out y = [a, b]@conj;"))
        (b,) = g.blocks
        top = g.nodes[b.node]
        assert top.kind == MIN
        for term in top.children:
            assert g.nodes[term].kind == MAX
            assert g.nodes[g.nodes[term].children[0]].kind == COGATE

    def test_disjunctive_values(self):
        g = compile_program(parse_program("out y = [a, b]@disj;"))
        X = np.array([[0.7, 0.0], [0.2, 0.9]])
        out = run(g, X, {0: np.array([0.6, 0.4])})
        expected = np.maximum(np.minimum(0.6, X[:, 0]), np.minimum(0.4, X[:, 1]))
        np.testing.assert_array_equal(out[:, 0], expected)

    def test_conjunctive_values(self):
        g = compile_program(parse_program("out y = [a, b]@conj;"))
        X = np.array([[0.7, 0.0], [0.2, 0.9]])
        out = run(g, X, {0: np.array([0.6, 0.4])})
        expected = np.minimum(np.maximum(0.4, X[:, 0]), np.maximum(0.6, X[:, 1]))
        np.testing.assert_array_equal(out[:, 0], expected)

    def test_choice_free(self):
        g = compile_program(parse_program("out y = a & !b;"))
        assert g.blocks == ()
        X = np.array([[0.3, 0.2], [0.9, 0.6]])
        np.testing.assert_array_equal(run(g, X, None)[:, 0], np.minimum(X[:, 0], 1 - X[:, 1]))

    def test_flattening(self):
        g = compile_program(parse_program("out y = a & b & (c & d) | e | a;"))
        root = g.nodes[g.output_ids[0]]
        assert root.kind == MAX and len(root.children) == 3
        assert g.nodes[root.children[0]].kind == MIN and len(g.nodes[root.children[0]].children) == 4

    def test_placeholder_compiled_once(self):
        p = parse_program("let p = [a, b] & c; out y = p | !p; out z = p;")
        g = compile_program(p)
        assert len(g.blocks) == 1
        root = g.nodes[dict(g.outputs)["y"]]
        neg = g.nodes[root.children[1]]
        assert neg.kind == NEG and neg.children[0] == root.children[0] == dict(g.outputs)["z"]

    def test_topological_order(self):
        for seed in range(30):
            g = compile_program(random_program(np.random.default_rng(seed), n_outputs=2))
            for i, node in enumerate(g.nodes):
                assert all(c < i for c in node.children)
                if node.kind in (MIN, MAX):
                    assert node.children

    def test_one_block_per_choice(self):
        p = parse_program("let p = [a, [b, c]]; out y = p & [d] & ![e, a, b];")
        g = compile_program(p)
        assert [b.choice_id for b in g.blocks] == [0, 1, 2, 3]
        assert [b.trainable for b in g.blocks] == [True, True, False, True]

    def test_single_child_choice_is_transparent(self):
        g = compile_program(parse_program("out y = [a] & b;"))
        X = truth_table(["a", "b"])
        np.testing.assert_array_equal(run(g, X, None)[:, 0], np.minimum(X[:, 0], X[:, 1]))

    def test_json(self):
        g = compile_program(parse_program("out y = [a, !b];"))
        data = g.to_json()
        assert data["choices"][0]["variant"] == CONJUNCTIVE
        assert data["inputs"] == ["a", "b"]
        assert len(data["nodes"]) == len(g.nodes)

    def test_bad_semantics(self):
        with pytest.raises(ValueError):
            compile_program(parse_program("out y = a;"), semantics="lukasiewicz")


class TestVariants:
    def test_polarity_example(self):
        p = parse_program("out y = ![a, b] & [b, c] & ([c, d] | ![d, e]);")
        assert resolve_variants(p) == {0: DISJUNCTIVE, 1: CONJUNCTIVE, 2: DISJUNCTIVE, 3: CONJUNCTIVE}

    def test_root_context(self):
        p = parse_program("out y = [a, b];")
        assert resolve_variants(p) == {0: CONJUNCTIVE}
        assert resolve_variants(p, DISJUNCTIVE) == {0: DISJUNCTIVE}
        assert resolve_variants(parse_program("out y = ![a, b];")) == {0: DISJUNCTIVE}

    def test_rule_selection_all_conjunctive(self):
        rules = [parse_formula(s) for s in ("a | b", "!c | d", "e")]
        p = select_rules(rules, hint=None)
        assert set(resolve_variants(p).values()) == {CONJUNCTIVE}

    def test_hint_wins(self):
        p = parse_program("out y = [a, b]@disj & [c, d];")
        assert resolve_variants(p) == {0: DISJUNCTIVE, 1: CONJUNCTIVE}

    def test_nested_choice_inherits(self):
        p = parse_program("out y = a | [b, [c, d]];")
        assert resolve_variants(p) == {0: DISJUNCTIVE, 1: DISJUNCTIVE}
        p = parse_program("out y = a | ![b, [c, d]];")
        assert resolve_variants(p) == {0: CONJUNCTIVE, 1: CONJUNCTIVE}

    def test_placeholder_context_from_declaration(self):
        p = parse_program("let p = [a, b]; out y = c | p;")
        variants = resolve_variants(p)
        assert variants[0] in (CONJUNCTIVE, DISJUNCTIVE)

    def test_override(self):
        p = parse_program("out y = [a, b] & [c, d];")
        g = compile_program(p, variants={1: DISJUNCTIVE})
        assert g.variants == {0: CONJUNCTIVE, 1: DISJUNCTIVE}


class TestAgainstReference:
    @pytest.mark.parametrize("semantics", [GODEL, PRODUCT])
    @pytest.mark.parametrize("seed", range(40))
    def test_forward_matches_syntax_evaluation(self, seed, semantics):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=5, depth=5, n_outputs=2)
        g = compile_program(p, semantics, variants={c: rng.choice([CONJUNCTIVE, DISJUNCTIVE])
                                                    for c in p.choices()})
        X = rng.random((16, len(g.input_names)))
        weights = {b.choice_id: rng.random(b.arity) for b in g.blocks if b.arity >= 2}
        out = run(g, X, weights)
        env = {n: X[:, i] for i, n in enumerate(g.input_names)}
        for k, (label, root) in enumerate(p.outputs):
            ref = np.broadcast_to(fuzzy_eval(root, p, env, weights, g.variants, semantics), (16,))
            if semantics == GODEL:
                np.testing.assert_array_equal(out[:, k], ref)
            else:
                np.testing.assert_allclose(out[:, k], ref, rtol=1e-12, atol=1e-12)


class TestDuality:
    @pytest.mark.parametrize("seed", range(50))
    def test_de_morgan(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        names = [f"x{i}" for i in range(n)]
        branches = [parse_formula(s) for s in names]
        disj = compile_program(build_program([], [("y", Choice(tuple(branches), hint=DISJUNCTIVE))]))
        conj = compile_program(build_program([], [("y", Choice(tuple(Not(b) for b in branches),
                                                                hint=CONJUNCTIVE))]))
        X = rng.random((64, n))
        w = {0: rng.random(n)}
        np.testing.assert_array_equal(1.0 - run(disj, X, w), run(conj, X, w))


class TestBinaryWeights:
    @pytest.mark.parametrize("seed", range(30))
    def test_one_hot_weights_select_branch(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=4, depth=4, n_decls=1)
        names = list(p.variables())
        X = truth_table(names)
        for variant in (CONJUNCTIVE, DISJUNCTIVE):
            g = compile_program(p, variants={c: variant for c in p.choices()})
            cols = [names.index(v) for v in g.input_names]
            for idx in itertools.islice(iter_indices(p, "y0"), 24):
                full = {c: idx.get(c, 0) for c in p.choices()}
                out = run(g, X[:, cols], hard_weights(g, full))[:, 0]
                f = eval_indices(p, "y0", idx)
                expected = np.broadcast_to(eval_bool(f, bool_env(names, X)), (len(X),))
                np.testing.assert_array_equal(out, expected.astype(np.float64))


class TestSubstituteDiscrete:
    def test_example(self):
        g = compile_program(parse_program("out y = [a, b] & [c, d] & !e;"))
        assert print_formula(substitute_discrete(g, {0: 0, 1: 0})) == "a & c & !e"

    def test_choice_free(self):
        p = parse_program("out y = a & !b | c;")
        g = compile_program(p)
        assert substitute_discrete(g, {}) == p.output("y")

    def test_missing(self):
        g = compile_program(parse_program("out y = [a, b];"))
        with pytest.raises(MissingIndexError):
            substitute_discrete(g, {})

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_eval_indices(self, seed):
        rng = np.random.default_rng(seed)
        p = random_program(rng, max_choices=4, depth=4)
        g = compile_program(p)
        idx = {c.id: int(rng.integers(c.arity)) for c in p.choices().values()}
        src = eval_indices(p, "y0", {k: v for k, v in idx.items()
                                     if k in {c.id for c in p.choices().values()}})
        got = substitute_discrete(g, idx, "y0")
        assert flat_text(got) == flat_text(src)
        names = p.variables() or ["a"]
        X = truth_table(names)
        env = bool_env(names, X)
        np.testing.assert_array_equal(np.broadcast_to(eval_bool(got, env), (len(X),)),
                                      np.broadcast_to(eval_bool(src, env), (len(X),)))
