"""Random program generators and small oracles shared by the test modules."""
import itertools

import numpy as np
from hypothesis import strategies as st

from loh.formula import (
    FALSE,
    TRUE,
    And,
    Choice,
    Const,
    Not,
    Or,
    PlaceholderRef,
    Var,
    build_program,
)

VARS = ("a", "b", "c", "d", "e")


def oracle_space(f):
    """Set of discrete formulas obtained by applying the substitution rules bottom-up."""
    if isinstance(f, (Var, Const)):
        return {f}
    if isinstance(f, Not):
        return {Not(g) for g in oracle_space(f.child)}
    if isinstance(f, And):
        return {And(a, b) for a, b in itertools.product(oracle_space(f.left), oracle_space(f.right))}
    if isinstance(f, Or):
        return {Or(a, b) for a, b in itertools.product(oracle_space(f.left), oracle_space(f.right))}
    if isinstance(f, Choice):
        out = set()
        for c in f.children:
            out |= oracle_space(c)
        return out
    raise TypeError(f)


def inline(f, p):
    """Expand placeholders textually; copies keep their choice ids."""
    if isinstance(f, PlaceholderRef):
        return inline(p.declaration(f.name), p)
    if isinstance(f, Not):
        return Not(inline(f.child, p))
    if isinstance(f, (And, Or)):
        return type(f)(inline(f.left, p), inline(f.right, p))
    if isinstance(f, Choice):
        return Choice(tuple(inline(c, p) for c in f.children), f.id, f.hint)
    return f


def select(f, idx):
    """Replace each choice by branch ``idx[id]``; equal ids pick equal branches;
    ids missing from ``idx`` stay as choices."""
    if isinstance(f, Choice):
        if f.id not in idx:
            return Choice(tuple(select(c, idx) for c in f.children), f.id, f.hint)
        return select(f.children[idx[f.id]], idx)
    if isinstance(f, Not):
        return Not(select(f.child, idx))
    if isinstance(f, (And, Or)):
        return type(f)(select(f.left, idx), select(f.right, idx))
    return f


def _choice_ids(f, acc):
    if isinstance(f, Choice):
        acc.append(f.id)
        for c in f.children:
            _choice_ids(c, acc)
    elif isinstance(f, Not):
        _choice_ids(f.child, acc)
    elif isinstance(f, (And, Or)):
        _choice_ids(f.left, acc)
        _choice_ids(f.right, acc)
    return acc


def shared_oracle_space(f, p):
    """Hypothesis space with placeholders: copies of one choice are fixed jointly, the rest unioned."""
    expanded = inline(f, p)
    ids = _choice_ids(expanded, [])
    shared = sorted({i for i in ids if ids.count(i) > 1})
    arity = {}
    stack = [expanded]
    while stack:
        node = stack.pop()
        if isinstance(node, Choice):
            arity[node.id] = len(node.children)
            stack.extend(node.children)
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, (And, Or)):
            stack.extend((node.left, node.right))
    out = set()
    for combo in itertools.product(*(range(arity[i]) for i in shared)):
        out |= oracle_space(select(expanded, dict(zip(shared, combo))))
    return out


def random_formula(rng, depth=4, max_choices=4, names=VARS, placeholders=(), budget=None):
    """A random LoH formula with at most ``max_choices`` choice nodes."""
    budget = budget if budget is not None else [max_choices]

    def gen(d):
        r = rng.random()
        if d <= 0 or r < 0.25:
            leaf = rng.random()
            if placeholders and leaf < 0.25:
                return PlaceholderRef(placeholders[rng.integers(len(placeholders))])
            if leaf < 0.9:
                return Var(names[rng.integers(len(names))])
            return TRUE if rng.random() < 0.5 else FALSE
        if r < 0.4:
            return Not(gen(d - 1))
        if r < 0.6:
            return And(gen(d - 1), gen(d - 1))
        if r < 0.8 or budget[0] <= 0:
            return Or(gen(d - 1), gen(d - 1))
        budget[0] -= 1
        arity = int(rng.integers(1, 4))
        return Choice(tuple(gen(d - 1) for _ in range(arity)))

    return gen(depth)


def random_program(rng, max_choices=4, depth=4, n_decls=None, n_outputs=1, names=VARS):
    """A numbered random program; declarations may reference earlier ones."""
    budget = [max_choices]
    n_decls = int(rng.integers(0, 3)) if n_decls is None else n_decls
    decls = []
    for i in range(n_decls):
        earlier = tuple(n for n, _ in decls)
        decls.append((f"p{i}", random_formula(rng, depth, names=names, placeholders=earlier, budget=budget)))
    earlier = tuple(n for n, _ in decls)
    outs = [(f"y{j}", random_formula(rng, depth, names=names, placeholders=earlier, budget=budget))
            for j in range(n_outputs)]
    return build_program(decls, outs)


def hard_weights(g, idx):
    """One-hot gate vectors selecting ``idx`` on every trainable block."""
    return {b.choice_id: np.eye(b.arity)[idx[b.choice_id]] for b in g.blocks if b.arity >= 2}


def truth_table(names):
    return np.asarray(list(itertools.product((0.0, 1.0), repeat=len(names)))).reshape(-1, len(names))


def bool_env(names, X):
    B = np.asarray(X) > 0.5
    return {n: B[:, i] for i, n in enumerate(names)}


# ---------------------------------------------------------------------------
# Hypothesis strategies

_names = st.sampled_from(VARS)


def _extend(children):
    return st.one_of(
        children.map(Not),
        st.tuples(children, children).map(lambda t: And(*t)),
        st.tuples(children, children).map(lambda t: Or(*t)),
        st.lists(children, min_size=1, max_size=3).map(lambda xs: Choice(tuple(xs))),
    )


formulas = st.recursive(
    st.one_of(_names.map(Var), st.sampled_from((Const(True), Const(False)))),
    _extend,
    max_leaves=12,
)


def fuzzy_eval(f, p, env, weights, variants, semantics="godel"):
    """Reference evaluation of a program formula straight from the syntax tree.

    ``env`` maps variables to arrays, ``weights`` choice ids to gate vectors,
    ``variants`` choice ids to the compilation used.
    """
    godel = semantics == "godel"

    def t(x, y):
        return np.minimum(x, y) if godel else x * y

    def s(x, y):
        return np.maximum(x, y) if godel else x + y - x * y

    def ev(node):
        if isinstance(node, Var):
            return np.asarray(env[node.name], dtype=np.float64)
        if isinstance(node, Const):
            return np.float64(1.0 if node.value else 0.0)
        if isinstance(node, Not):
            return 1.0 - ev(node.child)
        if isinstance(node, And):
            return t(ev(node.left), ev(node.right))
        if isinstance(node, Or):
            return s(ev(node.left), ev(node.right))
        if isinstance(node, PlaceholderRef):
            return ev(p.declaration(node.name))
        if isinstance(node, Choice):
            if node.arity == 1:
                return ev(node.children[0])
            w = weights[node.id]
            if variants[node.id] == "disjunctive":
                out = t(w[0], ev(node.children[0]))
                for wi, c in zip(w[1:], node.children[1:]):
                    out = s(out, t(wi, ev(c)))
            else:
                out = s(1.0 - w[0], ev(node.children[0]))
                for wi, c in zip(w[1:], node.children[1:]):
                    out = t(out, s(1.0 - wi, ev(c)))
            return out
        raise TypeError(node)

    return ev(f)
