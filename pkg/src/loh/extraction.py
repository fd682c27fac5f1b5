"""Discretise trained gates, read off the selected rules, and check them."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compiler import GODEL, CompiledGraph
from .data import Dataset, all_assignments
from .engine import ParameterStore, evaluate, threshold
from .errors import SemanticsError
from .formula import (
    FALSE,
    TRUE,
    And,
    Const,
    Formula,
    Not,
    Or,
    Program,
    Var,
    conjoin,
    disjoin,
    eval_bool,
    print_formula,
    variables,
)
from .hypothesis import reachable_choices, substitute

NEAR_HALF = 1e-9
EXHAUSTIVE_MAX_INPUTS = 20


class TieWarning(UserWarning):
    """Two or more logits of one choice node are exactly equal at the top."""


@dataclass
class Verification:
    samples: int = 0
    mismatches: int = 0
    near_threshold: int = 0
    exhaustive: bool = False

    def to_json(self) -> dict:
        return dict(samples=self.samples, mismatches=self.mismatches,
                    near_threshold=self.near_threshold, exhaustive=self.exhaustive)


@dataclass
class ExtractedRuleSet:
    formulas: dict  # output label -> discrete formula
    indices: dict  # choice id -> selected branch
    verification: Optional[Verification] = None
    simplified: bool = False

    def to_text(self) -> str:
        return "".join(f"out {label} = {print_formula(f)};\n" for label, f in self.formulas.items())


def discretize(params: ParameterStore) -> dict:
    """Selected branch per choice node: argmax of the logits, lowest on ties."""
    out = {}
    for cid in sorted(params.z):
        z = np.asarray(params.z[cid])
        k = int(np.argmax(z))
        if z.size > 1 and np.count_nonzero(z == z[k]) > 1:
            warnings.warn(f"choice {cid}: tied top logits, selecting branch {k}", TieWarning, stacklevel=2)
        out[cid] = k
    return out


def extract(g: CompiledGraph, params: ParameterStore, p: Optional[Program] = None,
            simplify: bool = False) -> ExtractedRuleSet:
    p = p if p is not None else g.program
    if p is None:
        raise ValueError("no program attached to the graph")
    idx = discretize(params)
    formulas = {}
    for label in g.output_labels:
        wanted = {c.id: idx.get(c.id, 0) for c in reachable_choices(p, label)}
        f = substitute(p.output(label), p, wanted)
        formulas[label] = simplify_formula(f) if simplify else f
    return ExtractedRuleSet(formulas, idx, simplified=simplify)


# ---------------------------------------------------------------------------
# Simplification


def _flat(f: Formula, cls) -> list:
    out, stack = [], [f]
    while stack:
        node = stack.pop()
        if isinstance(node, cls):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def _fold(f: Formula) -> Formula:
    """Constant folding plus duplicate removal inside flattened ``&``/``|``."""
    if isinstance(f, (Var, Const)):
        return f
    if isinstance(f, Not):
        c = _fold(f.child)
        if isinstance(c, Const):
            return Const(not c.value)
        if isinstance(c, Not):
            return c.child
        return Not(c)
    if isinstance(f, (And, Or)):
        is_and = isinstance(f, And)
        absorbing, neutral = (FALSE, TRUE) if is_and else (TRUE, FALSE)
        items = []
        for part in _flat(f, type(f)):
            part = _fold(part)
            if part == absorbing:
                return absorbing
            if part == neutral:
                continue
            items.extend(_flat(part, type(f)))
        items = list(dict.fromkeys(items))
        if not items:
            return neutral
        return conjoin(items) if is_and else disjoin(items)
    raise TypeError(f"cannot simplify {f!r}")


def _literal(f: Formula):
    if isinstance(f, Var):
        return (f.name, True)
    if isinstance(f, Not) and isinstance(f.child, Var):
        return (f.child.name, False)
    return None


def _lit_formula(lit) -> Formula:
    name, pos = lit
    return Var(name) if pos else Not(Var(name))


def _two_level(f: Formula):
    """``(outer, [set of literals, ...])`` when ``f`` is a CNF or DNF, else None."""
    for outer, inner in ((And, Or), (Or, And)):
        groups = []
        for part in _flat(f, outer):
            lits = [_literal(x) for x in _flat(part, inner)]
            if any(lit is None for lit in lits):
                break
            groups.append(lits)
        else:
            return outer, inner, groups
    return None


def _reduce_groups(groups: list) -> list:
    sets = []
    for lits in groups:
        s = list(dict.fromkeys(lits))
        names = {}
        clash = False
        for name, pos in s:
            if names.setdefault(name, pos) != pos:
                clash = True
        sets.append((s, clash))
    return sets


def _two_level_simplify(f: Formula) -> Formula:
    shape = _two_level(f)
    if shape is None:
        return f
    outer, inner, groups = shape
    is_cnf = outer is And
    kept = []
    for lits, clash in _reduce_groups(groups):
        if clash:
            # x | !x is a tautological clause, x & !x an unsatisfiable term: both drop out
            continue
        kept.append(lits)
    if not kept:
        return TRUE if is_cnf else FALSE
    if all(len(k) == 1 for k in kept):
        # unit clauses x, !x (or single-literal terms) clash across groups
        polarity = {}
        for (lit,) in kept:
            if polarity.setdefault(lit[0], lit[1]) != lit[1]:
                return FALSE if is_cnf else TRUE
    # drop groups that are supersets of another group (subsumption); keep first of equals
    frozen = [frozenset(k) for k in kept]
    result = []
    for i, s in enumerate(frozen):
        dominated = any(
            (frozen[j] < s) or (frozen[j] == s and j < i) for j in range(len(frozen)) if j != i
        )
        if not dominated:
            result.append(kept[i])
    join_inner = disjoin if is_cnf else conjoin
    join_outer = conjoin if is_cnf else disjoin
    return join_outer([join_inner([_lit_formula(x) for x in lits]) for lits in result])


def simplify_formula(f: Formula) -> Formula:
    """Fold constants, then remove redundant groups of a CNF/DNF.

    Contradictory terms of a DNF and tautological clauses of a CNF are
    dropped, and ``x & !x`` (``x | !x``) collapses to a constant; a group
    containing another group of the same level is removed.
    Formulas of any other shape only get constant folding.
    """
    return _two_level_simplify(_fold(f))


simplify = simplify_formula


# ---------------------------------------------------------------------------
# Verification


def _discrete_outputs(rules: ExtractedRuleSet, names, X) -> np.ndarray:
    B = np.asarray(X) > 0.5
    assignment = {n: B[:, i] for i, n in enumerate(names)}
    cols = []
    for f in rules.formulas.values():
        for v in variables(f):
            if v not in assignment:
                raise KeyError(f"variable {v!r} missing from the inputs")
        cols.append(np.broadcast_to(eval_bool(f, assignment), (B.shape[0],)))
    return np.stack(cols, axis=1) if cols else np.zeros((B.shape[0], 0), dtype=bool)


def verify_lossless(g: CompiledGraph, params: ParameterStore, rules: ExtractedRuleSet,
                    data: Optional[Dataset] = None, exhaustive: Optional[bool] = None,
                    threads: Optional[int] = None) -> Verification:
    """Compare rounded continuous outputs with the extracted formulas.

    Checks the rows of ``data`` and, when the graph has at most 20 inputs
    (or ``exhaustive`` is set), every Boolean input vector.
    """
    if g.semantics != GODEL:
        raise SemanticsError(
            "rounding is not a homomorphism under product semantics: with w=(0.6, 0.4), a=0.7, b=0 "
            "the disjunctive [a, b] evaluates to 0.42 while its discretisation is true"
        )
    names = list(g.input_names)
    blocks = []
    if data is not None:
        blocks.append(np.asarray(data.columns(names), dtype=np.float64))
    if exhaustive is None:
        exhaustive = len(names) <= EXHAUSTIVE_MAX_INPUTS
    if exhaustive:
        blocks.append(all_assignments(len(names)))
    if not blocks:
        return Verification(exhaustive=False)
    X = np.concatenate(blocks, axis=0)
    X = np.where(X > 0.5, 1.0, 0.0)
    cont = evaluate(g, params, X, threads=threads)
    disc = _discrete_outputs(rules, names, X)
    report = Verification(
        samples=int(X.shape[0]),
        mismatches=int(np.count_nonzero(threshold(cont) != disc)),
        near_threshold=int(np.count_nonzero(np.abs(cont - 0.5) <= NEAR_HALF)),
        exhaustive=bool(exhaustive),
    )
    rules.verification = report
    return report
