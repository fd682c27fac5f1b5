"""Builders that emit LoH programs for common kinds of background knowledge.

Every builder returns a numbered :class:`~loh.formula.Program` (or a formula
for the clause-level helpers). Choice nodes carry ``@conj``/``@disj`` hints
by default so the compiled graph does not depend on the root context; pass
``hint=None`` to leave the choice to the polarity heuristic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .formula import (
    CONJUNCTIVE,
    DISJUNCTIVE,
    FALSE,
    TRUE,
    Choice,
    Formula,
    Not,
    PlaceholderRef,
    Program,
    Var,
    build_program,
    conjoin,
    disjoin,
)

AUTO = "auto"
SUBSET = "subset"
SUBSET_NEG = "subset-with-negation"
FIXED_K = "fixed-k"
NEURON_STYLES = (SUBSET, SUBSET_NEG, FIXED_K)


def _hint(hint: Optional[str], recommended: str) -> Optional[str]:
    return recommended if hint == AUTO else hint


def _lit(x) -> Formula:
    return Var(x) if isinstance(x, str) else x


def _combine(items, connective: str) -> Formula:
    if connective in ("conjunction", CONJUNCTIVE):
        return conjoin(items)
    if connective in ("disjunction", DISJUNCTIVE):
        return disjoin(items)
    raise ValueError(f"unknown connective {connective!r}")


def _is_conj(connective: str) -> bool:
    _combine([TRUE], connective)
    return connective in ("conjunction", CONJUNCTIVE)


# ---------------------------------------------------------------------------
# Rule-level knowledge


def select_rules(rules: Sequence[Formula], connective: str = "conjunction", hint: Optional[str] = AUTO,
                 label: str = "y") -> Program:
    """Keep a subset of candidate rules.

    A conjunction of ``[r, true]`` choices; with ``connective="disjunction"``
    the dual ``[r, false]`` choices are joined by ``|`` instead.
    """
    if not rules:
        raise ValueError("need at least one rule")
    conj = _is_conj(connective)
    neutral = TRUE if conj else FALSE
    h = _hint(hint, CONJUNCTIVE if conj else DISJUNCTIVE)
    parts = [Choice((_lit(r), neutral), hint=h) for r in rules]
    return build_program((), [(label, _combine(parts, connective))])


def one_per_set(rule_sets: Sequence[Sequence[Formula]], connective: str = "conjunction",
                hint: Optional[str] = AUTO, label: str = "y") -> Program:
    """Pick exactly one rule from each set; singleton sets become plain conjuncts."""
    if not rule_sets:
        raise ValueError("need at least one rule set")
    conj = _is_conj(connective)
    h = _hint(hint, CONJUNCTIVE if conj else DISJUNCTIVE)
    parts = []
    for rs in rule_sets:
        rs = [_lit(r) for r in rs]
        if not rs:
            raise ValueError("rule sets must be nonempty")
        parts.append(rs[0] if len(rs) == 1 else Choice(tuple(rs), hint=h))
    return build_program((), [(label, _combine(parts, connective))])


# ---------------------------------------------------------------------------
# Clause-level templates


def _literals(names: Sequence[str], with_negation: bool) -> tuple:
    pos = tuple(Var(n) for n in names)
    return pos + tuple(Not(v) for v in pos) if with_negation else pos


def width_k_clause(names: Sequence[str], k: int, with_negation: bool = True, connective: str = "disjunction",
                   hint: Optional[str] = AUTO) -> Formula:
    """``k`` choices over the literals, joined by ``|`` (or ``&`` for a term).

    Repeated selections are allowed and kept as they are.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not names:
        raise ValueError("need at least one variable")
    conj = _is_conj(connective)
    h = _hint(hint, CONJUNCTIVE if conj else DISJUNCTIVE)
    lits = _literals(names, with_negation)
    return _combine([Choice(lits, hint=h) for _ in range(k)], connective)


def definite_clause(names: Sequence[str], head: Optional[str] = None, hint: Optional[str] = AUTO) -> Formula:
    """Optional negative body literals plus a chosen (or fixed) positive head."""
    if not names:
        raise ValueError("need at least one variable")
    h = _hint(hint, DISJUNCTIVE)
    body = [Choice((Not(Var(n)), FALSE), hint=h) for n in names]
    head_f = Var(head) if head is not None else Choice(tuple(Var(n) for n in names), hint=h)
    return disjoin(body + [head_f])


def general_clause(names: Sequence[str], hint: Optional[str] = AUTO) -> Formula:
    """Each variable appears negated, positive, or not at all."""
    h = _hint(hint, DISJUNCTIVE)
    return disjoin([Choice((Not(Var(n)), Var(n), FALSE), hint=h) for n in names])


def definite_width_clause(names: Sequence[str], body_width: int = 2, hint: Optional[str] = AUTO) -> Formula:
    """``body_width`` negative-literal choices and one positive head choice."""
    h = _hint(hint, DISJUNCTIVE)
    neg = tuple(Not(Var(n)) for n in names)
    pos = tuple(Var(n) for n in names)
    return disjoin([Choice(neg, hint=h) for _ in range(body_width)] + [Choice(pos, hint=h)])


def clause_conjunction(clauses: Sequence[Formula], label: str = "y") -> Program:
    return build_program((), [(label, conjoin(list(clauses)))])


DEFINITE_TEMPLATES = (
    "5 clauses",
    "5 definite clauses",
    "5 definite clauses of width 3",
    "5 definite clauses with heads given",
    "5 definite clauses with first given",
)


def definite_templates(names: Sequence[str], heads: Sequence[str], first: Formula,
                       n_clauses: int = 5) -> dict:
    """The five template variants for learning a CNF of definite clauses.

    ``heads`` lists the known clause heads, ``first`` a fully known clause.
    """
    if len(heads) != n_clauses:
        raise ValueError("one head per clause is required")
    return {
        "5 clauses": clause_conjunction([general_clause(names) for _ in range(n_clauses)]),
        "5 definite clauses": clause_conjunction([definite_clause(names) for _ in range(n_clauses)]),
        "5 definite clauses of width 3": clause_conjunction(
            [definite_width_clause(names, 2) for _ in range(n_clauses)]),
        "5 definite clauses with heads given": clause_conjunction(
            [definite_clause(names, head=h) for h in heads]),
        "5 definite clauses with first given": clause_conjunction(
            [first] + [definite_clause(names) for _ in range(n_clauses - 1)]),
    }


# ---------------------------------------------------------------------------
# Layered networks


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # CONJUNCTIVE or DISJUNCTIVE
    width: int
    neuron_style: str = SUBSET
    k: Optional[int] = None
    negation: bool = False  # fixed-k only: offer negated inputs too

    def __post_init__(self):
        if self.kind not in (CONJUNCTIVE, DISJUNCTIVE):
            raise ValueError(f"layer kind must be {CONJUNCTIVE!r} or {DISJUNCTIVE!r}")
        if self.width < 1:
            raise ValueError("layer width must be at least 1")
        if self.neuron_style not in NEURON_STYLES:
            raise ValueError(f"unknown neuron style {self.neuron_style!r}")
        if self.neuron_style == FIXED_K and (self.k is None or self.k < 1):
            raise ValueError("fixed-k neurons need k >= 1")


def _neuron(spec: LayerSpec, inputs: Sequence[Formula], hint: Optional[str]) -> Formula:
    conj = spec.kind == CONJUNCTIVE
    h = _hint(hint, spec.kind)
    if spec.neuron_style == FIXED_K:
        lits = tuple(inputs) + (tuple(Not(x) for x in inputs) if spec.negation else ())
        parts = [Choice(lits, hint=h) for _ in range(spec.k)]
    else:
        neutral = TRUE if conj else FALSE
        if spec.neuron_style == SUBSET_NEG:
            parts = [Choice((x, Not(x), neutral), hint=h) for x in inputs]
        else:
            parts = [Choice((x, neutral), hint=h) for x in inputs]
    return conjoin(parts) if conj else disjoin(parts)


def layered_net(input_vars: Sequence[str], layers: Sequence[LayerSpec], n_outputs: Optional[int] = None,
                output_labels: Optional[Sequence[str]] = None, hint: Optional[str] = AUTO) -> Program:
    """A stack of alternating conjunctive/disjunctive layers.

    Hidden neurons are declarations ``h<layer>_<j>`` so every neuron of the
    next layer reads the same selections. The last layer is inlined into the
    outputs, labelled ``y1..yn`` unless ``output_labels`` is given.
    """
    if not layers:
        raise ValueError("need at least one layer")
    if not input_vars:
        raise ValueError("need at least one input")
    for a, b in zip(layers, layers[1:]):
        if a.kind == b.kind:
            raise ValueError("consecutive layers must alternate between conjunctive and disjunctive")
    n_outputs = layers[-1].width if n_outputs is None else n_outputs
    if layers[-1].width != n_outputs:
        raise ValueError(f"last layer has width {layers[-1].width}, expected {n_outputs}")
    if output_labels is None:
        output_labels = ["y"] if n_outputs == 1 else [f"y{j + 1}" for j in range(n_outputs)]
    if len(output_labels) != n_outputs:
        raise ValueError("one label per output is required")

    prev: list = [Var(v) for v in input_vars]
    decls = []
    for depth, spec in enumerate(layers[:-1], start=1):
        names = [f"h{depth}_{j + 1}" for j in range(spec.width)]
        decls.extend((n, _neuron(spec, prev, hint)) for n in names)
        prev = [PlaceholderRef(n) for n in names]
    outputs = [(label, _neuron(layers[-1], prev, hint)) for label in output_labels]
    return build_program(decls, outputs)


def dnf_net(input_vars: Sequence[str], n_terms: int, k: int, n_outputs: int = 1, negation: bool = False,
            output_labels: Optional[Sequence[str]] = None) -> Program:
    """Conjunctive fixed-k layer followed by a disjunctive subset output layer."""
    return layered_net(
        input_vars,
        [LayerSpec(CONJUNCTIVE, n_terms, FIXED_K, k, negation), LayerSpec(DISJUNCTIVE, n_outputs, SUBSET)],
        n_outputs,
        output_labels,
    )
