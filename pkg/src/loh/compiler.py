"""Lowering of LoH programs to min/max computation graphs with gate nodes.

A choice ``[F1, ..., Fn]`` becomes either

* disjunctive: ``max_i min(w_i, F_i)``
* conjunctive: ``min_i max(1 - w_i, F_i)``

where ``w`` is produced by the weight block attached to the choice. The graph
shape does not depend on the fuzzy semantics; the engine interprets
``min``/``max`` nodes as Gödel or product connectives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import MissingIndexError
from .formula import (
    CONJUNCTIVE,
    DISJUNCTIVE,
    And,
    Choice,
    Const,
    Formula,
    Not,
    Or,
    PlaceholderRef,
    Program,
    Var,
    conjoin,
    disjoin,
)

GODEL = "godel"
PRODUCT = "product"
SEMANTICS = (GODEL, PRODUCT)

INPUT, CONST, NEG, MIN, MAX, GATE, COGATE = "input", "const", "neg", "min", "max", "gate", "cogate"


@dataclass(frozen=True)
class GraphNode:
    kind: str
    children: tuple = ()
    name: Optional[str] = None
    value: Optional[float] = None
    block: Optional[int] = None
    slot: Optional[int] = None


@dataclass(frozen=True)
class BlockSpec:
    """Descriptor of the weight block owned by one choice node."""

    choice_id: int
    arity: int
    variant: str
    node: int
    branches: tuple
    gates: tuple = ()

    @property
    def trainable(self) -> bool:
        return self.arity >= 2


@dataclass(frozen=True)
class Polarity:
    context: str
    negated: bool = False

    def flipped(self) -> "Polarity":
        return Polarity(self.context, not self.negated)

    def variant(self) -> str:
        disj = (self.context == DISJUNCTIVE) != self.negated
        return DISJUNCTIVE if disj else CONJUNCTIVE


@dataclass(frozen=True, eq=False)
class CompiledGraph:
    nodes: tuple
    outputs: tuple  # (label, node id) pairs
    blocks: tuple  # BlockSpec, ordered by choice id
    input_names: tuple
    semantics: str = GODEL
    root_context: str = CONJUNCTIVE
    program: Optional[Program] = field(default=None, repr=False)

    @property
    def output_ids(self) -> list:
        return [i for _, i in self.outputs]

    @property
    def output_labels(self) -> list:
        return [label for label, _ in self.outputs]

    @property
    def variants(self) -> dict:
        return {b.choice_id: b.variant for b in self.blocks}

    def block(self, choice_id: int) -> BlockSpec:
        for b in self.blocks:
            if b.choice_id == choice_id:
                return b
        raise KeyError(choice_id)

    def to_json(self) -> dict:
        nodes = []
        for i, n in enumerate(self.nodes):
            entry = {"id": i, "kind": n.kind, "children": list(n.children)}
            if n.kind == INPUT:
                entry["name"] = n.name
            elif n.kind == CONST:
                entry["value"] = n.value
            elif n.kind in (GATE, COGATE):
                entry["block"] = n.block
                entry["slot"] = n.slot
            nodes.append(entry)
        return {
            "semantics": self.semantics,
            "root_context": self.root_context,
            "inputs": list(self.input_names),
            "outputs": {label: i for label, i in self.outputs},
            "nodes": nodes,
            "choices": [
                {
                    "id": b.choice_id,
                    "arity": b.arity,
                    "variant": b.variant,
                    "trainable": b.trainable,
                    "node": b.node,
                    "branches": list(b.branches),
                    "gates": list(b.gates),
                }
                for b in self.blocks
            ],
        }


def resolve_variants(p: Program, root_context: str = CONJUNCTIVE) -> dict:
    """Pick a compilation for every choice node from its logical context.

    ``&`` makes the context conjunctive, ``|`` disjunctive, ``!`` flips the
    parity. A choice is compiled disjunctively when it sits positively in a
    disjunction or negated in a conjunction. A choice placed directly as a
    branch of another choice takes the outer node's variant as its context.
    Placeholder bodies are resolved at their first use; explicit hints win.
    """
    variants = {}
    visited = set()

    def visit(f: Formula, pol: Polarity):
        if isinstance(f, Not):
            visit(f.child, pol.flipped())
        elif isinstance(f, And):
            inner = Polarity(CONJUNCTIVE, pol.negated)
            visit(f.left, inner)
            visit(f.right, inner)
        elif isinstance(f, Or):
            inner = Polarity(DISJUNCTIVE, pol.negated)
            visit(f.left, inner)
            visit(f.right, inner)
        elif isinstance(f, Choice):
            variant = f.hint or pol.variant()
            variants[f.id] = variant
            for child in f.children:
                if isinstance(child, Choice):
                    visit(child, Polarity(variant))
                else:
                    visit(child, pol)
        elif isinstance(f, PlaceholderRef):
            if f.name not in visited:
                visited.add(f.name)
                visit(p.declaration(f.name), pol)

    for _, root in p.outputs:
        visit(root, Polarity(root_context))
    for name, body in p.declarations:
        if name not in visited:
            visited.add(name)
            visit(body, Polarity(root_context))
    return dict(sorted(variants.items()))


def _flatten(f: Formula, cls) -> list:
    out, stack = [], [f]
    while stack:
        node = stack.pop()
        if isinstance(node, cls):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def compile_program(
    p: Program,
    semantics: str = GODEL,
    root_context: str = CONJUNCTIVE,
    variants: Optional[Mapping[int, str]] = None,
) -> CompiledGraph:
    """Compile every output of ``p``; ``variants`` overrides the heuristic."""
    if semantics not in SEMANTICS:
        raise ValueError(f"unknown semantics {semantics!r}")
    resolved = resolve_variants(p, root_context)
    if variants:
        resolved.update({int(k): v for k, v in variants.items()})

    nodes: list = []
    inputs: dict = {}
    consts: dict = {}
    placeholders: dict = {}
    blocks: dict = {}

    def add(node: GraphNode) -> int:
        nodes.append(node)
        return len(nodes) - 1

    def comp(f: Formula) -> int:
        if isinstance(f, Var):
            if f.name not in inputs:
                inputs[f.name] = add(GraphNode(INPUT, name=f.name))
            return inputs[f.name]
        if isinstance(f, Const):
            if f.value not in consts:
                consts[f.value] = add(GraphNode(CONST, value=1.0 if f.value else 0.0))
            return consts[f.value]
        if isinstance(f, Not):
            return add(GraphNode(NEG, (comp(f.child),)))
        if isinstance(f, And):
            return add(GraphNode(MIN, tuple(comp(c) for c in _flatten(f, And))))
        if isinstance(f, Or):
            return add(GraphNode(MAX, tuple(comp(c) for c in _flatten(f, Or))))
        if isinstance(f, PlaceholderRef):
            if f.name not in placeholders:
                placeholders[f.name] = comp(p.declaration(f.name))
            return placeholders[f.name]
        if isinstance(f, Choice):
            return comp_choice(f)
        raise TypeError(f"not a formula: {f!r}")

    def comp_choice(f: Choice) -> int:
        branches = tuple(comp(c) for c in f.children)
        variant = resolved[f.id]
        if f.arity == 1:
            blocks[f.id] = BlockSpec(f.id, 1, variant, branches[0], branches)
            return branches[0]
        gates, terms = [], []
        for slot, branch in enumerate(branches):
            if variant == DISJUNCTIVE:
                g = add(GraphNode(GATE, block=f.id, slot=slot))
                terms.append(add(GraphNode(MIN, (g, branch))))
            else:
                g = add(GraphNode(COGATE, block=f.id, slot=slot))
                terms.append(add(GraphNode(MAX, (g, branch))))
            gates.append(g)
        top = add(GraphNode(MAX if variant == DISJUNCTIVE else MIN, tuple(terms)))
        blocks[f.id] = BlockSpec(f.id, f.arity, variant, top, branches, tuple(gates))
        return top

    outputs = tuple((label, comp(root)) for label, root in p.outputs)
    return CompiledGraph(
        nodes=tuple(nodes),
        outputs=outputs,
        blocks=tuple(blocks[k] for k in sorted(blocks)),
        input_names=tuple(inputs),
        semantics=semantics,
        root_context=root_context,
        program=p,
    )


# the public name used throughout the docs
compile = compile_program


def substitute_discrete(g: CompiledGraph, idx: Mapping[int, int], label: Optional[str] = None) -> Formula:
    """Read the discrete formula selected by ``idx`` off the compiled graph.

    Flattened ``min``/``max`` nodes come back as left-associated chains, so
    the result equals the source-level substitution up to associativity.
    """
    label = g.output_labels[0] if label is None else label
    root = dict(g.outputs)[label]
    choice_at = {b.node: b for b in g.blocks if b.arity >= 2}
    for b in g.blocks:
        if b.choice_id not in idx:
            raise MissingIndexError(f"no index for choice node {b.choice_id}")
    memo: dict = {}

    def back(i: int) -> Formula:
        if i in memo:
            return memo[i]
        node = g.nodes[i]
        if i in choice_at:
            b = choice_at[i]
            k = idx[b.choice_id]
            if not 0 <= k < b.arity:
                raise MissingIndexError(f"index {k} out of range for choice {b.choice_id}")
            out = back(b.branches[k])
        elif node.kind == INPUT:
            out = Var(node.name)
        elif node.kind == CONST:
            out = Const(node.value == 1.0)
        elif node.kind == NEG:
            out = Not(back(node.children[0]))
        elif node.kind == MIN:
            out = conjoin([back(c) for c in node.children])
        elif node.kind == MAX:
            out = disjoin([back(c) for c in node.children])
        else:
            raise ValueError(f"gate node {i} reached outside a choice pattern")
        memo[i] = out
        return out

    return back(root)
