"""Hypothesis-space enumeration: fix one branch per choice node."""
from __future__ import annotations

import itertools
import math
from typing import Mapping, Optional, Sequence, Union

from .errors import MissingIndexError, SpaceTooLargeError
from .formula import (
    And,
    Choice,
    Const,
    Formula,
    Not,
    Or,
    PlaceholderRef,
    Program,
    Var,
    walk,
)

DEFAULT_LIMIT = 1_000_000

IndexAssignment = Mapping[int, int]


def reachable_choices(p: Program, root_label: str) -> list:
    """Choice nodes reachable from an output (through placeholders), by id."""
    found, visited = {}, set()
    stack = [p.output(root_label)]
    while stack:
        f = stack.pop()
        for node in walk(f):
            if isinstance(node, Choice):
                found[node.id] = node
            elif isinstance(node, PlaceholderRef) and node.name not in visited:
                visited.add(node.name)
                stack.append(p.declaration(node.name))
    return [found[k] for k in sorted(found)]


def _as_mapping(p: Program, root_label: str, idx) -> dict:
    if isinstance(idx, Mapping):
        return dict(idx)
    ids = [c.id for c in reachable_choices(p, root_label)]
    idx = list(idx)
    if len(idx) != len(ids):
        raise MissingIndexError(f"expected {len(ids)} indices, got {len(idx)}")
    return dict(zip(ids, idx))


def substitute(f: Formula, p: Program, idx: Mapping[int, int]) -> Formula:
    """Replace every choice by its selected branch and inline placeholders.

    Each placeholder body is resolved once and the same result object is
    reused at every occurrence, so all occurrences share their selections.
    """
    resolved = {}

    def ev(node):
        if isinstance(node, (Var, Const)):
            return node
        if isinstance(node, Not):
            return Not(ev(node.child))
        if isinstance(node, And):
            return And(ev(node.left), ev(node.right))
        if isinstance(node, Or):
            return Or(ev(node.left), ev(node.right))
        if isinstance(node, Choice):
            if node.id not in idx:
                raise MissingIndexError(f"no index for choice node {node.id}")
            i = idx[node.id]
            if not 0 <= i < node.arity:
                raise MissingIndexError(f"index {i} out of range for choice {node.id} of arity {node.arity}")
            return ev(node.children[i])
        if isinstance(node, PlaceholderRef):
            if node.name not in resolved:
                resolved[node.name] = ev(p.declaration(node.name))
            return resolved[node.name]
        raise TypeError(f"not a formula: {node!r}")

    return ev(f)


def eval_indices(p: Program, root_label: str, idx: Union[IndexAssignment, Sequence[int]]) -> Formula:
    """The discrete formula selected by ``idx`` for one output.

    ``idx`` is either a mapping ChoiceId -> branch or a sequence of branches
    aligned with :func:`reachable_choices`.
    """
    return substitute(p.output(root_label), p, _as_mapping(p, root_label, idx))


def space_size(p: Program, root_label: str) -> int:
    return math.prod(c.arity for c in reachable_choices(p, root_label))


def iter_indices(p: Program, root_label: str):
    """All index assignments in lexicographic (ChoiceId, branch) order."""
    choices = reachable_choices(p, root_label)
    ids = [c.id for c in choices]
    for combo in itertools.product(*(range(c.arity) for c in choices)):
        yield dict(zip(ids, combo))


def enumerate_space(
    p: Program,
    root_label: str,
    limit: Optional[int] = DEFAULT_LIMIT,
    dedup: bool = False,
) -> list:
    size = space_size(p, root_label)
    if limit is not None and size > limit:
        raise SpaceTooLargeError(f"hypothesis space has {size} formulas, limit is {limit}")
    root = p.output(root_label)
    out = [substitute(root, p, idx) for idx in iter_indices(p, root_label)]
    if dedup:
        out = list(dict.fromkeys(out))
    return out
