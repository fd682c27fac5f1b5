"""Abstract syntax, concrete grammar, parser and printer for LoH programs.

Grammar (whitespace-insensitive, ``#`` starts a line comment)::

    program := stmt*
    stmt    := "let" IDENT "=" expr ";" | "out" IDENT "=" expr ";"
    expr    := term ("|" term)*
    term    := unary ("&" unary)*
    unary   := "!" unary | atom
    atom    := IDENT | "true" | "false" | "(" expr ")"
             | "[" expr ("," expr)* "]" ["@disj" | "@conj"]

Binary connectives associate to the left. Identifiers naming a ``let``
declaration are placeholder references, every other identifier is a
propositional variable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    CyclicDependencyError,
    DuplicateNameError,
    ForwardReferenceError,
    ParseError,
    ProgramError,
    UnresolvedPlaceholderError,
)

DISJUNCTIVE = "disjunctive"
CONJUNCTIVE = "conjunctive"
_HINT_SUFFIX = {DISJUNCTIVE: "disj", CONJUNCTIVE: "conj"}
_HINT_FROM_SUFFIX = {v: k for k, v in _HINT_SUFFIX.items()}

KEYWORDS = frozenset({"let", "out", "true", "false"})
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Choice:
    children: tuple
    id: int = -1
    hint: Optional[str] = None

    def __post_init__(self):
        if not self.children:
            raise ProgramError("a choice node needs at least one child")
        if self.hint not in (None, DISJUNCTIVE, CONJUNCTIVE):
            raise ProgramError(f"unknown compile hint {self.hint!r}")
        object.__setattr__(self, "children", tuple(self.children))

    @property
    def arity(self) -> int:
        return len(self.children)


@dataclass(frozen=True)
class PlaceholderRef:
    name: str


Formula = Union[Var, Const, Not, And, Or, Choice, PlaceholderRef]

TRUE = Const(True)
FALSE = Const(False)


def conjoin(items: Sequence[Formula]) -> Formula:
    """Left-associated conjunction; the empty conjunction is ``true``."""
    items = list(items)
    if not items:
        return TRUE
    out = items[0]
    for f in items[1:]:
        out = And(out, f)
    return out


def disjoin(items: Sequence[Formula]) -> Formula:
    """Left-associated disjunction; the empty disjunction is ``false``."""
    items = list(items)
    if not items:
        return FALSE
    out = items[0]
    for f in items[1:]:
        out = Or(out, f)
    return out


def children(f: Formula) -> tuple:
    if isinstance(f, Not):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return (f.left, f.right)
    if isinstance(f, Choice):
        return f.children
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal, left to right. Placeholders are not expanded."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def variables(f: Formula) -> list:
    """Variable names in order of first appearance."""
    seen = {}
    for node in walk(f):
        if isinstance(node, Var):
            seen.setdefault(node.name, None)
    return list(seen)


def is_discrete(f: Formula) -> bool:
    return not any(isinstance(n, (Choice, PlaceholderRef)) for n in walk(f))


# ---------------------------------------------------------------------------
# Programs


@dataclass(frozen=True)
class Program:
    declarations: tuple = ()
    outputs: tuple = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "declarations", tuple((n, f) for n, f in self.declarations))
        object.__setattr__(self, "outputs", tuple((n, f) for n, f in self.outputs))
        object.__setattr__(self, "_index", dict(self.declarations))

    def declaration(self, name: str) -> Formula:
        try:
            return self._index[name]
        except KeyError:
            raise UnresolvedPlaceholderError(f"unresolved placeholder {name!r}") from None

    def output(self, label: str) -> Formula:
        for name, root in self.outputs:
            if name == label:
                return root
        raise KeyError(f"no output labelled {label!r}")

    @property
    def output_labels(self) -> list:
        return [label for label, _ in self.outputs]

    def choices(self) -> dict:
        """Every choice node of the program keyed by id, in id order."""
        found = {}
        for _, body in self.declarations + self.outputs:
            for node in walk(body):
                if isinstance(node, Choice):
                    found[node.id] = node
        return dict(sorted(found.items()))

    def variables(self) -> list:
        seen = {}
        for _, body in self.declarations + self.outputs:
            for name in variables(body):
                seen.setdefault(name, None)
        return list(seen)


def references(f: Formula) -> list:
    """Placeholder names mentioned directly in ``f`` (first-appearance order)."""
    seen = {}
    for node in walk(f):
        if isinstance(node, PlaceholderRef):
            seen.setdefault(node.name, None)
    return list(seen)


def find_cycle(declarations: Sequence) -> Optional[list]:
    """Return one cycle of the placeholder reference graph, or None.

    The cycle is returned as a list of names whose first and last entries
    coincide. References to undeclared names are ignored here.
    """
    deps = {name: [r for r in references(body)] for name, body in declarations}
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {name: WHITE for name in deps}
    for start in deps:
        if colour[start] != WHITE:
            continue
        # iterative DFS keeping the grey path explicit
        path = [start]
        iters = [iter(deps[start])]
        colour[start] = GREY
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                colour[path.pop()] = BLACK
                iters.pop()
                continue
            if nxt not in colour:
                continue
            if colour[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            if colour[nxt] == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                iters.append(iter(deps[nxt]))
    return None


def validate_program(p: Program) -> None:
    names = [n for n, _ in p.declarations]
    seen = set()
    for name in names:
        if name in seen:
            raise DuplicateNameError(f"duplicate declaration {name!r}")
        seen.add(name)
    labels = set()
    for label, _ in p.outputs:
        if label in labels:
            raise DuplicateNameError(f"duplicate output label {label!r}")
        labels.add(label)
    for name in list(names) + list(labels):
        if not IDENT_RE.match(name) or name in KEYWORDS:
            raise ProgramError(f"invalid identifier {name!r}")
    clash = seen.intersection(p.variables())
    if clash:
        raise ProgramError(f"declaration names also used as variables: {sorted(clash)}")
    for _, body in p.declarations + p.outputs:
        for ref in references(body):
            if ref not in seen:
                raise UnresolvedPlaceholderError(f"unresolved placeholder {ref!r}")
        for node in walk(body):
            if isinstance(node, Var) and (not IDENT_RE.match(node.name) or node.name in KEYWORDS):
                raise ProgramError(f"invalid variable name {node.name!r}")
    cycle = find_cycle(p.declarations)
    if cycle:
        raise CyclicDependencyError(cycle)
    ids = {}
    for _, body in p.declarations + p.outputs:
        for node in walk(body):
            if isinstance(node, Choice):
                if node.id in ids:
                    raise ProgramError(f"choice id {node.id} is not unique")
                ids[node.id] = node


def dependency_order(p: Program) -> list:
    """Topological order of declarations; ties follow declaration order."""
    names = [n for n, _ in p.declarations]
    deps = {n: set(references(b)) & set(names) for n, b in p.declarations}
    done, order = set(), []
    while len(order) < len(names):
        ready = [n for n in names if n not in done and deps[n] <= done]
        if not ready:
            raise CyclicDependencyError(find_cycle(p.declarations) or names)
        order.append(ready[0])
        done.add(ready[0])
    return order


def number_choices(p: Program) -> Program:
    """Reassign choice ids in source order (the order the parser uses).

    Programs built in code should pass through here so that ids are unique
    and ``parse_program(print_program(p)) == p``.
    """
    counter = [0]

    def renumber(f):
        if isinstance(f, Choice):
            cid = counter[0]
            counter[0] += 1
            return Choice(tuple(renumber(c) for c in f.children), cid, f.hint)
        if isinstance(f, Not):
            return Not(renumber(f.child))
        if isinstance(f, And):
            return And(renumber(f.left), renumber(f.right))
        if isinstance(f, Or):
            return Or(renumber(f.left), renumber(f.right))
        return f

    decls = tuple((n, renumber(b)) for n, b in p.declarations)
    outs = tuple((n, renumber(b)) for n, b in p.outputs)
    out = Program(decls, outs)
    validate_program(out)
    return out


def build_program(declarations=(), outputs=()) -> Program:
    return number_choices(Program(tuple(declarations), tuple(outputs)))


# ---------------------------------------------------------------------------
# Printing

_PREC = {Or: 1, And: 2, Not: 3}


def print_formula(f: Formula) -> str:
    return _fmt(f, 0)


def _fmt(f: Formula, min_prec: int) -> str:
    if isinstance(f, Var):
        return f.name
    if isinstance(f, PlaceholderRef):
        return f.name
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Choice):
        body = "[" + ", ".join(_fmt(c, 0) for c in f.children) + "]"
        if f.hint is not None:
            body += "@" + _HINT_SUFFIX[f.hint]
        return body
    if isinstance(f, Not):
        text = "!" + _fmt(f.child, 3)
    elif isinstance(f, And):
        text = _fmt(f.left, 2) + " & " + _fmt(f.right, 3)
    elif isinstance(f, Or):
        text = _fmt(f.left, 1) + " | " + _fmt(f.right, 2)
    else:
        raise TypeError(f"not a formula: {f!r}")
    if _PREC[type(f)] < min_prec:
        return "(" + text + ")"
    return text


def print_program(p: Program) -> str:
    lines = [f"let {name} = {print_formula(body)};" for name, body in p.declarations]
    lines += [f"out {label} = {print_formula(root)};" for label, root in p.outputs]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<hint>@[A-Za-z_]+)
  | (?P<op>[!&|\[\](),;=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list:
    tokens, line, line_start, pos = [], 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, placeholders: frozenset = frozenset()):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.placeholders = placeholders
        self.next_choice_id = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def fail(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{message}, found {found}", tok.line, tok.col)

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind not in ("op", "ident"):
            self.fail(f"expected {text!r}")
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self) -> _Token:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.fail("expected an identifier")
        self.pos += 1
        return tok

    def expr(self) -> Formula:
        out = self.term()
        while self.tok.text == "|":
            self.pos += 1
            out = Or(out, self.term())
        return out

    def term(self) -> Formula:
        out = self.unary()
        while self.tok.text == "&":
            self.pos += 1
            out = And(out, self.unary())
        return out

    def unary(self) -> Formula:
        if self.tok.text == "!":
            self.pos += 1
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Formula:
        tok = self.tok
        if tok.kind == "ident":
            self.pos += 1
            if tok.text == "true":
                return TRUE
            if tok.text == "false":
                return FALSE
            if tok.text in ("let", "out"):
                self.fail("unexpected keyword", tok)
            if tok.text in self.placeholders:
                return PlaceholderRef(tok.text)
            return Var(tok.text)
        if tok.text == "(":
            self.pos += 1
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.text == "[":
            self.pos += 1
            cid = self.next_choice_id
            self.next_choice_id += 1
            kids = [self.expr()]
            while self.tok.text == ",":
                self.pos += 1
                kids.append(self.expr())
            self.expect("]")
            hint = None
            if self.tok.kind == "hint":
                suffix = self.tok.text[1:]
                if suffix not in _HINT_FROM_SUFFIX:
                    self.fail("expected @disj or @conj")
                hint = _HINT_FROM_SUFFIX[suffix]
                self.pos += 1
            return Choice(tuple(kids), cid, hint)
        self.fail("expected a formula")


def parse_formula(source: str) -> Formula:
    """Parse a single formula (no statements). Choice ids start at 0."""
    parser = _Parser(source)
    f = parser.expr()
    if parser.tok.kind != "eof":
        parser.fail("unexpected trailing input")
    return f


def _declared_names(tokens: list) -> dict:
    """Map each ``let`` name to the token index of its statement."""
    names = {}
    for i, tok in enumerate(tokens[:-1]):
        if tok.kind == "ident" and tok.text == "let" and tokens[i + 1].kind == "ident":
            names.setdefault(tokens[i + 1].text, i)
    return names


def parse_program(source: str) -> Program:
    parser = _Parser(source)
    declared_at = _declared_names(parser.tokens)
    parser.placeholders = frozenset(declared_at)
    decls, outs = [], []
    defined, seen_decl = set(), set()
    forward = []  # (user, referenced name, token)
    while parser.tok.kind != "eof":
        kw = parser.tok
        if kw.text not in ("let", "out") or kw.kind != "ident":
            parser.fail("expected 'let' or 'out'")
        parser.pos += 1
        name_tok = parser.ident()
        parser.expect("=")
        body_start = parser.pos
        body = parser.expr()
        parser.expect(";")
        for tok in parser.tokens[body_start:parser.pos]:
            if tok.kind == "ident" and tok.text in declared_at and tok.text not in defined:
                forward.append((name_tok.text, tok.text, tok))
        if kw.text == "let":
            if name_tok.text in seen_decl:
                raise DuplicateNameError(
                    f"duplicate declaration {name_tok.text!r} at line {name_tok.line}, column {name_tok.col}"
                )
            seen_decl.add(name_tok.text)
            defined.add(name_tok.text)
            decls.append((name_tok.text, body))
        else:
            if any(label == name_tok.text for label, _ in outs):
                raise DuplicateNameError(
                    f"duplicate output label {name_tok.text!r} at line {name_tok.line}, column {name_tok.col}"
                )
            outs.append((name_tok.text, body))
    if forward:
        cycle = find_cycle(decls)
        if cycle:
            raise CyclicDependencyError(cycle)
        user, name, tok = forward[0]
        raise ForwardReferenceError(
            f"{user!r} references placeholder {name!r} before its declaration "
            f"at line {tok.line}, column {tok.col}"
        )
    p = Program(tuple(decls), tuple(outs))
    validate_program(p)
    return p


# ---------------------------------------------------------------------------
# Boolean evaluation of choice-free formulas


def eval_bool(f: Formula, assignment: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorised Boolean evaluation; ``assignment`` maps names to bool arrays.

    Shared subtrees (identical objects) are evaluated once.
    """
    memo = {}

    def ev(node):
        key = id(node)
        if key in memo:
            return memo[key][1]
        if isinstance(node, Var):
            out = np.asarray(assignment[node.name], dtype=bool)
        elif isinstance(node, Const):
            out = np.bool_(node.value)
        elif isinstance(node, Not):
            out = ~ev(node.child)
        elif isinstance(node, And):
            out = ev(node.left) & ev(node.right)
        elif isinstance(node, Or):
            out = ev(node.left) | ev(node.right)
        else:
            raise ProgramError(f"cannot evaluate {type(node).__name__} as a Boolean formula")
        memo[key] = (node, out)
        return out

    return ev(f)
