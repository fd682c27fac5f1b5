"""Datasets: CSV ingestion with one-hot encoding, splits, synthetic generators."""
from __future__ import annotations

import csv
import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .formula import Formula, Not, Var, conjoin, disjoin

DISJUNCTIVE = "disjunctive"
CONJUNCTIVE = "conjunctive"


@dataclass(frozen=True, eq=False)
class Dataset:
    feature_names: tuple
    X: np.ndarray
    y: np.ndarray
    class_names: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise DataError(f"X has shape {X.shape} but {len(self.feature_names)} feature names")
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y disagree on the number of rows")
        if X.size and (X.min() < 0 or X.max() > 1):
            raise DataError("feature values must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("class index out of range")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.feature_names, self.X[rows], self.y[rows], self.class_names)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.feature_names != self.feature_names or other.class_names != self.class_names:
            raise DataError("datasets disagree on features or classes")
        return Dataset(self.feature_names, np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]),
                       self.class_names)

    def columns(self, names: Sequence[str]) -> np.ndarray:
        """Feature matrix restricted to ``names``; unknown names are an error."""
        index = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise DataError(f"dataset lacks features used by the formula: {missing[:5]}")
        return self.X[:, [index[n] for n in names]]

    def align(self, feature_names: Sequence[str], class_names: Sequence[str]) -> "Dataset":
        """Re-express on a reference feature/class vocabulary.

        Missing one-hot columns are filled with zeros; unknown classes fail.
        """
        index = {n: i for i, n in enumerate(self.feature_names)}
        X = np.zeros((len(self), len(feature_names)))
        for j, name in enumerate(feature_names):
            if name in index:
                X[:, j] = self.X[:, index[name]]
        cls_index = {c: i for i, c in enumerate(class_names)}
        unknown = sorted(set(self.class_names) - set(cls_index))
        if unknown:
            raise DataError(f"unknown class labels {unknown}")
        y = np.asarray([cls_index[self.class_names[k]] for k in self.y], dtype=np.int64)
        return Dataset(tuple(feature_names), X, y, tuple(class_names))


def sanitize(name: str) -> str:
    """Turn an arbitrary column/value string into a formula identifier."""
    out = re.sub(r"[^A-Za-z0-9_]", "_", name.strip())
    if not out or not (out[0].isalpha() or out[0] == "_"):
        out = "_" + out
    if out in ("let", "out", "true", "false"):
        out += "_"
    return out


def one_hot_name(column: str, value: str) -> str:
    return sanitize(f"{column}_{value}")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def equal_frequency_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Bin index per value, with cut points at empirical quantiles."""
    values = np.asarray(values, dtype=np.float64)
    cuts = np.unique(np.quantile(values, np.linspace(0, 1, n_bins + 1)[1:-1]))
    return np.searchsorted(cuts, values, side="right")


def load_csv(
    path,
    label_column: str,
    bins: Optional[int] = None,
    categorical: Sequence[str] = (),
    positive: Optional[str] = None,
) -> Dataset:
    """Read a CSV with a header row into a binary Dataset.

    Columns whose values are all 0/1 pass through unchanged; numeric columns
    with other values are binned into ``bins`` equal-frequency intervals (or
    rejected when ``bins`` is None); everything else is one-hot encoded with
    ``column_value`` feature names. Classes are numbered in order of first
    occurrence, except that ``positive`` (if given) is moved to the end so a
    single-output model predicts it.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], [r for r in rows[1:] if any(c.strip() for c in r)]
    if label_column not in header:
        raise DataError(f"{path}: missing label column {label_column!r}")
    for r in body:
        if len(r) != len(header):
            raise DataError(f"{path}: ragged row {r}")
    li = header.index(label_column)
    labels = [r[li].strip() for r in body]
    classes = list(dict.fromkeys(labels))
    if positive is not None:
        if positive not in classes:
            raise DataError(f"positive class {positive!r} not present")
        classes.remove(positive)
        classes.append(positive)
    cls_index = {c: i for i, c in enumerate(classes)}

    names, cols = [], []
    for j, col in enumerate(header):
        if j == li:
            continue
        vals = [r[j].strip() for r in body]
        if col not in categorical and vals and all(_is_number(v) for v in vals):
            nums = np.asarray([float(v) for v in vals])
            if set(np.unique(nums)) <= {0.0, 1.0}:
                names.append(sanitize(col))
                cols.append(nums)
                continue
            if bins is None:
                raise DataError(
                    f"column {col!r} is numeric but not binary; pass a bin count "
                    "or binarize it beforehand"
                )
            idx = equal_frequency_bins(nums, bins)
            for k in range(int(idx.max()) + 1):
                names.append(one_hot_name(col, f"bin{k}"))
                cols.append((idx == k).astype(np.float64))
            continue
        for value in dict.fromkeys(vals):
            names.append(one_hot_name(col, value))
            cols.append(np.asarray([v == value for v in vals], dtype=np.float64))
    if len(set(names)) != len(names):
        raise DataError("feature names collide after sanitising; rename columns")
    X = np.stack(cols, axis=1) if cols else np.zeros((len(body), 0))
    y = np.asarray([cls_index[v] for v in labels], dtype=np.int64)
    return Dataset(tuple(names), X, y, tuple(classes))


def write_csv(d: Dataset, path, label_column: str = "label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(d.feature_names) + [label_column])
        for row, k in zip(d.X, d.y):
            w.writerow([format(v, "g") for v in row] + [d.class_names[k]])


def split(d: Dataset, fractions=(0.7, 0.1, 0.2), seed: int = 0):
    """Seeded shuffle, then contiguous train/val/test blocks.

    Test and validation sizes are rounded; training takes the remainder.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    n = len(d)
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(fractions[2] * n))
    n_val = int(round(fractions[1] * n))
    n_train = n - n_test - n_val
    return (
        d.subset(order[:n_train]),
        d.subset(order[n_train:n_train + n_val]),
        d.subset(order[n_train + n_val:]),
    )


# ---------------------------------------------------------------------------
# Synthetic clause data


@dataclass(frozen=True)
class ClauseSpec:
    literals: tuple  # (variable index, negated)
    connective: str = DISJUNCTIVE

    def __post_init__(self):
        if not self.literals:
            raise ValueError("a clause needs at least one literal")
        if self.connective not in (DISJUNCTIVE, CONJUNCTIVE):
            raise ValueError(f"unknown connective {self.connective!r}")

    def to_formula(self, names: Sequence[str]) -> Formula:
        lits = [Not(Var(names[i])) if neg else Var(names[i]) for i, neg in self.literals]
        return disjoin(lits) if self.connective == DISJUNCTIVE else conjoin(lits)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        B = np.asarray(X) > 0.5
        lits = [~B[:, i] if neg else B[:, i] for i, neg in self.literals]
        if self.connective == DISJUNCTIVE:
            return np.logical_or.reduce(lits)
        return np.logical_and.reduce(lits)


def var_names(n_vars: int) -> tuple:
    return tuple(f"v{i + 1}" for i in range(n_vars))


def all_assignments(n_vars: int) -> np.ndarray:
    return np.asarray(list(itertools.product((0.0, 1.0), repeat=n_vars))).reshape(-1, n_vars)


def gen_clause_dataset(n_vars: int, ground_truth: Sequence[ClauseSpec], combine: str = "conjunction") -> Dataset:
    """Every Boolean row over ``n_vars`` variables, labelled by the clauses."""
    if n_vars > 20:
        raise ValueError("at most 20 variables")
    X = all_assignments(n_vars)
    if combine == "conjunction":
        label = np.ones(len(X), dtype=bool)
        for c in ground_truth:
            label &= c.evaluate(X)
    elif combine == "disjunction":
        label = np.zeros(len(X), dtype=bool)
        for c in ground_truth:
            label |= c.evaluate(X)
    else:
        raise ValueError(f"unknown combination {combine!r}")
    return Dataset(var_names(n_vars), X, label.astype(np.int64), ("0", "1"))


def gen_random_clauses(n_vars: int, count: int, width_range=(2, 5), connective: str = DISJUNCTIVE,
                       rng: Optional[np.random.Generator] = None) -> list:
    lo, hi = width_range
    if not 1 <= lo <= hi <= n_vars:
        raise ValueError("width range must lie within [1, n_vars]")
    rng = rng if rng is not None else np.random.default_rng()
    out = []
    for _ in range(count):
        width = int(rng.integers(lo, hi + 1))
        chosen = rng.choice(n_vars, size=width, replace=False)
        negs = rng.random(width) < 0.5
        out.append(ClauseSpec(tuple((int(v), bool(n)) for v, n in zip(chosen, negs)), connective))
    return out


def clauses_formula(clauses: Sequence[ClauseSpec], names: Sequence[str], combine: str) -> Formula:
    parts = [c.to_formula(names) for c in clauses]
    return conjoin(parts) if combine == "conjunction" else disjoin(parts)


# ---------------------------------------------------------------------------
# Tic-tac-toe endgames

TTT_SQUARES = (
    "top-left-square", "top-middle-square", "top-right-square",
    "middle-left-square", "middle-middle-square", "middle-right-square",
    "bottom-left-square", "bottom-middle-square", "bottom-right-square",
)
TTT_LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6))


def _winner(board) -> Optional[str]:
    for a, b, c in TTT_LINES:
        if board[a] != "b" and board[a] == board[b] == board[c]:
            return board[a]
    return None


def tictactoe_boards() -> list:
    """All distinct final boards of games where x moves first.

    Returns (board, x_won) pairs sorted by board string; there are 958.
    """
    finals = {}
    stack = [("b" * 9, "x")]
    seen = set()
    while stack:
        board, player = stack.pop()
        if (board, player) in seen:
            continue
        seen.add((board, player))
        w = _winner(board)
        if w is not None or "b" not in board:
            finals[board] = w == "x"
            continue
        nxt = "o" if player == "x" else "x"
        for i, cell in enumerate(board):
            if cell == "b":
                stack.append((board[:i] + player + board[i + 1:], nxt))
    return sorted(finals.items())


def tictactoe_dataset() -> Dataset:
    """27 one-hot features (square x {x, o, b}); class 1 means x won."""
    names = [one_hot_name(sq, v) for sq in TTT_SQUARES for v in ("x", "o", "b")]
    boards = tictactoe_boards()
    X = np.asarray([[float(b[i] == v) for i in range(9) for v in ("x", "o", "b")] for b, _ in boards])
    y = np.asarray([int(won) for _, won in boards])
    return Dataset(tuple(names), X, y, ("negative", "positive"))


def write_tictactoe_csv(path) -> None:
    """Write the endgame table in the 9-column categorical layout."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TTT_SQUARES) + ["class"])
        for board, won in tictactoe_boards():
            w.writerow(list(board) + ["positive" if won else "negative"])


# ---------------------------------------------------------------------------
# Fixed CNF of five definite clauses over v1..v10

DEFINITE_CLAUSES = ((3, 8, 7), (10, 3, 4), (1, 9, 10), (2, 6, 8), (4, 3, 5))  # (body, body, head), 1-based
DEFINITE_HEADS = tuple(f"v{c[2]}" for c in DEFINITE_CLAUSES)


def definite_ground_truth() -> list:
    """The five width-3 definite clauses as ClauseSpecs (0-based variables)."""
    return [ClauseSpec(((a - 1, True), (b - 1, True), (h - 1, False))) for a, b, h in DEFINITE_CLAUSES]


def definite_dataset() -> Dataset:
    """All 1024 assignments of v1..v10 labelled by the definite-clause CNF."""
    return gen_clause_dataset(10, definite_ground_truth(), "conjunction")
