"""Synthetic experiment grids: rule selection and clause templates."""
from __future__ import annotations

import csv
from dataclasses import replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .compiler import CONJUNCTIVE, DISJUNCTIVE, compile_program
from .data import (
    DEFINITE_HEADS,
    definite_dataset,
    definite_ground_truth,
    gen_clause_dataset,
    gen_random_clauses,
    split,
    tictactoe_dataset,
    var_names,
)
from .engine import ParameterStore
from .extraction import extract
from .formula import Program, eval_bool
from .templates import DEFINITE_TEMPLATES, definite_templates, dnf_net, one_per_set, select_rules
from .training import TrainConfig, macro_f1, predict_labels, score, train

EXPERIMENTS = ("select-cnf", "select-dnf", "one-per-set", "definite", "tictactoe")
COMPILATIONS = (CONJUNCTIVE, DISJUNCTIVE)

# fixed hyperparameters of the synthetic studies
SYNTHETIC_CONFIG = TrainConfig(
    learning_rate=0.15,
    batch_size=128,
    max_epochs=64,
    beta=1.0,
    temperature=1.0,
    convergence="accuracy-plateau",
)
SYNTHETIC_SPLIT = (0.75, 0.0, 0.25)

# tic-tac-toe endgame recipe: fit on train+val, report on the held-out test part
TICTACTOE_CONFIG = TrainConfig(
    learning_rate=0.075,
    batch_size=128,
    max_epochs=200,
    beta=1.0,
    temperature=1.0,
    noise_sharing="sample",
)
TICTACTOE_SPLIT = (0.7, 0.1, 0.2)
TICTACTOE_TERMS = 32
TICTACTOE_K = 3
TICTACTOE_FIELDS = ("seed", "train_f1", "test_f1", "discrete_test_f1")

SELECT_FIELDS = ("experiment", "compilation", "run", "seed", "n_vars", "n_truth", "n_extra",
                 "positive_rate", "test_f1", "train_accuracy", "steps", "converged")
CURVE_FIELDS = ("experiment", "template", "run", "seed", "epoch", "train_loss", "train_f1", "test_f1")


def _all_variants(p: Program, variant: str) -> dict:
    return {cid: variant for cid in p.choices()}


def _fit(p: Program, compilation: Optional[str], data, seed: int, cfg: TrainConfig):
    g = compile_program(p, variants=_all_variants(p, compilation) if compilation else None)
    params = ParameterStore.init(g, seed, beta=cfg.beta, temperature=cfg.temperature)
    tr, _, te = split(data, SYNTHETIC_SPLIT, seed)
    report = train(g, params, tr, replace(cfg, seed=seed), val=te)
    return g, params, tr, te, report


def selection_task(kind: str, n_vars: int, n_truth: int, n_extra: int, rng: np.random.Generator,
                   width_range=(2, 5)):
    """Ground truth, candidate program and dataset for one selection run.

    ``select-cnf``: disjunctive clauses, conjunction of ``[r, true]``.
    ``select-dnf``: conjunctive clauses, disjunction of ``[c, false]``.
    ``one-per-set``: each true clause shuffled into a set with ``n_extra`` decoys.
    """
    names = var_names(n_vars)
    clause_kind = CONJUNCTIVE if kind == "select-dnf" else DISJUNCTIVE
    truth = gen_random_clauses(n_vars, n_truth, width_range, clause_kind, rng)
    combine = "disjunction" if kind == "select-dnf" else "conjunction"
    data = gen_clause_dataset(n_vars, truth, combine)
    if kind == "one-per-set":
        sets = []
        for c in truth:
            decoys = gen_random_clauses(n_vars, n_extra, width_range, clause_kind, rng)
            members = [c] + decoys
            order = rng.permutation(len(members))
            sets.append([members[i].to_formula(names) for i in order])
        p = one_per_set(sets, hint=None)
    else:
        extra = gen_random_clauses(n_vars, n_extra, width_range, clause_kind, rng)
        pool = truth + extra
        order = rng.permutation(len(pool))
        rules = [pool[i].to_formula(names) for i in order]
        p = select_rules(rules, combine, hint=None)
    return truth, p, data


def run_selection(kind: str, compilations: Sequence[str] = COMPILATIONS, runs: int = 10, seed: int = 0,
                  n_vars: int = 10, n_truth: int = 5, n_extra: int = 5, width_range=(2, 5),
                  cfg: TrainConfig = SYNTHETIC_CONFIG) -> list:
    """One row per (compilation, run). Run ``r`` uses the same task for every compilation."""
    if kind not in ("select-cnf", "select-dnf", "one-per-set"):
        raise ValueError(f"unknown selection experiment {kind!r}")
    rows = []
    for r in range(runs):
        run_seed = seed + r
        _, p, data = selection_task(kind, n_vars, n_truth, n_extra, np.random.default_rng([run_seed, 7]),
                                    width_range)
        for comp in compilations:
            g, params, tr, te, report = _fit(p, comp, data, run_seed, cfg)
            _, f1, _ = score(g, params, te, cfg)
            _, _, acc = score(g, params, tr, cfg)
            rows.append(dict(
                experiment=kind, compilation=comp, run=r, seed=run_seed, n_vars=n_vars,
                n_truth=n_truth, n_extra=n_extra, positive_rate=float(np.mean(data.y)),
                test_f1=f1, train_accuracy=acc, steps=report.steps_to_convergence,
                converged=report.converged,
            ))
    return rows


def run_definite(templates: Optional[Iterable[str]] = None, runs: int = 20, seed: int = 0,
                 cfg: TrainConfig = SYNTHETIC_CONFIG) -> list:
    """Per-epoch learning curves for the definite-clause templates."""
    names = var_names(10)
    first = definite_ground_truth()[0].to_formula(names)
    programs = definite_templates(names, DEFINITE_HEADS, first)
    templates = list(templates) if templates is not None else list(DEFINITE_TEMPLATES)
    data = definite_dataset()
    rows = []
    for name in templates:
        p = programs[name]
        for r in range(runs):
            run_seed = seed + r
            _, _, _, _, report = _fit(p, None, data, run_seed, cfg)
            for h in report.history:
                rows.append(dict(
                    experiment="definite", template=name, run=r, seed=run_seed, epoch=h.epoch,
                    train_loss=h.train_loss, train_f1=h.train_f1, test_f1=h.val_f1,
                ))
    return rows


def run_tictactoe(seeds: Iterable[int] = range(5), cfg: TrainConfig = TICTACTOE_CONFIG,
                  threads: Optional[int] = None) -> list:
    """Train the 32-term DNF net per seed; test F1 of the model and of its extracted rules."""
    data = tictactoe_dataset()
    p = dnf_net(data.feature_names, TICTACTOE_TERMS, TICTACTOE_K)
    g = compile_program(p)
    rows = []
    for seed in seeds:
        tr, va, te = split(data, TICTACTOE_SPLIT, seed)
        fit = tr.concat(va)
        params = ParameterStore.init(g, seed, beta=cfg.beta, temperature=cfg.temperature)
        run_cfg = replace(cfg, seed=seed)
        report = train(g, params, fit, run_cfg, threads=threads)
        _, f1, _ = score(g, params, te, run_cfg, threads)
        rules = extract(g, params, p)
        B = te.columns(g.input_names) > 0.5
        env = {n: B[:, i] for i, n in enumerate(g.input_names)}
        disc = np.stack([np.broadcast_to(eval_bool(f, env), (len(te),)) for f in rules.formulas.values()], axis=1)
        df1 = macro_f1(predict_labels(disc.astype(np.float64)), te.y, te.n_classes)
        rows.append(dict(seed=seed, train_f1=report.history[-1].train_f1, test_f1=f1, discrete_test_f1=df1,
                         rules=rules))
    return rows


def run_experiment(kind: str, **kw) -> list:
    if kind == "definite":
        return run_definite(**kw)
    if kind == "tictactoe":
        return run_tictactoe(**kw)
    return run_selection(kind, **kw)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_rows(rows: Sequence[dict], path, fields: Optional[Sequence[str]] = None) -> None:
    fields = list(fields or (rows[0].keys() if rows else ()))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in fields])


def median_steps(rows: Sequence[dict], compilation: str) -> float:
    return float(np.median([r["steps"] for r in rows if r["compilation"] == compilation]))

