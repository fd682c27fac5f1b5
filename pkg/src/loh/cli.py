"""Command-line interface: ``loh <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench import (
    CURVE_FIELDS,
    EXPERIMENTS,
    SELECT_FIELDS,
    SYNTHETIC_CONFIG,
    TICTACTOE_CONFIG,
    TICTACTOE_FIELDS,
    run_definite,
    run_selection,
    run_tictactoe,
    write_rows,
)
from .compiler import CONJUNCTIVE, DISJUNCTIVE, GODEL, PRODUCT, compile_program
from .data import (
    Dataset,
    definite_dataset,
    gen_clause_dataset,
    gen_random_clauses,
    load_csv,
    split,
    tictactoe_dataset,
    write_csv,
    write_tictactoe_csv,
)
from .engine import ParameterStore, default_threads, evaluate, threshold
from .errors import DataError, LohError, NumericError, ParseError, ProgramError, SemanticsError
from .extraction import extract, verify_lossless
from .formula import eval_bool, parse_formula, parse_program, print_formula, print_program
from .hypothesis import enumerate_space
from .templates import (
    FIXED_K,
    NEURON_STYLES,
    LayerSpec,
    clause_conjunction,
    definite_clause,
    layered_net,
    one_per_set,
    select_rules,
    width_k_clause,
)
from .training import (
    LOSSES,
    TrainConfig,
    confusion_matrix,
    macro_f1,
    model_outputs,
    predict_labels,
    score,
    targets_for,
    train,
)

log = logging.getLogger("loh")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_CONTEXTS = {"conj": CONJUNCTIVE, "disj": DISJUNCTIVE, CONJUNCTIVE: CONJUNCTIVE, DISJUNCTIVE: DISJUNCTIVE}


class UsageError(LohError):
    pass


# ---------------------------------------------------------------------------
# Helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, data) -> None:
    _atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _read_program(path):
    return parse_program(Path(path).read_text(encoding="utf-8"))


def _fractions(text: str):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise UsageError("--split needs three comma-separated fractions")
    return tuple(parts)


def _load_data(args) -> Dataset:
    return load_csv(args.data, args.label, bins=getattr(args, "bins", None),
                    categorical=tuple(getattr(args, "categorical", None) or ()),
                    positive=getattr(args, "positive", None))


def _manifest(args, argv, outputs: dict, inputs: Sequence, started: float, config: dict) -> dict:
    return {
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).exists()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "duration_seconds": round(time.time() - started, 3),
    }


def _fmt_float(x) -> str:
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------------------
# compile / enumerate


def cmd_compile(args) -> int:
    p = _read_program(args.program)
    g = compile_program(p, args.semantics, _CONTEXTS[args.root_context])
    _emit(json.dumps(g.to_json(), indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    p = _read_program(args.program)
    labels = [args.label] if args.label else p.output_labels
    lines = []
    for label in labels:
        for f in enumerate_space(p, label, limit=args.limit, dedup=args.dedup):
            lines.append(print_formula(f) if len(labels) == 1 else f"{label}: {print_formula(f)}")
    _emit("".join(line + "\n" for line in lines), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# template


def _layer(text: str) -> LayerSpec:
    # kind:width[:style[:k]]  e.g. conj:32:fixed-k:3  or  disj:1:subset
    parts = text.split(":")
    if len(parts) < 2:
        raise UsageError(f"bad layer {text!r}; expected kind:width[:style[:k]]")
    kind = _CONTEXTS.get(parts[0])
    if kind is None:
        raise UsageError(f"bad layer kind {parts[0]!r}")
    style = parts[2] if len(parts) > 2 else "subset"
    negation = style.endswith("+neg")
    style = style[: -len("+neg")] if negation else style
    if style not in NEURON_STYLES:
        raise UsageError(f"bad neuron style {style!r}")
    k = int(parts[3]) if len(parts) > 3 else None
    return LayerSpec(kind, int(parts[1]), style, k, negation and style == FIXED_K)


def _vars(args):
    if args.vars_from:
        with open(args.vars_from, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        return [h for h in header if h != args.label]
    if args.vars:
        return [v.strip() for v in args.vars.split(",") if v.strip()]
    if args.n_vars:
        return [f"v{i + 1}" for i in range(args.n_vars)]
    raise UsageError("give --vars, --n-vars or --vars-from")


def cmd_template(args) -> int:
    kind = args.kind
    if kind == "select":
        if not args.rule:
            raise UsageError("select needs at least one --rule")
        p = select_rules([parse_formula(r) for r in args.rule], args.connective)
    elif kind == "one-per-set":
        if not args.set:
            raise UsageError("one-per-set needs at least one --set")
        p = one_per_set([[parse_formula(r) for r in s.split(";")] for s in args.set], args.connective)
    elif kind == "width-k":
        names = _vars(args)
        p = clause_conjunction([width_k_clause(names, args.k, not args.no_negation)
                                for _ in range(args.clauses)])
    elif kind == "definite":
        names = _vars(args)
        heads = args.head or [None] * args.clauses
        p = clause_conjunction([definite_clause(names, head=h) for h in heads])
    elif kind == "layers":
        if not args.layer:
            raise UsageError("layers needs at least one --layer")
        layers = [_layer(t) for t in args.layer]
        p = layered_net(_vars(args), layers)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(kind)
    _emit(print_program(p), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# data


def cmd_data(args) -> int:
    if args.kind == "tictactoe":
        if args.encoded:
            write_csv(tictactoe_dataset(), args.output, "class")
        else:
            write_tictactoe_csv(args.output)
    elif args.kind == "definite":
        write_csv(definite_dataset(), args.output)
    elif args.kind == "clauses":
        rng = np.random.default_rng(args.seed)
        connective = CONJUNCTIVE if args.combine == "disjunction" else DISJUNCTIVE
        clauses = gen_random_clauses(args.n_vars, args.count, (args.min_width, args.max_width), connective, rng)
        write_csv(gen_clause_dataset(args.n_vars, clauses, args.combine), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / eval / extract


def _config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        beta=args.beta,
        temperature=args.temperature,
        temp_decay=args.temp_decay,
        seed=args.seed,
        loss=args.loss,
        multiclass=args.multiclass,
        convergence=args.convergence,
        monitor=args.monitor,
        noise_sharing=args.noise_sharing,
    )


def _checkpoint(source: str, g, params: ParameterStore, cfg: TrainConfig, data: Dataset, args, metrics) -> dict:
    return {
        "format": "loh-checkpoint/1",
        "loh_source": source,
        "semantics": g.semantics,
        "root_context": g.root_context,
        "variant_map": {str(k): v for k, v in g.variants.items()},
        "parameters": params.to_json(),
        "cfg": cfg.to_json(),
        "seed": cfg.seed,
        "split": list(args.split),
        "data": {"label_column": args.label, "feature_names": list(data.feature_names),
                 "class_names": list(data.class_names)},
        "metrics": metrics,
    }


def cmd_train(args) -> int:
    started = time.time()
    source = Path(args.program).read_text(encoding="utf-8")
    p = parse_program(source)
    data = _load_data(args)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = _config(args)
    g = compile_program(p, args.semantics, _CONTEXTS[args.root_context])
    metric_lines = ["run,seed,epoch,split,loss,f1\n"]
    summary, outputs = [], {}
    for r in range(args.runs):
        seed = args.seed + r
        cfg = replace(base, seed=seed)
        tr, va, te = split(data, args.split, seed)
        if len(tr) == 0:
            raise DataError("training split is empty")
        params = ParameterStore.init(g, seed, beta=cfg.beta, temperature=cfg.temperature)
        if args.fit_on == "train+val":
            tr = tr.concat(va)
        report = train(g, params, tr, cfg, val=va if len(va) else None, threads=args.threads)
        for h in report.history:
            metric_lines.append(f"{r},{seed},{h.epoch},train,{_fmt_float(h.train_loss)},{_fmt_float(h.train_f1)}\n")
            if h.val_loss is not None:
                metric_lines.append(f"{r},{seed},{h.epoch},val,{_fmt_float(h.val_loss)},{_fmt_float(h.val_f1)}\n")
        test_loss = test_f1 = None
        if len(te):
            test_loss, test_f1, _ = score(g, params, te, cfg, args.threads)
            metric_lines.append(f"{r},{seed},{report.history[-1].epoch},test,"
                                f"{_fmt_float(test_loss)},{_fmt_float(test_f1)}\n")
        metrics = {"train_f1": report.history[-1].train_f1, "val_f1": report.history[-1].val_f1,
                   "test_f1": test_f1, "test_loss": test_loss, "steps": report.steps,
                   "steps_to_convergence": report.steps_to_convergence}
        ck_path = out_dir / ("checkpoint.json" if args.runs == 1 else f"checkpoint_seed{seed}.json")
        _write_json(ck_path, _checkpoint(source, g, params, cfg, data, args, metrics))
        outputs[f"checkpoint_{r}"] = ck_path
        summary.append(test_f1)
        shown = "n/a" if test_f1 is None else f"{test_f1:.4f}"
        print(f"run {r} seed {seed}: train F1 {report.history[-1].train_f1:.4f}  test F1 {shown}")
    metrics_path = out_dir / "metrics.csv"
    _atomic_write(metrics_path, "".join(metric_lines))
    outputs["metrics"] = metrics_path
    scored = [s for s in summary if s is not None]
    if len(scored) > 1:
        print(f"test F1 over {len(scored)} runs: {np.mean(scored):.4f} +- {np.std(scored):.4f}")
    manifest = _manifest(args, args.argv, outputs, [args.program, args.data], started,
                         {**base.to_json(), "runs": args.runs, "split": list(args.split),
                          "fit_on": args.fit_on, "semantics": args.semantics, "root_context": args.root_context,
                          "threads": args.threads})
    _write_json(out_dir / "manifest.json", manifest)
    return EXIT_OK


def _load_checkpoint(path):
    ck = json.loads(Path(path).read_text(encoding="utf-8"))
    p = parse_program(ck["loh_source"])
    g = compile_program(p, ck["semantics"], ck.get("root_context", CONJUNCTIVE),
                        {int(k): v for k, v in ck.get("variant_map", {}).items()})
    params = ParameterStore.from_json(ck["parameters"], seed=ck.get("seed", 0))
    return ck, p, g, params


def _eval_data(args, ck) -> Dataset:
    info = ck["data"]
    data = load_csv(args.data, args.label or info["label_column"], bins=args.bins)
    data = data.align(info["feature_names"], info["class_names"])
    if args.part != "all":
        tr, va, te = split(data, ck.get("split", (0.7, 0.1, 0.2)), ck.get("seed", 0))
        data = {"train": tr, "val": va, "test": te}[args.part]
    if len(data) == 0:
        raise DataError("evaluation set is empty")
    return data


def cmd_eval(args) -> int:
    ck, p, g, params = _load_checkpoint(args.checkpoint)
    data = _eval_data(args, ck)
    cfg = TrainConfig(**{k: v for k, v in ck["cfg"].items()})
    X = data.columns(g.input_names)
    out = model_outputs(g, params, X, cfg.multiclass, args.threads)
    loss, _ = LOSSES[cfg.loss](out, targets_for(data.y, data.n_classes, out.shape[1]))
    pred = predict_labels(out)
    f1 = macro_f1(pred, data.y, data.n_classes)
    cm = confusion_matrix(pred, data.y, data.n_classes)
    print(f"continuous: loss {loss:.6f}  macro-F1 {f1:.6f}")
    print("confusion matrix (rows: true, cols: predicted; classes " + ", ".join(data.class_names) + ")")
    for row in cm:
        print("  " + " ".join(f"{v:6d}" for v in row))
    if args.discrete:
        rules = extract(g, params, p)
        if g.semantics != GODEL:
            print("warning: product semantics; rounding the continuous model need not match the extracted "
                  "rules (e.g. w=(0.6, 0.4), a=0.7, b=0 gives 0.42 against a true discrete value)",
                  file=sys.stderr)
        B = X > 0.5
        cols = [np.broadcast_to(eval_bool(f, {n: B[:, i] for i, n in enumerate(g.input_names)}), (len(data),))
                for f in rules.formulas.values()]
        disc = np.stack(cols, axis=1).astype(np.float64)
        dpred = predict_labels(disc)
        df1 = macro_f1(dpred, data.y, data.n_classes)
        print(f"discrete:   macro-F1 {df1:.6f}")
        if g.semantics == GODEL:
            rounded = threshold(evaluate(g, params, np.where(X > 0.5, 1.0, 0.0), args.threads))
            mismatches = int(np.count_nonzero(rounded != (disc > 0.5)))
            if mismatches:
                print(f"error: discrete rules disagree with the rounded model on {mismatches} outputs",
                      file=sys.stderr)
                return EXIT_NUMERIC
    return EXIT_OK


def cmd_extract(args) -> int:
    ck, p, g, params = _load_checkpoint(args.checkpoint)
    rules = extract(g, params, p, simplify=args.simplify)
    _emit(rules.to_text(), args.output)
    if args.verify:
        data = None
        if args.data:
            info = ck["data"]
            data = load_csv(args.data, info["label_column"]).align(info["feature_names"], info["class_names"])
        raw = extract(g, params, p) if args.simplify else rules
        report = verify_lossless(g, params, raw, data)
        text = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
        if args.verify == "-":
            sys.stderr.write(text)
        else:
            _atomic_write(args.verify, text)
        if report.mismatches:
            return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    started = time.time()
    if args.experiment == "tictactoe":
        cfg = replace(TICTACTOE_CONFIG, max_epochs=args.epochs if args.epochs is not None else TICTACTOE_CONFIG.max_epochs)
        rows = run_tictactoe(range(args.seed, args.seed + args.runs), cfg, threads=args.threads)
        fields = TICTACTOE_FIELDS
    elif args.experiment == "definite":
        cfg = replace(SYNTHETIC_CONFIG, max_epochs=args.epochs if args.epochs is not None else 64)
        rows = run_definite(args.template or None, runs=args.runs, seed=args.seed, cfg=cfg)
        fields = CURVE_FIELDS
    else:
        cfg = replace(SYNTHETIC_CONFIG, max_epochs=args.epochs if args.epochs is not None else 64)
        comps = (CONJUNCTIVE, DISJUNCTIVE) if args.compilation == "both" else (_CONTEXTS[args.compilation],)
        rows = run_selection(args.experiment, comps, runs=args.runs, seed=args.seed, n_vars=args.n_vars,
                             n_truth=args.truth, n_extra=args.extra,
                             width_range=(args.min_width, args.max_width), cfg=cfg)
        fields = SELECT_FIELDS
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    write_rows(rows, tmp, fields)
    os.replace(tmp, out)
    if args.experiment == "tictactoe":
        f1 = [r["test_f1"] for r in rows]
        print(f"test F1 over {len(f1)} seeds: {np.mean(f1):.4f} +- {np.std(f1):.4f}")
    elif args.experiment != "definite":
        for comp in sorted({r["compilation"] for r in rows}):
            sel = [r for r in rows if r["compilation"] == comp]
            print(f"{comp}: median steps {np.median([r['steps'] for r in sel]):.1f}  "
                  f"mean test F1 {np.mean([r['test_f1'] for r in sel]):.4f}")
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    _write_json(manifest_path, _manifest(args, args.argv, {"metrics": out}, [], started,
                                         {**cfg.to_json(), "experiment": args.experiment, "runs": args.runs}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_threads(sp):
    sp.add_argument("--threads", type=int, default=None,
                    help="evaluation threads (default: $LOH_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="loh", description="Learn propositional rules from LoH templates.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("compile", help="compile a program and print the graph as JSON")
    sp.add_argument("program")
    sp.add_argument("--semantics", choices=(GODEL, PRODUCT), default=GODEL)
    sp.add_argument("--root-context", choices=tuple(_CONTEXTS), default="conj")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("enumerate", help="list the hypothesis space of an output")
    sp.add_argument("program")
    sp.add_argument("--label", help="output label (default: all outputs)")
    sp.add_argument("--limit", type=int, default=1_000_000)
    sp.add_argument("--dedup", action="store_true")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("template", help="write a program built from a template")
    sp.add_argument("--kind", required=True, choices=("select", "one-per-set", "width-k", "definite", "layers"))
    sp.add_argument("--rule", action="append", help="candidate rule (select)")
    sp.add_argument("--set", action="append", help="';'-separated rule set (one-per-set)")
    sp.add_argument("--connective", choices=("conjunction", "disjunction"), default="conjunction")
    sp.add_argument("--vars", help="comma-separated variable names")
    sp.add_argument("--n-vars", type=int, help="use v1..vn")
    sp.add_argument("--vars-from", help="take variable names from a CSV header")
    sp.add_argument("--label", default="class", help="label column to skip with --vars-from")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--no-negation", action="store_true")
    sp.add_argument("--clauses", type=int, default=1)
    sp.add_argument("--head", action="append", help="fixed clause head (definite; repeat per clause)")
    sp.add_argument("--layer", action="append", help="kind:width[:style[:k]], e.g. conj:32:fixed-k:3")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_template)

    sp = sub.add_parser("data", help="write a built-in dataset as CSV")
    sp.add_argument("kind", choices=("tictactoe", "definite", "clauses"))
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--encoded", action="store_true", help="tictactoe: write the 27 one-hot columns")
    sp.add_argument("--n-vars", type=int, default=10)
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--min-width", type=int, default=2)
    sp.add_argument("--max-width", type=int, default=5)
    sp.add_argument("--combine", choices=("conjunction", "disjunction"), default="conjunction")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_data)

    sp = sub.add_parser("train", help="train a program on a CSV dataset")
    sp.add_argument("program")
    sp.add_argument("--data", required=True)
    sp.add_argument("--label", required=True, help="label column")
    sp.add_argument("--positive", help="class predicted by a single output")
    sp.add_argument("--categorical", action="append", help="force one-hot encoding of a column")
    sp.add_argument("--bins", type=int, help="equal-frequency bins for numeric columns")
    sp.add_argument("--semantics", choices=(GODEL, PRODUCT), default=GODEL)
    sp.add_argument("--root-context", choices=tuple(_CONTEXTS), default="conj")
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--batch-size", type=int, default=128)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--temperature", type=float, default=1.0)
    sp.add_argument("--temp-decay", type=float, default=1.0)
    sp.add_argument("--loss", choices=tuple(LOSSES), default="bce")
    sp.add_argument("--multiclass", choices=("independent", "exclusive-top2"), default="independent")
    sp.add_argument("--convergence", choices=("epochs-only", "accuracy-plateau"), default="epochs-only")
    sp.add_argument("--monitor", choices=("train", "val"), default="train")
    sp.add_argument("--noise-sharing", choices=("batch", "sample"), default="batch",
                    help="one Gumbel draw per step or per example")
    sp.add_argument("--fit-on", choices=("train", "train+val"), default="train",
                    help="fit the final model on the training split or on train and validation")
    sp.add_argument("--split", type=_fractions, default=(0.7, 0.1, 0.2), help="train,val,test fractions")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--runs", type=int, default=1)
    sp.add_argument("--out-dir", default="run")
    _add_threads(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--label")
    sp.add_argument("--bins", type=int)
    sp.add_argument("--part", choices=("all", "train", "val", "test"), default="all",
                    help="re-create the checkpoint's split and evaluate one part")
    sp.add_argument("--discrete", action="store_true", help="also evaluate the extracted rules")
    _add_threads(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("extract", help="write the rules selected by a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--simplify", action="store_true")
    sp.add_argument("--verify", nargs="?", const="-", help="write a verification summary (JSON)")
    sp.add_argument("--data", help="also verify on the rows of this CSV")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("bench", help="run a synthetic experiment grid")
    sp.add_argument("experiment", choices=EXPERIMENTS)
    sp.add_argument("--compilation", choices=("both", "conj", "disj"), default="both")
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, help="epoch cap (default: 64, or 200 for tictactoe)")
    sp.add_argument("--n-vars", type=int, default=10)
    sp.add_argument("--truth", type=int, default=5, help="ground-truth clauses")
    sp.add_argument("--extra", type=int, default=5, help="additional clauses (per set for one-per-set)")
    sp.add_argument("--min-width", type=int, default=2)
    sp.add_argument("--max-width", type=int, default=5)
    sp.add_argument("--template", action="append", help="definite: restrict to these templates")
    sp.add_argument("-o", "--output", required=True)
    _add_threads(sp)
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, ParseError, ProgramError, SemanticsError, ValueError) as exc:
        print(f"loh {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, KeyError) as exc:
        print(f"loh {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"loh {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LohError as exc:
        print(f"loh {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
