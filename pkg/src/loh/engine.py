"""Parameters, Gödel-trick gate weights, batched forward and reverse-mode backward.

Nodes of a compiled graph are grouped by (depth, kind, arity); each group is
evaluated with one vectorised numpy operation over the whole batch. A choice
node together with its gate and term nodes is evaluated as one fused step,
so gate and term values are never stored. Under Gödel semantics the backward
pass routes each node's gradient to the child that attained the min/max
(lowest index on ties), recovered from the stored values.
"""
from __future__ import annotations

import copy
import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .compiler import COGATE, CONST, GATE, GODEL, INPUT, MAX, MIN, NEG, PRODUCT, CompiledGraph
from .errors import DataError, NumericError, StaleTapeError

_TINY = np.finfo(np.float64).tiny


def sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def gumbel_from_uniform(u, beta: float = 1.0):
    """Inverse CDF of Gumbel(0, beta)."""
    return -beta * np.log(-np.log(u))


def gumbel_noise(rng: np.random.Generator, beta: float, size):
    return gumbel_from_uniform(rng.uniform(_TINY, 1.0, size), beta)


def godel_weights(zp: np.ndarray, temperature: float):
    """Recenter on the mean of the two largest logits, then sigmoid(./T).

    Works on the last axis, so ``zp`` may hold many draws at once. Returns the
    weights and the indices of the two largest entries (lowest index first
    among equal values).
    """
    zp = np.asarray(zp, dtype=np.float64)
    top = np.argsort(-zp, axis=-1, kind="stable")[..., :2]
    zbar = np.take_along_axis(zp, top, axis=-1).mean(axis=-1, keepdims=True)
    return sigmoid((zp - zbar) / temperature), top


@dataclass
class WeightBlock:
    z: np.ndarray
    beta: float = 1.0
    temperature: float = 1.0
    trainable: bool = True

    @property
    def arity(self) -> int:
        return int(np.size(self.z))


@dataclass
class ReparamCache:
    w: np.ndarray
    top2: np.ndarray
    noise: np.ndarray
    temperature: float


def reparameterize(b: WeightBlock, noise: bool = False, rng: Optional[np.random.Generator] = None):
    z = np.asarray(b.z, dtype=np.float64)
    if z.size < 2:
        raise ValueError("reparameterize needs at least two logits")
    if b.temperature <= 0:
        raise ValueError("temperature must be positive")
    if not np.all(np.isfinite(z)):
        raise NumericError(f"non-finite logits {z}")
    if noise and b.beta > 0:
        if rng is None:
            raise ValueError("noise requested without a random generator")
        eps = gumbel_noise(rng, b.beta, z.size)
    else:
        eps = np.zeros_like(z)
    w, top = godel_weights(z + eps, b.temperature)
    return w, ReparamCache(w, top, eps, b.temperature)


def reparameterize_backward(cache: ReparamCache, grad_w: np.ndarray) -> np.ndarray:
    """Map dL/dw to dL/dz; the noise is a constant."""
    w = cache.w
    gu = np.asarray(grad_w, dtype=np.float64) * w * (1.0 - w) / cache.temperature
    gz = gu.copy()
    gz[cache.top2] -= 0.5 * gu.sum()
    return gz


@dataclass
class ChoiceSamples:
    frequencies: np.ndarray
    noise: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    selected: Optional[np.ndarray] = None


def sample_choice_frequencies(
    b: WeightBlock, trials: int, rng: np.random.Generator, return_draws: bool = False
) -> ChoiceSamples:
    """Empirical distribution of the branch whose noisy gate exceeds 0.5."""
    if b.beta <= 0:
        raise ValueError("beta must be positive")
    z = np.asarray(b.z, dtype=np.float64)
    eps = gumbel_noise(rng, b.beta, (trials, z.size))
    w, _ = godel_weights(z + eps, b.temperature)
    selected = np.argmax(w > 0.5, axis=1)
    freq = np.bincount(selected, minlength=z.size) / trials
    if return_draws:
        return ChoiceSamples(freq, eps, w, selected)
    return ChoiceSamples(freq)


@dataclass
class ParameterStore:
    """Logits for every choice node of a graph plus the noise generator."""

    z: dict
    beta: float = 1.0
    temperature: float = 1.0
    trainable: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    version: int = 0

    @classmethod
    def init(cls, g: CompiledGraph, seed: int = 0, beta: float = 1.0, temperature: float = 1.0,
             scale: float = 0.1) -> "ParameterStore":
        rng = np.random.default_rng(seed)
        z, trainable = {}, {}
        for b in g.blocks:
            if b.arity >= 2:
                z[b.choice_id] = rng.uniform(-scale, scale, b.arity)
                trainable[b.choice_id] = True
            else:
                z[b.choice_id] = np.zeros(1)
                trainable[b.choice_id] = False
        return cls(z=z, beta=beta, temperature=temperature, trainable=trainable, rng=rng)

    def block(self, cid: int) -> WeightBlock:
        o = self.overrides.get(cid, {})
        return WeightBlock(
            self.z[cid],
            beta=o.get("beta", self.beta),
            temperature=o.get("temperature", self.temperature),
            trainable=self.trainable.get(cid, True) and np.size(self.z[cid]) >= 2,
        )

    @property
    def trainable_ids(self) -> list:
        return [cid for cid in sorted(self.z) if self.block(cid).trainable]

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            z={k: v.copy() for k, v in self.z.items()},
            beta=self.beta,
            temperature=self.temperature,
            trainable=dict(self.trainable),
            overrides={k: dict(v) for k, v in self.overrides.items()},
            rng=copy.deepcopy(self.rng),
            version=self.version,
        )

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "temperature": self.temperature,
            "blocks": {
                str(cid): {
                    "z": [float(v) for v in self.z[cid]],
                    "trainable": bool(self.trainable.get(cid, True)),
                    **self.overrides.get(cid, {}),
                }
                for cid in sorted(self.z)
            },
        }

    @classmethod
    def from_json(cls, data: Mapping, seed: int = 0) -> "ParameterStore":
        z, trainable, overrides = {}, {}, {}
        for key, entry in data["blocks"].items():
            cid = int(key)
            z[cid] = np.asarray(entry["z"], dtype=np.float64)
            trainable[cid] = bool(entry.get("trainable", True))
            extra = {k: entry[k] for k in ("beta", "temperature") if k in entry}
            if extra:
                overrides[cid] = extra
        return cls(z=z, beta=float(data["beta"]), temperature=float(data["temperature"]),
                   trainable=trainable, overrides=overrides, rng=np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Execution plan


CHOICE_DISJ, CHOICE_CONJ = "choice-disj", "choice-conj"


@dataclass
class _Step:
    kind: str
    ids: np.ndarray
    children: np.ndarray  # (m, arity); branch nodes for fused choices
    wpos: Optional[np.ndarray] = None  # (m, arity) weight positions, fused choices only


@dataclass
class _Plan:
    n_nodes: int
    input_ids: np.ndarray
    const_ids: np.ndarray
    const_vals: np.ndarray
    gate_ids: np.ndarray
    gate_pos: np.ndarray
    cogate_ids: np.ndarray
    cogate_pos: np.ndarray
    block_ids: list
    offsets: dict
    n_weights: int
    steps: list
    output_ids: np.ndarray


_PLANS: "weakref.WeakKeyDictionary[CompiledGraph, dict]" = weakref.WeakKeyDictionary()


# evaluate choice nodes as fused steps; switching it off keeps every node (used in tests)
FUSE_CHOICES = True


def _build_plan(g: CompiledGraph, fuse: bool = True) -> _Plan:
    offsets, pos = {}, 0
    block_ids = []
    for b in g.blocks:
        if b.arity >= 2:
            offsets[b.choice_id] = (pos, pos + b.arity)
            block_ids.append(b.choice_id)
            pos += b.arity
    fused, hidden = {}, set()
    for b in g.blocks:
        if b.arity < 2 or not fuse:
            continue
        top = g.nodes[b.node]
        inner = MIN if top.kind == MAX else MAX
        gate_kind = GATE if top.kind == MAX else COGATE
        terms = [g.nodes[t] for t in top.children]
        if len(terms) == b.arity and all(
            t.kind == inner and t.children == (gt, br) and g.nodes[gt].kind == gate_kind
            for t, gt, br in zip(terms, b.gates, b.branches)
        ):
            fused[b.node] = b
            hidden.update(top.children)
            hidden.update(b.gates)
    name_to_node = {}
    consts, gates, cogates = [], [], []
    level = np.zeros(len(g.nodes), dtype=np.int64)
    groups: dict = {}
    for i, n in enumerate(g.nodes):
        if i in hidden:
            continue
        if i in fused:
            b = fused[i]
            level[i] = 1 + max(level[c] for c in b.branches)
            kind = CHOICE_DISJ if n.kind == MAX else CHOICE_CONJ
            groups.setdefault((int(level[i]), kind, b.arity), []).append(i)
        elif n.kind == INPUT:
            name_to_node[n.name] = i
        elif n.kind == CONST:
            consts.append((i, n.value))
        elif n.kind == GATE:
            gates.append((i, offsets[n.block][0] + n.slot))
        elif n.kind == COGATE:
            cogates.append((i, offsets[n.block][0] + n.slot))
        else:
            level[i] = 1 + max(level[c] for c in n.children)
            groups.setdefault((int(level[i]), n.kind, len(n.children)), []).append(i)
    steps = []
    for key in sorted(groups):
        ids = np.asarray(groups[key], dtype=np.int64)
        if key[1] in (CHOICE_DISJ, CHOICE_CONJ):
            kids = np.asarray([fused[i].branches for i in ids], dtype=np.int64)
            wpos = np.asarray([range(*offsets[fused[i].choice_id]) for i in ids], dtype=np.int64)
            steps.append(_Step(key[1], ids, kids, wpos))
        else:
            kids = np.asarray([g.nodes[i].children for i in ids], dtype=np.int64)
            steps.append(_Step(key[1], ids, kids))

    def arr(pairs, k):
        return np.asarray([p[k] for p in pairs], dtype=np.int64 if k == 0 else np.float64)

    return _Plan(
        n_nodes=len(g.nodes),
        input_ids=np.asarray([name_to_node[name] for name in g.input_names], dtype=np.int64),
        const_ids=arr(consts, 0),
        const_vals=arr(consts, 1),
        gate_ids=arr(gates, 0),
        gate_pos=np.asarray([p[1] for p in gates], dtype=np.int64),
        cogate_ids=arr(cogates, 0),
        cogate_pos=np.asarray([p[1] for p in cogates], dtype=np.int64),
        block_ids=block_ids,
        offsets=offsets,
        n_weights=pos,
        steps=steps,
        output_ids=np.asarray(g.output_ids, dtype=np.int64),
    )


def _plan(g: CompiledGraph) -> _Plan:
    cache = _PLANS.setdefault(g, {})
    plan = cache.get(FUSE_CHOICES)
    if plan is None:
        plan = cache[FUSE_CHOICES] = _build_plan(g, FUSE_CHOICES)
    return plan


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class Tape:
    values: np.ndarray  # (batch, node)
    caches: dict
    weights: np.ndarray
    graph: CompiledGraph
    semantics: str
    version: int
    weight_grads: Optional[dict] = None


def _check_batch(g: CompiledGraph, batch) -> np.ndarray:
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(g.input_names):
        raise DataError(f"batch shape {X.shape} does not match {len(g.input_names)} graph inputs")
    if X.size and (np.isnan(X).any() or X.min() < 0.0 or X.max() > 1.0):
        raise DataError("inputs must lie in [0, 1]")
    return X


@dataclass
class _GroupCache:
    """Reparameterisation state of blocks sharing arity, beta and temperature."""

    cids: list
    pos: np.ndarray  # (k, arity) positions in the flat weight vector
    w: np.ndarray  # (rows, k, arity)
    top2: np.ndarray  # (rows, k, 2)
    temperature: float


def _gate_weights(plan: _Plan, params: ParameterStore, noise: bool, weights: Optional[Mapping], rows: int):
    """Flat gate weights of shape (rows, n_weights); ``rows`` is 1 or the batch size."""
    w = np.empty((rows, plan.n_weights))
    caches = {}
    if weights is not None:
        for cid in plan.block_ids:
            s, e = plan.offsets[cid]
            w[:, s:e] = np.asarray(weights[cid], dtype=np.float64)
        return w, caches
    groups: dict = {}
    for cid in plan.block_ids:
        blk = params.block(cid)
        if blk.temperature <= 0:
            raise ValueError("temperature must be positive")
        groups.setdefault((blk.arity, blk.beta, blk.temperature, blk.trainable), []).append(cid)
    for key, cids in groups.items():
        _, beta, temperature, trainable = key
        Z = np.stack([params.z[c] for c in cids]).astype(np.float64)
        if not np.all(np.isfinite(Z)):
            raise NumericError("non-finite logits")
        if noise and trainable and beta > 0:
            Z = Z + gumbel_noise(params.rng, beta, (rows,) + Z.shape)
        else:
            Z = np.broadcast_to(Z, (rows,) + Z.shape)
        W, top = godel_weights(Z, temperature)
        pos = np.asarray([np.arange(*plan.offsets[c]) for c in cids], dtype=np.int64)
        w[:, pos] = W
        caches[key] = _GroupCache(cids, pos, W, top, temperature)
    return w, caches


def _prob_sum(C: np.ndarray) -> np.ndarray:
    """Probabilistic sum over the last axis, folded as x + y - xy."""
    out = C[..., 0].copy()
    for k in range(1, C.shape[-1]):
        out += C[..., k] - out * C[..., k]
    return out


def forward(
    g: CompiledGraph,
    params: Optional[ParameterStore],
    batch,
    noise: bool = False,
    weights: Optional[Mapping[int, np.ndarray]] = None,
    per_sample_noise: bool = False,
):
    """Evaluate all outputs on a batch of fuzzy inputs.

    With ``noise`` on, one Gumbel draw per block is shared by the whole
    batch, or drawn independently for every row with ``per_sample_noise``.
    ``weights`` (ChoiceId -> gate vector) bypasses the logits.
    Returns ``(outputs, tape)`` with outputs of shape (batch, n_outputs).
    """
    X = _check_batch(g, batch)
    plan = _plan(g)
    B = X.shape[0]
    rows = B if (noise and per_sample_noise and weights is None) else 1
    w, caches = _gate_weights(plan, params, noise, weights, rows)
    V = np.empty((B, plan.n_nodes))
    V[:, plan.input_ids] = X
    V[:, plan.const_ids] = plan.const_vals
    V[:, plan.gate_ids] = w[:, plan.gate_pos]
    V[:, plan.cogate_ids] = 1.0 - w[:, plan.cogate_pos]
    godel = g.semantics == GODEL
    for step in plan.steps:
        C = V[:, step.children]
        if step.kind == NEG:
            V[:, step.ids] = 1.0 - C[:, :, 0]
        elif step.kind == CHOICE_DISJ:
            W = w[:, step.wpos]
            if godel:
                V[:, step.ids] = np.minimum(W, C).max(axis=2)
            else:
                V[:, step.ids] = _prob_sum(W * C)
        elif step.kind == CHOICE_CONJ:
            W = w[:, step.wpos]
            if godel:
                V[:, step.ids] = np.maximum(1.0 - W, C).min(axis=2)
            else:
                V[:, step.ids] = (1.0 - W * (1.0 - C)).prod(axis=2)
        elif godel:
            V[:, step.ids] = C.min(axis=2) if step.kind == MIN else C.max(axis=2)
        elif step.kind == MIN:
            V[:, step.ids] = C.prod(axis=2)
        else:
            V[:, step.ids] = _prob_sum(C)
    tape = Tape(V, caches, w, g, g.semantics, params.version if params is not None else -1)
    return V[:, plan.output_ids].copy(), tape


def _leave_one_out(C: np.ndarray) -> np.ndarray:
    pre = np.ones_like(C)
    pre[..., 1:] = np.cumprod(C[..., :-1], axis=-1)
    suf = np.ones_like(C)
    suf[..., :-1] = np.cumprod(C[..., :0:-1], axis=-1)[..., ::-1]
    return pre * suf


def _choice_backward(step: _Step, V: np.ndarray, w: np.ndarray, gout: np.ndarray, godel: bool,
                     wg: np.ndarray):
    """Gradient of a fused choice step.

    Adds the weight gradient into ``wg`` (rows, n_weights) and returns the
    branch targets (node ids, without the row offset) and their contributions.
    """
    C = V[:, step.children]
    W = w[:, step.wpos]
    R, nw = wg.shape
    disj = step.kind == CHOICE_DISJ
    if godel:
        m = step.ids.size
        cols = np.arange(m)[None, :]
        Wb = np.broadcast_to(W, C.shape)
        if disj:
            j = np.minimum(W, C).argmax(axis=2)
            wsel = np.take_along_axis(Wb, j[..., None], axis=2)[..., 0]
            xsel = np.take_along_axis(C, j[..., None], axis=2)[..., 0]
            to_gate = wsel <= xsel  # min(gate, branch) picks the gate on ties
            sign = 1.0
        else:
            cg = 1.0 - Wb
            j = np.maximum(cg, C).argmin(axis=2)
            cgsel = np.take_along_axis(cg, j[..., None], axis=2)[..., 0]
            xsel = np.take_along_axis(C, j[..., None], axis=2)[..., 0]
            to_gate = cgsel >= xsel  # max(cogate, branch) picks the cogate on ties
            sign = -1.0
        flat = step.wpos[cols, j]
        if R > 1:
            flat = flat + (np.arange(R, dtype=np.int64) * nw)[:, None]
        wg += sign * np.bincount(flat[to_gate], weights=gout[to_gate], minlength=wg.size).reshape(R, nw)
        return step.children[cols, j], np.where(to_gate, 0.0, gout)
    if disj:
        loo = _leave_one_out(1.0 - W * C)
        dw, dx = loo * C, loo * W
    else:
        loo = _leave_one_out(1.0 - W * (1.0 - C))
        dw, dx = -loo * (1.0 - C), loo * W
    g3 = gout[:, :, None]
    if R > 1:
        np.add.at(wg, (np.arange(R)[:, None, None], step.wpos[None]), g3 * dw)
    else:
        np.add.at(wg[0], step.wpos, (g3 * dw).sum(axis=0))
    return np.broadcast_to(step.children[None], C.shape), g3 * dx


def backward(tape: Tape, g: CompiledGraph, params: Optional[ParameterStore], output_grads,
             return_inputs: bool = False):
    """Gradients of a scalar loss with respect to every trainable logit vector.

    ``output_grads`` is dL/d(outputs) with the shape returned by ``forward``.
    When the forward pass used explicit ``weights``, the returned map holds
    gradients with respect to those weights instead. ``tape.weight_grads``
    always receives dL/dw.
    """
    if tape.graph is not g or (params is not None and tape.version != params.version):
        raise StaleTapeError("tape does not belong to this graph/parameter version")
    plan = _plan(g)
    V = tape.values
    B, N = V.shape
    G = np.zeros((B, N))
    og = np.asarray(output_grads, dtype=np.float64).reshape(B, len(plan.output_ids))
    for k, oid in enumerate(plan.output_ids):
        G[:, oid] += og[:, k]
    row_base = (np.arange(B, dtype=np.int64) * N)[:, None]
    godel = tape.semantics == GODEL
    R = tape.weights.shape[0]
    wg = np.zeros((R, plan.n_weights))
    for step in reversed(plan.steps):
        gout = G[:, step.ids]
        if not gout.any():
            continue
        if step.kind in (CHOICE_DISJ, CHOICE_CONJ):
            targets, contrib = _choice_backward(step, V, tape.weights, gout, godel, wg)
            targets = targets + row_base[..., None] if targets.ndim == 3 else targets + row_base
        elif step.kind == NEG:
            targets = row_base + step.children[:, 0][None, :]
            contrib = -gout
        elif godel:
            # the selected child is recovered from the stored values; the
            # first minimal (maximal) child wins ties
            C = V[:, step.children]
            a = C.argmin(axis=2) if step.kind == MIN else C.argmax(axis=2)
            m = step.ids.size
            targets = row_base + step.children[np.arange(m)[None, :], a]
            contrib = gout
        else:
            C = V[:, step.children]
            if step.kind == MIN:
                partial = _leave_one_out(C)
            else:
                partial = _leave_one_out(1.0 - C)
            contrib = gout[:, :, None] * partial
            targets = row_base[:, :, None] + step.children[None, :, :]
        G += np.bincount(targets.ravel(), weights=contrib.ravel(), minlength=B * N).reshape(B, N)

    if R > 1:
        rows = np.arange(R)[:, None]
        np.add.at(wg, (rows, plan.gate_pos[None, :]), G[:, plan.gate_ids])
        np.add.at(wg, (rows, plan.cogate_pos[None, :]), -G[:, plan.cogate_ids])
    else:
        np.add.at(wg[0], plan.gate_pos, G[:, plan.gate_ids].sum(axis=0))
        np.add.at(wg[0], plan.cogate_pos, -G[:, plan.cogate_ids].sum(axis=0))
    total = wg.sum(axis=0)
    tape.weight_grads = {cid: total[s:e].copy() for cid, (s, e) in plan.offsets.items()}
    if tape.caches:
        grads = {}
        for gc in tape.caches.values():
            gu = wg[:, gc.pos] * gc.w * (1.0 - gc.w) / gc.temperature
            gz = gu.copy()
            shift = np.take_along_axis(gz, gc.top2, axis=-1) - 0.5 * gu.sum(axis=-1, keepdims=True)
            np.put_along_axis(gz, gc.top2, shift, axis=-1)
            grads.update(zip(gc.cids, gz.sum(axis=0)))
        grads = {cid: grads[cid] for cid in plan.block_ids}
    else:
        grads = dict(tape.weight_grads)
    if return_inputs:
        return grads, G[:, plan.input_ids].copy()
    return grads


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("LOH_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(g: CompiledGraph, params: ParameterStore, X, threads: Optional[int] = None,
             chunk: int = 2048, weights: Optional[Mapping] = None) -> np.ndarray:
    """Noise-free outputs for many rows, split into chunks across threads."""
    X = _check_batch(g, X)
    threads = threads or default_threads()
    if X.shape[0] <= chunk:
        return forward(g, params, X, noise=False, weights=weights)[0]
    parts = [X[i:i + chunk] for i in range(0, X.shape[0], chunk)]

    def run(part):
        return forward(g, params, part, noise=False, weights=weights)[0]

    if threads == 1:
        outs = [run(p) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(run, parts))
    return np.concatenate(outs, axis=0)


def threshold(x):
    """Round fuzzy truth values at 0.5 (0.5 itself maps to False)."""
    return np.asarray(x) > 0.5
