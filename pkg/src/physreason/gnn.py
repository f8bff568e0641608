"""Message-passing property learner and charge-gated dynamics predictor in plain numpy.

Both networks are stacks of small ReLU MLPs joined by sum aggregation over
ordered object pairs, so the backward pass is written out by hand, layer by
layer. Parameters live in one flat ``dict[str, ndarray]``; gradients use the
same keys.

Property learner, per video with n objects and T frames:

    v0_i  = emb(x_i)                         x_i: normalized (x, y) for T frames
    e_ij  = rel_l([v_i, v_j]);  v_i <- enc_l(sum_j e_ij)      for l = 0, 1
    mass logits = vpred(v2_i);  edge logits = epred(e1_ij)

Dynamics predictor, over a 3-frame window of (x, y, w, h, m) per object:

    h0_ij = sum_k z_ijk emb_k([o_i, o_j])
    u1_i  = o_i + rel0(sum_j h0_ij)
    h1_ij = sum_k z_ijk enc_k([u1_i, u1_j, o_i, o_j])
    u2_i  = u1_i + rel1(sum_j h1_ij)
    out_i = pred(u2_i)  ->  (dx, dy, w, h)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import vocab
from .core import PropertyGraph, SceneRecord, VideoSet

log = logging.getLogger(__name__)

GATES = ("same", "opposite", "none")
HISTORY = 3
NODE_FEATURES = 5
DELTA_SCALE = 50.0
BIAS_INIT = 0.01  # keeps all-zero rows off the ReLU kink
CHECKPOINT_FORMAT = "physreason-gnn/1"


class GNNInputError(ValueError):
    pass


class RolloutError(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite rollout state at step {step}")


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------- MLP blocks

def _floats(x) -> np.ndarray:
    """Float array, keeping extended precision when given (used by the gradient check)."""
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(float)


def _relu(x):
    return np.maximum(x, 0.0)


def mlp_forward(params, name: str, x: np.ndarray, final_relu: bool):
    cache = []
    h = x
    k = 0
    while f"{name}.W{k}" in params:
        z = h @ params[f"{name}.W{k}"] + params[f"{name}.b{k}"]
        last = f"{name}.W{k + 1}" not in params
        cache.append((h, z, final_relu or not last))
        h = _relu(z) if (final_relu or not last) else z
        k += 1
    return h, cache


def mlp_backward(params, grads, name: str, cache, dy: np.ndarray) -> np.ndarray:
    for k in reversed(range(len(cache))):
        h, z, relu = cache[k]
        if relu:
            dy = dy * (z > 0)
        grads[f"{name}.W{k}"] += h.T @ dy
        grads[f"{name}.b{k}"] += dy.sum(axis=0)
        dy = dy @ params[f"{name}.W{k}"].T
    return dy


def _init_mlp(params, rng, name, sizes):
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{name}.W{k}"] = rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b))
        params[f"{name}.b{k}"] = np.full(b, BIAS_INIT)


def _pairs(n: int):
    idx = [(i, j) for i in range(n) for j in range(n) if i != j]
    if not idx:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    a = np.array(idx)
    return a[:, 0], a[:, 1]


def _scatter(rows: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]), dtype=values.dtype)
    np.add.at(out, rows, values)
    return out


# ---------------------------------------------------------------- property learner

def init_ppl(rng, T: int, hidden: int = 64) -> dict:
    p: dict = {}
    _init_mlp(p, rng, "ppl.emb", [2 * T, hidden, hidden])
    for l in (0, 1):
        _init_mlp(p, rng, f"ppl.rel{l}", [2 * hidden, hidden, hidden])
        _init_mlp(p, rng, f"ppl.enc{l}", [hidden, hidden, hidden])
    _init_mlp(p, rng, "ppl.vpred", [hidden, hidden, 2])
    _init_mlp(p, rng, "ppl.epred", [hidden, hidden, 3])
    return p


def ppl_inputs(record: SceneRecord, T: int, half_extent: float = 5.0) -> np.ndarray:
    """(n, 2T) normalized coordinates of the first T frames, padded by repeating the last."""
    P = np.asarray(record.positions[:T]) / half_extent
    if len(P) < T:
        P = np.concatenate([P, np.repeat(P[-1:], T - len(P), axis=0)])
    return P.transpose(1, 0, 2).reshape(P.shape[1], 2 * T)


def ppl_forward(params, X: np.ndarray, with_cache: bool = False):
    """Mass logits (n, 2) and ordered-pair edge logits (n(n-1), 3)."""
    X = _floats(X)
    if X.ndim != 2 or X.shape[1] != params["ppl.emb.W0"].shape[0]:
        raise GNNInputError(f"expected (n, {params['ppl.emb.W0'].shape[0]}) trajectories, got {X.shape}")
    n = X.shape[0]
    I, J = _pairs(n)
    H = params["ppl.emb.W0"].shape[1]
    caches = {}
    V, caches["emb"] = mlp_forward(params, "ppl.emb", X, True)
    E = np.zeros((0, H))
    for l in (0, 1):
        P = np.concatenate([V[I], V[J]], axis=1)
        E, caches[f"rel{l}"] = mlp_forward(params, f"ppl.rel{l}", P, True)
        V, caches[f"enc{l}"] = mlp_forward(params, f"ppl.enc{l}", _scatter(I, E, n), True)
    mass, caches["vpred"] = mlp_forward(params, "ppl.vpred", V, False)
    edge, caches["epred"] = mlp_forward(params, "ppl.epred", E, False)
    if with_cache:
        return mass, edge, (n, I, J, H, caches)
    return mass, edge


def ppl_backward(params, ctx, dmass, dedge) -> dict:
    n, I, J, H, caches = ctx
    grads = {k: np.zeros_like(v) for k, v in params.items() if k.startswith("ppl.")}
    dV = mlp_backward(params, grads, "ppl.vpred", caches["vpred"], dmass)
    dE = mlp_backward(params, grads, "ppl.epred", caches["epred"], dedge)
    for l in (1, 0):
        dA = mlp_backward(params, grads, f"ppl.enc{l}", caches[f"enc{l}"], dV)
        dE = dE + dA[I]
        dP = mlp_backward(params, grads, f"ppl.rel{l}", caches[f"rel{l}"], dE)
        dV = _scatter(I, dP[:, :H], n) + _scatter(J, dP[:, H:], n)
        dE = np.zeros((len(I), H))
    mlp_backward(params, grads, "ppl.emb", caches["emb"], dV)
    return grads


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, labels):
    if len(labels) == 0:
        return 0.0, np.zeros_like(logits)
    rows = np.arange(len(labels))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -np.mean(log_p[rows, labels])
    d = np.exp(log_p)
    d[rows, labels] -= 1.0
    return loss, d / len(labels)


def ppl_loss(params, X, mass_labels, edge_labels, with_grad: bool = True):
    if with_grad:
        mass, edge, ctx = ppl_forward(params, X, with_cache=True)
    else:
        mass, edge = ppl_forward(params, X)
    lm, dm = _cross_entropy(mass, np.asarray(mass_labels, dtype=int))
    le, de = _cross_entropy(edge, np.asarray(edge_labels, dtype=int))
    if not with_grad:
        return lm + le
    return lm + le, ppl_backward(params, ctx, dm, de)


def ppl_labels(record: SceneRecord):
    objs = record.objects
    mass = [vocab.MASS_LEVELS.index(o.mass) for o in objs]
    I, J = _pairs(len(objs))
    from .core import relative_charge

    edge = [GATES.index(relative_charge(objs[i].charge_value, objs[j].charge_value)) for i, j in zip(I, J)]
    return mass, edge


# ---------------------------------------------------------------- dynamics predictor

def init_dyn(rng, hidden: int = 64) -> dict:
    p: dict = {}
    F = HISTORY * NODE_FEATURES
    for g in GATES:
        _init_mlp(p, rng, f"dyn.emb.{g}", [2 * F, hidden, hidden])
        _init_mlp(p, rng, f"dyn.enc.{g}", [4 * F, hidden, hidden])
    _init_mlp(p, rng, "dyn.rel0", [hidden, hidden, F])
    _init_mlp(p, rng, "dyn.rel1", [hidden, hidden, F])
    _init_mlp(p, rng, "dyn.pred", [F, hidden, 4])
    return p


def node_features(window: np.ndarray, radii, masses, half_extent: float = 5.0) -> np.ndarray:
    """(n, 15): per history frame the normalized (x, y, w, h, m)."""
    window = np.asarray(window, dtype=float)
    if window.shape[0] != HISTORY:
        raise GNNInputError(f"window must hold {HISTORY} frames, got {window.shape[0]}")
    n = window.shape[1]
    size = np.asarray(radii, dtype=float) / half_extent
    m = np.asarray(masses, dtype=float) / vocab.MASS_VALUE["heavy"]
    feats = [np.column_stack([window[t, :, 0] / half_extent, window[t, :, 1] / half_extent, size, size, m])
             for t in range(HISTORY)]
    return np.concatenate(feats, axis=1).reshape(n, HISTORY * NODE_FEATURES)


def gates_from_labels(labels: Sequence[str]) -> np.ndarray:
    z = np.zeros((len(labels), 3))
    for r, lab in enumerate(labels):
        z[r, GATES.index(lab)] = 1.0
    return z


def _check_gates(z: np.ndarray, n_pairs: int):
    z = np.asarray(z, dtype=float)
    if z.shape != (n_pairs, 3) or not np.all((z == 0) | (z == 1)) or not np.all(z.sum(axis=1) == 1):
        raise GNNInputError("gate matrix must be one-hot per ordered pair")
    return z


def _gated(params, prefix, inp, z, with_cache):
    H = params[f"{prefix}.same.W0"].shape[1]
    out = np.zeros((inp.shape[0], H), dtype=inp.dtype)
    caches = {}
    for k, g in enumerate(GATES):
        rows = np.nonzero(z[:, k])[0]
        if len(rows) == 0:
            continue
        y, c = mlp_forward(params, f"{prefix}.{g}", inp[rows], True)
        out[rows] = y
        caches[g] = (rows, c)
    return out, caches


def _gated_backward(params, grads, prefix, caches, dout, in_dim):
    din = np.zeros((dout.shape[0], in_dim))
    for g, (rows, c) in caches.items():
        din[rows] = mlp_backward(params, grads, f"{prefix}.{g}", c, dout[rows])
    return din


def dyn_forward(params, o: np.ndarray, z: np.ndarray, with_cache: bool = False):
    """Scaled (dx, dy) and size (w, h) prediction per object: shape (n, 4)."""
    o = _floats(o)
    n = o.shape[0]
    I, J = _pairs(n)
    z = _check_gates(z, len(I))
    c = {}
    h0, c["emb"] = _gated(params, "dyn.emb", np.concatenate([o[I], o[J]], axis=1), z, with_cache)
    r0, c["rel0"] = mlp_forward(params, "dyn.rel0", _scatter(I, h0, n), False)
    u1 = o + r0
    enc_in = np.concatenate([u1[I], u1[J], o[I], o[J]], axis=1)
    h1, c["enc"] = _gated(params, "dyn.enc", enc_in, z, with_cache)
    r1, c["rel1"] = mlp_forward(params, "dyn.rel1", _scatter(I, h1, n), False)
    u2 = u1 + r1
    out, c["pred"] = mlp_forward(params, "dyn.pred", u2, False)
    if with_cache:
        return out, (n, I, J, c)
    return out


def dyn_backward(params, ctx, dout) -> dict:
    n, I, J, c = ctx
    F = HISTORY * NODE_FEATURES
    grads = {k: np.zeros_like(v) for k, v in params.items() if k.startswith("dyn.")}
    du2 = mlp_backward(params, grads, "dyn.pred", c["pred"], dout)
    du1 = du2.copy()
    dA1 = mlp_backward(params, grads, "dyn.rel1", c["rel1"], du2)
    d_enc = _gated_backward(params, grads, "dyn.enc", c["enc"], dA1[I], 4 * F)
    du1 += _scatter(I, d_enc[:, :F], n) + _scatter(J, d_enc[:, F:2 * F], n)
    do = _scatter(I, d_enc[:, 2 * F:3 * F], n) + _scatter(J, d_enc[:, 3 * F:], n)
    do += du1
    dA0 = mlp_backward(params, grads, "dyn.rel0", c["rel0"], du1)
    d_emb = _gated_backward(params, grads, "dyn.emb", c["emb"], dA0[I], 2 * F)
    do += _scatter(I, d_emb[:, :F], n) + _scatter(J, d_emb[:, F:], n)
    return grads


def dyn_targets(window_next: np.ndarray, last: np.ndarray, radii, half_extent: float = 5.0) -> np.ndarray:
    size = np.asarray(radii, dtype=float) / half_extent
    d = (np.asarray(window_next) - np.asarray(last)) / half_extent * DELTA_SCALE
    return np.column_stack([d, size, size])


def dyn_loss(params, o, z, target, with_grad: bool = True):
    if with_grad:
        out, ctx = dyn_forward(params, o, z, with_cache=True)
    else:
        out = dyn_forward(params, o, z)
    diff = out - target
    loss = np.mean(diff * diff)
    if not with_grad:
        return loss
    return loss, dyn_backward(params, ctx, 2.0 * diff / diff.size)


def rollout(params, frames: np.ndarray, radii, masses, z, n_steps: int, half_extent: float = 5.0) -> np.ndarray:
    """Autoregressive prediction from the last three given frames; returns (n_steps, n, 2)."""
    hist = [np.asarray(f, dtype=float) for f in np.asarray(frames)[-HISTORY:]]
    out = np.zeros((n_steps, hist[0].shape[0], 2))
    for s in range(n_steps):
        o = node_features(np.stack(hist[-HISTORY:]), radii, masses, half_extent)
        pred = dyn_forward(params, o, z)
        nxt = hist[-1] + pred[:, :2] / DELTA_SCALE * half_extent
        if not np.all(np.isfinite(nxt)):
            raise RolloutError(s)
        out[s] = nxt
        hist.append(nxt)
    return out


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    lr: float = 1e-3
    batch: int = 8
    epochs: int = 30
    dyn_epochs: int = 10
    windows_per_scene: int = 16
    T: int = 50
    seed: int = 0
    smoothing: float = 0.6


@dataclass
class Adam:
    lr: float = 1e-3
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + self.eps)


def _batched_step(params, opt, samples, loss_fn):
    total = 0.0
    acc = None
    for s in samples:
        loss, g = loss_fn(params, *s)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss}")
        total += loss
        if acc is None:
            acc = g
        else:
            for k in acc:
                acc[k] += g[k]
    for k in acc:
        acc[k] /= len(samples)
    opt.step(params, acc)
    return total / len(samples)


def smooth(curve: Sequence[float], alpha: float) -> list[float]:
    """Exponential moving average."""
    out, s = [], None
    for x in curve:
        s = x if s is None else alpha * s + (1 - alpha) * x
        out.append(s)
    return out


@dataclass
class GNNModel:
    params: dict
    config: TrainConfig = TrainConfig()

    def ppl_records(self, vs: VideoSet) -> list[SceneRecord]:
        return list(vs.references) + [vs.target]

    def predict_graph(self, vs: VideoSet) -> PropertyGraph:
        from .inference import fuse_subgraphs

        partials = []
        for rec in self.ppl_records(vs):
            mass, edge = ppl_forward(self.params, ppl_inputs(rec, self.config.T))
            pm, pe = _softmax(mass), _softmax(edge)
            ids = rec.ids
            n = len(ids)
            nodes = {ids[i]: (vocab.MASS_LEVELS[int(pm[i].argmax())], float(pm[i].max())) for i in range(n)}
            I, J = _pairs(n)
            sym: dict = {}
            for r, (i, j) in enumerate(zip(I, J)):
                key = tuple(sorted((ids[i], ids[j])))
                sym[key] = sym.get(key, 0) + pe[r] / 2
            edges = {k: (GATES[int(p.argmax())], float(p.max())) for k, p in sym.items()}
            partials.append(PropertyGraph(nodes, edges))
        return fuse_subgraphs(partials, quiet=True)

    def rollout_positions(self, frames, radii, masses, edge_labels, n_steps):
        return rollout(self.params, frames, radii, masses, gates_from_labels(edge_labels), n_steps)


def _ppl_samples(video_sets, T):
    out = []
    for vs in video_sets:
        for rec in list(vs.references) + [vs.target]:
            mass, edge = ppl_labels(rec)
            out.append((ppl_inputs(rec, T), mass, edge))
    return out


def _dyn_samples(video_sets, rng, per_scene):
    from .core import relative_charge

    out = []
    for vs in video_sets:
        rec = vs.target
        objs = rec.objects
        I, J = _pairs(len(objs))
        z = gates_from_labels([relative_charge(objs[i].charge_value, objs[j].charge_value) for i, j in zip(I, J)])
        masses = [o.mass_value for o in objs]
        starts = rng.choice(rec.n_frames - HISTORY, size=min(per_scene, rec.n_frames - HISTORY), replace=False)
        for s in sorted(starts):
            o = node_features(rec.positions[s:s + HISTORY], rec.radii, masses)
            tgt = dyn_targets(rec.positions[s + HISTORY], rec.positions[s + HISTORY - 1], rec.radii)
            out.append((o, z, tgt))
    return out


def train(video_sets: Sequence[VideoSet], cfg: TrainConfig = TrainConfig()) -> tuple[GNNModel, dict]:
    """Minibatch Adam on both networks; returns the model and raw/smoothed per-epoch loss curves."""
    rng = np.random.default_rng(cfg.seed)
    params = init_ppl(rng, cfg.T, cfg.hidden)
    params.update(init_dyn(rng, cfg.hidden))
    curves = {}
    for name, samples, epochs, fn in (
        ("ppl", _ppl_samples(video_sets, cfg.T), cfg.epochs, ppl_loss),
        ("dyn", _dyn_samples(video_sets, rng, cfg.windows_per_scene), cfg.dyn_epochs, dyn_loss),
    ):
        opt = Adam(cfg.lr)
        raw = []
        for epoch in range(epochs):
            order = rng.permutation(len(samples))
            losses = []
            for b in range(0, len(order), cfg.batch):
                losses.append(_batched_step(params, opt, [samples[i] for i in order[b:b + cfg.batch]], fn))
            raw.append(float(np.mean(losses)))
            log.info("%s epoch %d loss %.6f", name, epoch, raw[-1])
        curves[name] = raw
        curves[f"{name}_smoothed"] = smooth(raw, cfg.smoothing)
    return GNNModel(params, cfg), curves


def evaluate_ppl(model: GNNModel, video_sets: Sequence[VideoSet]) -> dict:
    """Set-level accuracy of fused mass labels and charge edges against the generator's truth."""
    m_ok = m_n = e_ok = e_n = 0
    for vs in video_sets:
        g = model.predict_graph(vs)
        truth = PropertyGraph.from_roster(vs.roster)
        for i, (lab, _) in truth.node_mass.items():
            m_ok += g.mass(i) == lab
            m_n += 1
        for (a, b), (lab, _) in truth.edge_charge.items():
            e_ok += g.edge(a, b) == lab
            e_n += 1
    return {"mass_accuracy": m_ok / max(m_n, 1), "edge_accuracy": e_ok / max(e_n, 1), "n_sets": len(video_sets)}


# ---------------------------------------------------------------- gradient check

def _relu_masks(ctx, out):
    if isinstance(ctx, dict):
        for v in ctx.values():
            _relu_masks(v, out)
    elif isinstance(ctx, (list, tuple)):
        if len(ctx) == 3 and isinstance(ctx[2], bool) and isinstance(ctx[1], np.ndarray):
            if ctx[2]:
                out.append(np.packbits(ctx[1] > 0).tobytes())
        else:
            for v in ctx:
                _relu_masks(v, out)
    return out


def ppl_activation_pattern(params, X, *_) -> bytes:
    return b"".join(_relu_masks(ppl_forward(params, X, with_cache=True)[2], []))


def dyn_activation_pattern(params, o, z, *_) -> bytes:
    return b"".join(_relu_masks(dyn_forward(params, o, z, with_cache=True)[1], []))


def gradient_check(params, loss_fn, args, n_per_block: int = 10, eps: float = 1e-5, seed: int = 0,
                   pattern_fn=None) -> dict:
    """Largest relative mismatch between analytic and central-difference gradients, per parameter block.

    Probe losses are evaluated in extended precision (``np.longdouble``) so that round-off
    does not swamp small gradient entries. With ``pattern_fn`` (params, *args) -> bytes of
    ReLU on/off states, coordinates whose +/-eps probes straddle a kink are skipped, since
    the derivative is undefined there; their count is returned under ``"_skipped"``.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_fn(params, *args)
    wide = {k: v.astype(np.longdouble) for k, v in params.items()}
    wide_args = tuple(a.astype(np.longdouble) if isinstance(a, np.ndarray) and a.dtype.kind == "f" else a
                      for a in args)
    worst = {}
    skipped = 0
    for key, g in grads.items():
        flat = wide[key].reshape(-1)
        errs = []
        for idx in rng.permutation(flat.size):
            if len(errs) == n_per_block:
                break
            old = flat[idx]
            flat[idx] = old + eps
            lp = loss_fn(wide, *wide_args, with_grad=False)
            pat_p = pattern_fn(wide, *wide_args) if pattern_fn else None
            flat[idx] = old - eps
            lm = loss_fn(wide, *wide_args, with_grad=False)
            pat_m = pattern_fn(wide, *wide_args) if pattern_fn else None
            flat[idx] = old
            if pat_p != pat_m:
                skipped += 1
                continue
            num = float((lp - lm) / (2 * eps))
            ana = float(g.reshape(-1)[idx])
            errs.append(abs(num - ana) / max(abs(num), abs(ana), 1e-7))
        worst[key] = float(max(errs)) if errs else 0.0
    if pattern_fn:
        worst["_skipped"] = skipped
    return worst


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(model: GNNModel, path) -> None:
    blocks = {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in sorted(model.params.items())}
    doc = {"format": CHECKPOINT_FORMAT, "config": asdict(model.config), "blocks": blocks}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> GNNModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise GNNInputError(f"unrecognized checkpoint format {doc.get('format')!r}")
    params = {k: np.asarray(b["data"], dtype=float).reshape(b["shape"]) for k, b in doc["blocks"].items()}
    return GNNModel(params, TrainConfig(**doc["config"]))
