"""Hidden-property recovery: event-signature rules, hypothesis enumeration and fusion."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ObjectSpec, PropertyGraph, SceneRecord, VideoSet, canonicalize_charges, relative_charge
from .physics import InitialConditions, PhysicsConfig, integrate

log = logging.getLogger(__name__)

HEAVY_MARGIN = 2.5
EQUAL_BAND = 1.6
TIE_RTOL = 1e-6
TIE_ATOL = 1e-12
CONF_SCALE = 1e-4


# ---------------------------------------------------------------- event rules

def _charge_partner_present(record: SceneRecord, obj_id: int) -> bool:
    return any(e.kind in ("attraction", "repulsion") and obj_id in e.participants for e in record.events)


def _collision_ratio(record: SceneRecord, frame: int, a: int, b: int, cfg: PhysicsConfig) -> Optional[float]:
    """|dv_b| / |dv_a| across the frame step containing the contact, or None when unusable."""
    if frame < 1 or frame >= record.n_frames:
        return None
    ia, ib = record.index_of(a), record.index_of(b)
    lim = cfg.arena_half_extent
    for i in (ia, ib):
        for f in (frame - 1, frame):
            if np.any(np.abs(record.positions[f, i]) + record.radii[i] + 0.1 >= lim):
                return None
    dva = np.linalg.norm(record.velocities[frame, ia] - record.velocities[frame - 1, ia])
    dvb = np.linalg.norm(record.velocities[frame, ib] - record.velocities[frame - 1, ib])
    if dva < 1e-9 or dvb < 1e-9:
        return None
    return float(dvb / dva)


def infer_from_events(records: Sequence[SceneRecord], cfg: PhysicsConfig = PhysicsConfig()) -> PropertyGraph:
    """Partial graph from interaction signatures.

    Repulsion means same charge, attraction opposite. A co-occurring pair that came
    within force range without any charge event is labelled ``none``. For clean
    two-body collisions the velocity-change ratio gives the mass relation: the
    body that barely deflects is heavy once the ratio clears ``HEAVY_MARGIN``, and
    a ratio near one marks both bodies light (a set holds at most one heavy object).
    """
    nodes: dict[int, tuple[str, float]] = {}
    edges: dict[tuple[int, int], tuple[str, float]] = {}

    def put(store, key, label, conf):
        if key not in store or store[key][1] < conf:
            store[key] = (label, conf)

    for rec in records:
        for e in rec.events:
            if e.kind in ("attraction", "repulsion"):
                put(edges, tuple(sorted(e.participants)), "same" if e.kind == "repulsion" else "opposite", 0.95)
        d = rec.positions[:, :, None, :] - rec.positions[:, None, :, :]
        dist = np.linalg.norm(d, axis=-1)
        ids = rec.ids
        for i, j in itertools.combinations(range(len(ids)), 2):
            key = tuple(sorted((ids[i], ids[j])))
            if key not in edges and dist[:, i, j].min() <= cfg.interaction_range:
                put(edges, key, "none", 0.9)
        frames = [e.frame for e in rec.events if e.kind == "collision"]
        for e in rec.events:
            if e.kind != "collision":
                continue
            a, b = e.participants
            if sum(abs(f - e.frame) <= 2 for f in frames) > 1:
                continue  # overlapping contacts
            if _charge_partner_present(rec, a) or _charge_partner_present(rec, b):
                continue
            r = _collision_ratio(rec, e.frame, a, b, cfg)
            if r is None:
                continue
            if r > HEAVY_MARGIN:
                put(nodes, a, "heavy", 0.9)
                put(nodes, b, "light", 0.9)
            elif r < 1 / HEAVY_MARGIN:
                put(nodes, b, "heavy", 0.9)
                put(nodes, a, "light", 0.9)
            elif 1 / EQUAL_BAND < r < EQUAL_BAND:
                put(nodes, a, "light", 0.8)
                put(nodes, b, "light", 0.8)
    return PropertyGraph(nodes, edges)


def fuse_subgraphs(partials: Iterable[PropertyGraph], quiet: bool = False) -> PropertyGraph:
    """Keep, per node and per edge, the label carried with the highest confidence.

    Disagreements are logged as warnings unless ``quiet``.
    """
    nodes: dict = {}
    edges: dict = {}
    ambiguous = False
    for g in partials:
        ambiguous |= g.ambiguous
        for store, items, what in ((nodes, g.node_mass, "node"), (edges, g.edge_charge, "edge")):
            for key, (label, conf) in items.items():
                old = store.get(key)
                if old is not None and old[0] != label and not quiet:
                    log.warning("conflicting %s %s: %s@%.3f vs %s@%.3f", what, key, old[0], old[1], label, conf)
                if old is None or conf > old[1]:
                    store[key] = (label, conf)
    return PropertyGraph(nodes, edges, ambiguous)


# ---------------------------------------------------------------- enumeration

@dataclass(frozen=True)
class Hypothesis:
    mass: tuple[tuple[int, float], ...]
    charge: tuple[tuple[int, int], ...]

    def masses(self) -> dict[int, float]:
        return dict(self.mass)

    def charges(self) -> dict[int, int]:
        return dict(self.charge)

    def mass_label(self, obj_id: int) -> str:
        return "heavy" if self.masses()[obj_id] > 1.0 else "light"

    def graph(self, conf_node=None, conf_edge=None, ambiguous: bool = False) -> PropertyGraph:
        q = self.charges()
        ids = sorted(q)
        nodes = {i: (self.mass_label(i), 1.0 if conf_node is None else conf_node[i]) for i in ids}
        edges = {(a, b): (relative_charge(q[a], q[b]), 1.0 if conf_edge is None else conf_edge[(a, b)])
                 for a, b in itertools.combinations(ids, 2)}
        return PropertyGraph(nodes, edges, ambiguous)

    def objects(self, roster: Sequence[ObjectSpec]) -> list[ObjectSpec]:
        m, q = self.masses(), self.charges()
        name = {1: "positive", -1: "negative", 0: "neutral"}
        return [replace(o, mass="heavy" if m[o.id] > 1.0 else "light", charge=name[q[o.id]]) for o in roster]


@dataclass(frozen=True)
class FitScore:
    hypothesis: Hypothesis
    per_video: tuple[float, ...]
    total: float


def enumerate_hypotheses(ids: Sequence[int], max_heavy: int = 1, max_charged_pairs: int = 1) -> list[Hypothesis]:
    """Canonical hypotheses: up to ``max_heavy`` heavy objects and up to one charged pair.

    Sign patterns are canonical under global inversion, so a charged pair contributes
    two hypotheses (same / opposite). ``max_heavy=None`` lifts the mass constraint.
    """
    ids = sorted(ids)
    if max_charged_pairs not in (0, 1):
        raise ValueError("only zero or one charged pair is supported")
    n = len(ids)
    mass_sets = []
    top = n if max_heavy is None else min(max_heavy, n)
    for k in range(top + 1):
        mass_sets += list(itertools.combinations(ids, k))
    charge_sets = [{i: 0 for i in ids}]
    if max_charged_pairs:
        for a, b in itertools.combinations(ids, 2):
            for sb in (1, -1):
                q = {i: 0 for i in ids}
                q[a], q[b] = 1, sb
                charge_sets.append(canonicalize_charges(q))
    out = []
    for heavy in mass_sets:
        m = tuple((i, 5.0 if i in heavy else 1.0) for i in ids)
        for q in charge_sets:
            out.append(Hypothesis(m, tuple(sorted(q.items()))))
    return out


def _restricted_key(h: Hypothesis, ids: Sequence[int]) -> tuple:
    m, q = h.masses(), h.charges()
    local = {i: q[i] for i in ids}
    if sum(v != 0 for v in local.values()) < 2:
        local = {i: 0 for i in ids}  # a lone charge feels no force
    local = canonicalize_charges(local)
    return tuple((i, m[i], local[i]) for i in ids)


def trajectory_discrepancy(record: SceneRecord, key: tuple, cfg: PhysicsConfig) -> float:
    """Mean squared position error of a re-simulation from the record's first frame."""
    name = {1: "positive", -1: "negative", 0: "neutral"}
    objs = tuple(replace(o, mass="heavy" if m > 1.0 else "light", charge=name[q])
                 for o, (_, m, q) in zip(record.objects, key))
    init = InitialConditions(objs, np.array(record.positions[0]), np.array(record.velocities[0]))
    traj = integrate(init, record.duration_s, cfg)
    n = min(len(traj.positions), record.n_frames)
    err = traj.positions[:n] - record.positions[:n]
    return float(np.mean(np.sum(err * err, axis=-1)))


@dataclass(frozen=True)
class EnumerationResult:
    graph: PropertyGraph
    ranking: tuple[FitScore, ...]
    tied: tuple[Hypothesis, ...]

    @property
    def best(self) -> Hypothesis:
        return self.ranking[0].hypothesis

    @property
    def ambiguous(self) -> bool:
        return len(self.tied) > 1

    def table(self) -> list[dict]:
        return [{"mass": {str(i): m for i, m in s.hypothesis.mass},
                 "charge": {str(i): q for i, q in s.hypothesis.charge},
                 "per_video": list(s.per_video), "total": s.total} for s in self.ranking]


def _margin_conf(margin: float) -> float:
    return 1.0 if math.isinf(margin) else float(1.0 - 0.5 * math.exp(-margin / CONF_SCALE))


def infer_by_enumeration(vs: VideoSet, cfg: PhysicsConfig = PhysicsConfig(), use_target: bool = True,
                         records: Optional[Sequence[SceneRecord]] = None,
                         max_heavy: Optional[int] = 1) -> EnumerationResult:
    """Score every canonical hypothesis by re-simulating the observed videos.

    Each video is re-simulated from its frame-0 state; the score is the summed
    mean squared position error. Hypotheses that agree on a video's cast share
    one simulation. Confidence for a label is a softmin of the score gap to the
    best hypothesis that disagrees with it.
    """
    if records is None:
        records = list(vs.references) + ([vs.target] if use_target else [])
    ids = sorted(o.id for o in vs.roster)
    hyps = enumerate_hypotheses(ids, max_heavy=max_heavy)
    cache: dict = {}
    scores = []
    for h in hyps:
        per = []
        for k, rec in enumerate(records):
            key = _restricted_key(h, rec.ids)
            if (k, key) not in cache:
                cache[(k, key)] = trajectory_discrepancy(rec, key, cfg)
            per.append(cache[(k, key)])
        scores.append(FitScore(h, tuple(per), float(sum(per))))
    order = sorted(range(len(hyps)), key=lambda i: (scores[i].total, i))
    ranking = tuple(scores[i] for i in order)
    best = ranking[0]
    tol = TIE_RTOL * best.total + TIE_ATOL
    tied = tuple(s.hypothesis for s in ranking if s.total - best.total <= tol)

    conf_node, conf_edge = {}, {}
    bh = best.hypothesis
    bq = bh.charges()
    for i in ids:
        alt = [s.total for s in ranking if s.hypothesis.mass_label(i) != bh.mass_label(i)]
        conf_node[i] = _margin_conf(min(alt) - best.total if alt else math.inf)
    for a, b in itertools.combinations(ids, 2):
        lab = relative_charge(bq[a], bq[b])
        alt = [s.total for s in ranking
               if relative_charge(s.hypothesis.charges()[a], s.hypothesis.charges()[b]) != lab]
        conf_edge[(a, b)] = _margin_conf(min(alt) - best.total if alt else math.inf)
    if len(tied) > 1:
        for t in tied[1:]:
            for i in ids:
                if t.mass_label(i) != bh.mass_label(i):
                    conf_node[i] = 0.5
            tq = t.charges()
            for a, b in itertools.combinations(ids, 2):
                if relative_charge(tq[a], tq[b]) != relative_charge(bq[a], bq[b]):
                    conf_edge[(a, b)] = 0.5
    graph = bh.graph(conf_node, conf_edge, ambiguous=len(tied) > 1)
    return EnumerationResult(graph, ranking, tied)


def infer(vs: VideoSet, cfg: PhysicsConfig = PhysicsConfig(), method: str = "enumeration") -> PropertyGraph:
    """Property graph for a set. ``method`` is ``enumeration``, ``events`` or ``fused``."""
    if method not in ("enumeration", "events", "fused"):
        raise ValueError(f"unknown inference method {method!r}")
    if method == "enumeration":
        return infer_by_enumeration(vs, cfg).graph
    per_video = [infer_from_events([r], cfg) for r in vs.records]
    if method == "events":
        return fuse_subgraphs(per_video)
    return fuse_subgraphs(per_video + [infer_by_enumeration(vs, cfg).graph])


def graph_matches(graph: PropertyGraph, truth: PropertyGraph) -> bool:
    """True iff every mass label and charge edge of ``truth`` is reproduced."""
    return (all(graph.mass(i) == lab for i, (lab, _) in truth.node_mass.items())
            and all(graph.edge(a, b) == lab for (a, b), (lab, _) in truth.edge_charge.items()))
