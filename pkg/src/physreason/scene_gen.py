"""Seeded sampling of rosters, target videos and reference videos.

Every set has at most one pair of charged objects and at most one heavy
object; references are resampled until they carry enough interaction
evidence to pin down every hidden property.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import vocab
from .core import ObjectSpec, Question, SceneRecord, VideoSet
from .physics import InitialConditions, PhysicsConfig, continue_record, simulate


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_objects_range: tuple[int, int] = (3, 5)
    n_ref_objects_range: tuple[int, int] = (2, 3)
    target_duration_s: float = 5.0
    future_duration_s: float = 2.0
    ref_duration_s: float = 2.0
    max_resample_attempts: int = 200
    complex_mode: bool = False
    speed_band: tuple[float, float] = (0.5, 2.5)
    clearance: float = 0.2
    p_charged: float = 0.5
    p_heavy: float = 0.5
    p_static_target: float = 0.2
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)

    def __post_init__(self):
        for lo, hi in (self.n_objects_range, self.n_ref_objects_range, self.speed_band):
            if lo > hi:
                raise ValueError("empty range in GenConfig")
        if min(self.target_duration_s, self.future_duration_s, self.ref_duration_s) <= 0:
            raise ValueError("durations must be positive")

    @property
    def object_range(self) -> tuple[int, int]:
        return (6, 8) if self.complex_mode else self.n_objects_range


def sample_roster(cfg: GenConfig, rng: np.random.Generator, n: Optional[int] = None) -> list[ObjectSpec]:
    lo, hi = cfg.object_range
    if n is None:
        n = int(rng.integers(lo, hi + 1))
    triples = list(itertools.product(vocab.COLORS, vocab.SHAPES, vocab.MATERIALS))
    picks = rng.choice(len(triples), size=n, replace=False)
    charged = cfg.complex_mode or rng.random() < cfg.p_charged
    heavy = cfg.complex_mode or rng.random() < cfg.p_heavy
    charge = ["neutral"] * n
    if charged:
        for i in rng.choice(n, size=2, replace=False):
            charge[i] = "positive" if rng.random() < 0.5 else "negative"
    mass = ["light"] * n
    if heavy:
        mass[int(rng.integers(n))] = "heavy"
    return [ObjectSpec(i, *triples[k], mass=mass[i], charge=charge[i]) for i, k in enumerate(picks)]


def _place(objects: Sequence[ObjectSpec], rng, cfg: GenConfig, center=(0.0, 0.0), spread=None):
    """Rejection-sample non-overlapping positions with the configured clearance."""
    half = cfg.physics.arena_half_extent
    pos = np.zeros((len(objects), 2))
    for i, o in enumerate(objects):
        lim = half - o.radius
        for _ in range(1000):
            if spread is None:
                p = rng.uniform(-lim, lim, size=2)
            else:
                p = np.asarray(center) + rng.uniform(-spread, spread, size=2)
                if np.any(np.abs(p) > lim):
                    continue
            if all(np.hypot(*(p - pos[j])) >= o.radius + objects[j].radius + cfg.clearance for j in range(i)):
                pos[i] = p
                break
        else:
            return None
    return pos


def _velocities(n, rng, cfg: GenConfig, aim: Optional[np.ndarray] = None, positions=None, noise=0.35):
    speed = rng.uniform(*cfg.speed_band, size=n)
    if aim is None:
        theta = rng.uniform(0, 2 * math.pi, size=n)
    else:
        d = aim - positions
        theta = np.arctan2(d[:, 1], d[:, 0]) + rng.normal(0.0, noise, size=n)
    return np.stack([speed * np.cos(theta), speed * np.sin(theta)], axis=1)


def sample_target(roster: Sequence[ObjectSpec], cfg: GenConfig, rng: np.random.Generator):
    """Target initial conditions, its record and the continuation record.

    Resampled until the target shows at least one collision or charged interaction.
    """
    for _ in range(cfg.max_resample_attempts):
        pos = _place(roster, rng, cfg)
        if pos is None:
            continue
        # mild bias toward the middle keeps interactions likely in 5 s
        vel = _velocities(len(roster), rng, cfg, aim=rng.uniform(-1.5, 1.5, size=2), positions=pos, noise=0.8)
        # some objects start at rest so "stationary" has referents
        vel[rng.random(len(roster)) < cfg.p_static_target] = 0.0
        init = InitialConditions(tuple(roster), pos, vel)
        init.check(cfg.physics)
        rec = simulate(init, cfg.target_duration_s, cfg.physics, kind="target")
        if rec.interactions():
            future = continue_record(rec, cfg.future_duration_s, cfg.physics)
            return init, rec, future
    raise GenerationError("target quality gate: no interaction after "
                          f"{cfg.max_resample_attempts} attempts")


def _casts(roster: Sequence[ObjectSpec], cfg: GenConfig, rng) -> list[tuple[list[int], str]]:
    """Four reference casts (roster indices) with the requirement each must demonstrate."""
    n = len(roster)
    lo, hi = cfg.n_ref_objects_range
    lo, hi = min(lo, n), min(hi, n)
    casts: list[tuple[list[int], str]] = []
    charged = [i for i, o in enumerate(roster) if o.is_charged]
    heavy = [i for i, o in enumerate(roster) if o.mass == "heavy"]
    if charged:
        casts.append((list(charged), "charge"))
    if heavy:
        h = heavy[0]
        partner = int(rng.choice([i for i in range(n) if i != h]))
        casts.append(([h, partner], "heavy"))
    uncovered = [i for i in rng.permutation(n) if not any(i in c for c, _ in casts)]
    while len(casts) < 4:
        size = int(rng.integers(lo, hi + 1))
        members = uncovered[:size]
        uncovered = uncovered[size:]
        pool = [i for i in rng.permutation(n) if i not in members]
        members += pool[:size - len(members)]
        casts.append((members, "any"))
    # leftovers (complex mode) join casts that still have room
    for i in uncovered:
        for c, _ in sorted(casts, key=lambda x: len(x[0])):
            if len(c) < hi:
                c.append(i)
                break
        else:
            raise GenerationError("reference coverage: roster too large for four casts")
    for c, _ in casts:
        c.sort()
    order = rng.permutation(4)
    return [casts[k] for k in order]


def _reference_ok(rec: SceneRecord, requirement: str, roster) -> bool:
    inter = rec.interactions()
    involved = {p for e in inter for p in e.participants}
    if not inter or involved != set(rec.ids):
        return False
    if requirement == "charge":
        pair = {o.id for o in roster if o.is_charged}
        return any(e.kind in ("attraction", "repulsion") and set(e.participants) == pair for e in inter)
    if requirement == "heavy":
        h = next(o.id for o in roster if o.mass == "heavy")
        return any(e.kind == "collision" and h in e.participants for e in inter)
    return True


def sample_reference(cast: Sequence[ObjectSpec], requirement: str, roster, cfg: GenConfig, rng):
    half = cfg.physics.arena_half_extent
    for _ in range(cfg.max_resample_attempts):
        center = rng.uniform(-half / 3, half / 3, size=2)
        pos = _place(cast, rng, cfg, center=center, spread=1.6)
        if pos is None:
            continue
        aim = pos.mean(axis=0)
        vel = _velocities(len(cast), rng, cfg, aim=aim, positions=pos, noise=0.3)
        init = InitialConditions(tuple(cast), pos, vel)
        init.check(cfg.physics)
        rec = simulate(init, cfg.ref_duration_s, cfg.physics, kind="reference")
        if _reference_ok(rec, requirement, roster):
            return init, rec
    raise GenerationError(f"reference requirement {requirement!r} unmet after "
                          f"{cfg.max_resample_attempts} attempts (cast {[o.id for o in cast]})")


def sample_reference_set(roster: Sequence[ObjectSpec], cfg: GenConfig, rng: np.random.Generator):
    """Four references covering the roster; every cast member interacts in its reference.

    The charged pair is shown interacting and the heavy object (if any) is shown colliding.
    """
    out = []
    for members, requirement in _casts(roster, cfg, rng):
        cast = [roster[i] for i in members]
        out.append(sample_reference(cast, requirement, roster, cfg, rng))
    return out


def generate_video_set(cfg: GenConfig, seed: int, set_id: str = "") -> VideoSet:
    rng = np.random.default_rng(seed)
    roster = sample_roster(cfg, rng)
    _, target, future = sample_target(roster, cfg, rng)
    refs = [rec for _, rec in sample_reference_set(roster, cfg, rng)]
    return VideoSet(tuple(roster), target, tuple(refs), future, seed=int(seed), set_id=set_id)


def set_seeds(root_seed: int, n_sets: int) -> list[int]:
    """Independent per-set seeds split from the root seed."""
    return [int(s) for s in np.random.SeedSequence(root_seed).generate_state(n_sets, dtype=np.uint64)]


def _pair_interacts(vs: VideoSet, a: int, b: int) -> bool:
    return any(set(e.participants) == {a, b} for r in vs.records for e in r.interactions())


def _compared_pairs(vs: VideoSet, question: Question) -> list[tuple[int, int]]:
    from .executor import World, execute

    world = World.oracle(vs)
    pairs = []
    programs = [question.program] + [c.program for c in question.choices or ()]
    for prog in programs:
        for i, node in enumerate(prog.nodes):
            if node.name in ("is_heavier", "is_lighter", "is_same_charged", "is_opposite_charged"):
                a, b = (execute(prog.subprogram(x), world).data for x in node.args)
                pairs.append((a, b))
    return pairs


def check_informativeness(vs: VideoSet, questions: Sequence[Question]) -> bool:
    """True iff every mass-comparison or charge-relation question compares a pair seen interacting."""
    return all(_pair_interacts(vs, a, b) for q in questions for a, b in _compared_pairs(vs, q))


def sign_flipped(vs: VideoSet) -> VideoSet:
    """The same set with every charge negated (same trajectories, by charge-inversion invariance)."""
    flip = {"positive": "negative", "negative": "positive", "neutral": "neutral"}
    roster = {o.id: replace(o, charge=flip[o.charge]) for o in vs.roster}

    def rec(r):
        return SceneRecord(tuple(roster[i] for i in r.ids), r.positions, r.velocities, r.duration_s, r.fps,
                           r.events, r.kind, r.contacts)

    return VideoSet(tuple(roster.values()), rec(vs.target), tuple(rec(r) for r in vs.references),
                    rec(vs.future), vs.questions, vs.seed, vs.set_id)
