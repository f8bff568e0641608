"""Domain types of the world model, their validation and JSON (de)serialization.

All types are immutable after construction. Trajectory arrays inside
:class:`SceneRecord` are stored read-only.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from . import vocab
from .program import Program, format_program, parse_program


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    color: str
    shape: str
    material: str
    mass: str = "light"
    charge: str = "neutral"

    def __post_init__(self):
        for value, allowed, label in (
            (self.color, vocab.COLORS, "color"),
            (self.shape, vocab.SHAPES, "shape"),
            (self.material, vocab.MATERIALS, "material"),
            (self.mass, vocab.MASS_LEVELS, "mass"),
            (self.charge, vocab.CHARGE_TYPES, "charge"),
        ):
            if value not in allowed:
                raise ValidationError(f"object {self.id}: invalid {label} {value!r}")

    @property
    def mass_value(self) -> float:
        return vocab.MASS_VALUE[self.mass]

    @property
    def charge_value(self) -> int:
        return vocab.CHARGE_VALUE[self.charge]

    @property
    def radius(self) -> float:
        return vocab.SHAPE_RADIUS[self.shape]

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.color, self.shape, self.material)

    @property
    def is_charged(self) -> bool:
        return self.charge != "neutral"

    def to_dict(self) -> dict:
        return {"id": self.id, "color": self.color, "shape": self.shape, "material": self.material,
                "mass": self.mass, "charge": self.charge}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ObjectSpec":
        return cls(int(d["id"]), d["color"], d["shape"], d["material"], d["mass"], d["charge"])


@dataclass(frozen=True)
class BodyState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "velocity", tuple(float(x) for x in self.velocity))
        if len(self.position) != 2 or len(self.velocity) != 2:
            raise ValidationError("position and velocity must be 2-vectors")
        if not all(math.isfinite(x) for x in (*self.position, *self.velocity, self.radius)):
            raise ValidationError("non-finite body state")
        if self.radius <= 0:
            raise ValidationError("radius must be positive")

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class EventRecord:
    """An event. ``frame`` is the onset; interval events also carry ``end_frame``."""

    kind: str
    participants: tuple[int, ...]
    frame: int
    end_frame: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "participants", tuple(int(p) for p in self.participants))
        if self.kind not in vocab.EVENT_KINDS:
            raise ValidationError(f"unknown event kind {self.kind!r}")
        want = 1 if self.kind in ("in", "out") else 2
        if len(self.participants) != want:
            raise ValidationError(f"{self.kind} event needs {want} participant(s)")
        if want == 2 and self.participants[0] == self.participants[1]:
            raise ValidationError("an object cannot interact with itself")
        if self.frame < 0 or (self.end_frame is not None and self.end_frame < self.frame):
            raise ValidationError("bad event frame range")

    @property
    def pair(self) -> frozenset:
        return frozenset(self.participants)

    @property
    def is_interaction(self) -> bool:
        return self.kind in vocab.INTERACTION_KINDS

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "participants": list(self.participants), "frame": self.frame}
        if self.end_frame is not None:
            d["end_frame"] = self.end_frame
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EventRecord":
        return cls(d["kind"], tuple(d["participants"]), int(d["frame"]), d.get("end_frame"))


def _frozen_array(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SceneRecord:
    """Recorded video: ``positions``/``velocities`` have shape (frames, objects, 2).

    ``contacts`` is the simulator's contact log, ``(frame, id_a, id_b)`` per
    contact episode onset; ``None`` for trajectories without one (e.g. learned
    rollouts), in which case collisions are recovered from frames.
    """

    objects: tuple[ObjectSpec, ...]
    positions: np.ndarray
    velocities: np.ndarray
    duration_s: float
    fps: int = 25
    events: tuple[EventRecord, ...] = ()
    kind: str = "target"
    contacts: Optional[tuple[tuple[int, int, int], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "positions", _frozen_array(self.positions))
        object.__setattr__(self, "velocities", _frozen_array(self.velocities))
        object.__setattr__(self, "events", tuple(self.events))
        if self.contacts is not None:
            object.__setattr__(self, "contacts", tuple(tuple(int(x) for x in c) for c in self.contacts))
        n = len(self.objects)
        if self.positions.ndim != 3 or self.positions.shape[1:] != (n, 2):
            raise ValidationError(f"positions must have shape (frames, {n}, 2)")
        if self.velocities.shape != self.positions.shape:
            raise ValidationError("velocities must match positions")
        if self.n_frames != round(self.duration_s * self.fps):
            raise ValidationError(f"{self.n_frames} frames recorded, expected {round(self.duration_s * self.fps)}")
        if self.kind not in vocab.SCENE_KINDS:
            raise ValidationError(f"unknown scene kind {self.kind!r}")
        ids = set(self.ids)
        for ev in self.events:
            if not set(ev.participants) <= ids:
                raise ValidationError(f"event {ev} references an absent object")
            if ev.frame >= self.n_frames or (ev.end_frame or 0) >= self.n_frames:
                raise ValidationError(f"event {ev} outside the recorded frames")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(o.id for o in self.objects)

    @property
    def radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.objects])

    def index_of(self, obj_id: int) -> int:
        return self.ids.index(obj_id)

    def state(self, frame: int, obj_id: int) -> BodyState:
        i = self.index_of(obj_id)
        return BodyState(self.positions[frame, i], self.velocities[frame, i], self.objects[i].radius)

    def interactions(self) -> list[EventRecord]:
        return [e for e in self.events if e.is_interaction]

    def __eq__(self, other):
        if not isinstance(other, SceneRecord):
            return NotImplemented
        return (self.objects == other.objects and self.duration_s == other.duration_s
                and self.fps == other.fps and self.events == other.events and self.kind == other.kind
                and self.contacts == other.contacts
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.velocities, other.velocities))

    def to_dict(self) -> dict:
        frames = np.concatenate([self.positions, self.velocities], axis=2)
        d = {
            "kind": self.kind,
            "objects": [o.id for o in self.objects],
            "duration_s": self.duration_s,
            "fps": self.fps,
            "radii": [o.radius for o in self.objects],
            "frames": frames.tolist(),
            "events": [e.to_dict() for e in self.events],
        }
        if self.contacts is not None:
            d["contacts"] = [list(c) for c in self.contacts]
        return d

    @classmethod
    def from_dict(cls, d: Mapping, roster: Mapping[int, ObjectSpec]) -> "SceneRecord":
        frames = np.array(d["frames"], dtype=np.float64).reshape(-1, len(d["objects"]), 4)
        contacts = d.get("contacts")
        return cls(
            objects=tuple(roster[i] for i in d["objects"]),
            positions=frames[:, :, :2],
            velocities=frames[:, :, 2:],
            duration_s=float(d["duration_s"]),
            fps=int(d["fps"]),
            events=tuple(EventRecord.from_dict(e) for e in d["events"]),
            kind=d["kind"],
            contacts=None if contacts is None else tuple(tuple(c) for c in contacts),
        )


@dataclass(frozen=True)
class Choice:
    text: str
    program: Program
    answer: bool

    def to_dict(self) -> dict:
        return {"text": self.text, "program": format_program(self.program), "answer": self.answer}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Choice":
        return cls(d["text"], parse_program(d["program"]), bool(d["answer"]))


@dataclass(frozen=True)
class Question:
    text: str
    qtype: str
    program: Program
    choices: Optional[tuple[Choice, ...]] = None
    answer: Optional[str] = None
    template: str = ""
    qid: str = ""

    def __post_init__(self):
        if self.qtype not in vocab.QTYPES:
            raise ValidationError(f"unknown question type {self.qtype!r}")
        if self.qtype == "factual":
            if self.choices is not None or self.answer is None:
                raise ValidationError("factual questions carry an answer and no choices")
        else:
            if self.choices is None or len(self.choices) < 2:
                raise ValidationError(f"{self.qtype} questions need at least two choices")
            object.__setattr__(self, "choices", tuple(self.choices))

    @property
    def is_multiple_choice(self) -> bool:
        return self.choices is not None

    def to_dict(self) -> dict:
        d = {"qid": self.qid, "template": self.template, "qtype": self.qtype, "text": self.text,
             "program": format_program(self.program)}
        if self.choices is not None:
            d["choices"] = [c.to_dict() for c in self.choices]
        else:
            d["answer"] = self.answer
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Question":
        choices = d.get("choices")
        return cls(
            text=d["text"], qtype=d["qtype"], program=parse_program(d["program"]),
            choices=None if choices is None else tuple(Choice.from_dict(c) for c in choices),
            answer=d.get("answer"), template=d.get("template", ""), qid=d.get("qid", ""),
        )


@dataclass(frozen=True)
class VideoSet:
    roster: tuple[ObjectSpec, ...]
    target: SceneRecord
    references: tuple[SceneRecord, ...]
    future: SceneRecord
    questions: tuple[Question, ...] = ()
    seed: Optional[int] = None
    set_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "roster", tuple(self.roster))
        object.__setattr__(self, "references", tuple(self.references))
        object.__setattr__(self, "questions", tuple(self.questions))

    def obj(self, obj_id: int) -> ObjectSpec:
        for o in self.roster:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    @property
    def records(self) -> tuple[SceneRecord, ...]:
        """Observed videos: references first, then the target."""
        return self.references + (self.target,)

    def with_questions(self, questions: Iterable[Question]) -> "VideoSet":
        return VideoSet(self.roster, self.target, self.references, self.future, tuple(questions),
                        self.seed, self.set_id)

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "seed": self.seed,
            "roster": [o.to_dict() for o in self.roster],
            "target": self.target.to_dict(),
            "references": [r.to_dict() for r in self.references],
            "future": self.future.to_dict(),
            "questions": [q.to_dict() for q in self.questions],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "VideoSet":
        roster = tuple(ObjectSpec.from_dict(o) for o in d["roster"])
        by_id = {o.id: o for o in roster}
        return cls(
            roster=roster,
            target=SceneRecord.from_dict(d["target"], by_id),
            references=tuple(SceneRecord.from_dict(r, by_id) for r in d["references"]),
            future=SceneRecord.from_dict(d["future"], by_id),
            questions=tuple(Question.from_dict(q) for q in d.get("questions", ())),
            seed=d.get("seed"),
            set_id=d.get("set_id", ""),
        )


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class PropertyGraph:
    """Mass labels on nodes and relative-charge labels on unordered edges.

    ``node_mass`` maps id -> (label, confidence); ``edge_charge`` maps a sorted
    id pair -> (label, confidence). Missing keys mean "unlabeled".
    """

    node_mass: Mapping[int, tuple[str, float]] = field(default_factory=dict)
    edge_charge: Mapping[tuple[int, int], tuple[str, float]] = field(default_factory=dict)
    ambiguous: bool = False

    def __post_init__(self):
        nodes = {int(k): (v[0], float(v[1])) for k, v in self.node_mass.items()}
        edges = {}
        for (a, b), (label, conf) in self.edge_charge.items():
            key = _pair(int(a), int(b))
            if key in edges and edges[key][0] != label:
                raise ValidationError(f"asymmetric edge labels for {key}")
            edges[key] = (label, float(conf))
        for label, conf in (*nodes.values(), *edges.values()):
            if not 0.0 <= conf <= 1.0:
                raise ValidationError(f"confidence {conf} outside [0, 1]")
        if any(v[0] not in vocab.MASS_LEVELS for v in nodes.values()):
            raise ValidationError("invalid mass label")
        if any(v[0] not in vocab.EDGE_LABELS for v in edges.values()):
            raise ValidationError("invalid edge label")
        object.__setattr__(self, "node_mass", dict(sorted(nodes.items())))
        object.__setattr__(self, "edge_charge", dict(sorted(edges.items())))

    @classmethod
    def from_roster(cls, roster: Iterable[ObjectSpec]) -> "PropertyGraph":
        roster = list(roster)
        nodes = {o.id: (o.mass, 1.0) for o in roster}
        edges = {}
        for a, b in itertools.combinations(roster, 2):
            edges[_pair(a.id, b.id)] = (relative_charge(a.charge_value, b.charge_value), 1.0)
        return cls(nodes, edges)

    def mass(self, obj_id: int) -> Optional[str]:
        v = self.node_mass.get(obj_id)
        return v[0] if v else None

    def edge(self, a: int, b: int) -> Optional[str]:
        v = self.edge_charge.get(_pair(a, b))
        return v[0] if v else None

    def is_charged(self, obj_id: int) -> bool:
        return any(obj_id in k and v[0] != "none" for k, v in self.edge_charge.items())

    def signed_assignment(self, ids: Iterable[int]) -> Optional[dict[int, int]]:
        """A canonical {+1, 0, -1} assignment realizing every labeled edge, or None if impossible.

        Unlabeled edges are unconstrained; objects with no charged edge are neutral.
        """
        ids = sorted(set(ids) | {i for k in self.edge_charge for i in k})
        charged = {i for i in ids if self.is_charged(i)}
        for signs in itertools.product((1, -1), repeat=len(charged)):
            q = {i: 0 for i in ids}
            q.update(dict(zip(sorted(charged), signs)))
            if all(relative_charge(q[a], q[b]) == lab for (a, b), (lab, _) in self.edge_charge.items()):
                return canonicalize_charges(q)
        return None

    def is_consistent(self) -> bool:
        return self.signed_assignment(()) is not None

    def to_dict(self) -> dict:
        return {
            "node_mass": [{"id": k, "label": v[0], "confidence": v[1]} for k, v in self.node_mass.items()],
            "edge_charge": [{"pair": list(k), "label": v[0], "confidence": v[1]} for k, v in self.edge_charge.items()],
            "ambiguous": self.ambiguous,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PropertyGraph":
        return cls(
            {int(n["id"]): (n["label"], n["confidence"]) for n in d["node_mass"]},
            {tuple(e["pair"]): (e["label"], e["confidence"]) for e in d["edge_charge"]},
            bool(d.get("ambiguous", False)),
        )


def relative_charge(qa: int, qb: int) -> str:
    p = qa * qb
    return "same" if p > 0 else "opposite" if p < 0 else "none"


def canonicalize_charges(assignment: Mapping[int, Any]) -> dict:
    """Pick the sign-flip representative whose lowest-id charged object is positive.

    Values may be numeric (+1/0/-1) or charge names; the output keeps the input's form.
    """
    def num(v):
        return vocab.CHARGE_VALUE[v] if isinstance(v, str) else int(v)

    charged = sorted(k for k, v in assignment.items() if num(v) != 0)
    if not charged or num(assignment[charged[0]]) > 0:
        return dict(assignment)
    flip = {"positive": "negative", "negative": "positive", "neutral": "neutral"}
    return {k: (flip[v] if isinstance(v, str) else -num(v)) for k, v in assignment.items()}


def validate_video_set(vs: VideoSet) -> list[str]:
    """Every violated set-level invariant, one message each; empty when the set is valid."""
    problems = []
    ids = [o.id for o in vs.roster]
    if len(set(ids)) != len(ids):
        problems.append(f"duplicate object ids: {sorted(k for k, c in Counter(ids).items() if c > 1)}")
    triples = Counter(o.triple for o in vs.roster)
    for triple, count in triples.items():
        if count > 1:
            dup = [o.id for o in vs.roster if o.triple == triple]
            problems.append(f"attribute triple violation: ids {dup} share {' '.join(triple)}")
    charged = [o.id for o in vs.roster if o.is_charged]
    if len(charged) not in (0, 2):
        problems.append(f"charge-pair violation: {len(charged)} charged {charged}")
    heavy = [o.id for o in vs.roster if o.mass == "heavy"]
    if len(heavy) > 1:
        problems.append(f"mass violation: {len(heavy)} heavy {heavy}")
    if len(vs.references) != 4:
        problems.append(f"reference count violation: {len(vs.references)} references")
    covered = {i for r in vs.references for i in r.ids}
    for i in ids:
        if i not in covered:
            problems.append(f"coverage violation: object {i} absent from references")
    for k, r in enumerate(vs.references):
        if not r.interactions():
            problems.append(f"reference {k} lacks interaction")
    for r in (vs.target, vs.future, *vs.references):
        stray = set(r.ids) - set(ids)
        if stray:
            problems.append(f"{r.kind} record references unknown objects {sorted(stray)}")
    return problems


def dumps(vs: VideoSet) -> str:
    return json.dumps(vs.to_dict(), separators=(",", ":"))


def loads(text: str) -> VideoSet:
    return VideoSet.from_dict(json.loads(text))
