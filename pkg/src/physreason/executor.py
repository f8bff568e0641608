"""Symbolic execution of programs over a world bundle.

A :class:`World` holds the observed target record, the (observed or
predicted) continuation, a property graph and any counterfactual records the
caller has already simulated. Execution never simulates anything itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from . import vocab
from .core import BodyState, EventRecord, PropertyGraph, SceneRecord, VideoSet
from .program import OPERATIONS, Program, infer_types

MOVING_THRESHOLD = 0.05

COUNTERFACTUAL_OPS = (
    "counterfactual_mass_heavy",
    "counterfactual_mass_light",
    "counterfactual_uncharged",
    "counterfactual_opposite_charged",
)


@dataclass(frozen=True)
class Marker:
    """The special start/end events."""

    kind: str
    frame: int
    participants: tuple = ()


@dataclass(frozen=True)
class Value:
    tag: str
    data: Any

    def to_answer(self) -> str:
        if self.tag == "bool":
            return "yes" if self.data else "no"
        if self.tag in ("int", "frame"):
            return str(self.data)
        if self.tag == "attr":
            return self.data
        if self.tag == "object":
            return f"object {self.data}"
        if self.tag == "objects":
            return ", ".join(f"object {i}" for i in self.data)
        return repr(self.data)

    def to_json(self) -> dict:
        def ev(e):
            if isinstance(e, Marker):
                return {"kind": e.kind, "frame": e.frame}
            return e.to_dict()

        if self.tag == "events":
            data = [ev(e) for e in self.data]
        elif self.tag == "event":
            data = ev(self.data)
        elif self.tag == "objects":
            data = list(self.data)
        else:
            data = self.data
        return {"type": self.tag, "value": data, "answer": self.to_answer()}


class ExecutionError(RuntimeError):
    def __init__(self, message: str, op_index: int, category: str = "execution"):
        self.op_index = op_index
        self.category = category
        super().__init__(f"op {op_index}: {message}")


@dataclass(frozen=True)
class World:
    target: SceneRecord
    properties: PropertyGraph
    future: Optional[SceneRecord] = None
    counterfactuals: Mapping[tuple[str, int], SceneRecord] = field(default_factory=dict)
    moving_threshold: float = MOVING_THRESHOLD

    @classmethod
    def oracle(cls, vs: VideoSet, counterfactuals=None) -> "World":
        return cls(vs.target, PropertyGraph.from_roster(vs.roster), vs.future, dict(counterfactuals or {}))

    def obj(self, obj_id: int):
        return self.target.objects[self.target.index_of(obj_id)]


def moving_predicate(state: BodyState, threshold: float = MOVING_THRESHOLD) -> bool:
    return math.hypot(*state.velocity) > threshold


def direction_name(vx: float, vy: float) -> str:
    octant = int(round(math.atan2(vy, vx) / (math.pi / 4))) % 8
    return vocab.DIRECTIONS[octant]


def _sorted_events(events):
    return sorted(events, key=lambda e: (e.frame, vocab.EVENT_KINDS.index(e.kind) if e.kind in vocab.EVENT_KINDS else -1,
                                         e.participants, getattr(e, "end_frame", None) or 0))


def execute(program: Program, world: World) -> Value:
    """Evaluate ``program`` bottom-up and return the output node's value."""
    types = infer_types(program)
    values: list[Value] = []
    for i, node in enumerate(program.nodes):
        args = [values[a] if isinstance(a, int) else a for a in node.args]
        try:
            v = _apply(node.name, args, world, i)
        except ExecutionError:
            raise
        except (KeyError, ValueError, IndexError) as exc:
            raise ExecutionError(str(exc), i, "bad_argument") from exc
        if v.tag != types[i]:
            raise ExecutionError(f"{node.name} produced {v.tag}, expected {types[i]}", i, "type")
        values.append(v)
    return values[-1]


def _as_set(v: Value) -> tuple:
    return (v.data,) if v.tag in ("object", "event") else tuple(v.data)


HANDLERS: dict = {}


def _op(*names):
    def register(fn):
        for n in names:
            HANDLERS[n] = fn
        return fn
    return register


def _apply(name: str, args: list, world: World, i: int) -> Value:
    handler = HANDLERS.get(name)
    if handler is None:
        raise ExecutionError(f"no executor clause for {name!r}", i, "unknown_op")
    return handler(name, args, world, i)


@_op("objects")
def _objects(name, args, world, i):
    return Value("objects", tuple(sorted(world.target.ids)))


@_op("events")
def _events(name, args, world, i):
    return Value("events", tuple(_sorted_events(world.target.events)))


@_op("unseen_events")
def _unseen(name, args, world, i):
    if world.future is None:
        raise ExecutionError("missing future world", i, "missing_future")
    return Value("events", tuple(_sorted_events(world.future.events)))


@_op("start", "end")
def _marker(name, args, world, i):
    return Value("event", Marker(name, 0 if name == "start" else world.target.n_frames - 1))


@_op("filter_heavy", "filter_light")
def _filter_mass(name, args, world, i):
    want = name.split("_")[1]
    return Value("objects", tuple(o for o in _as_set(args[0]) if world.properties.mass(o) == want))


@_op("filter_charged", "filter_uncharged")
def _filter_charge(name, args, world, i):
    want = name == "filter_charged"
    return Value("objects", tuple(o for o in _as_set(args[0]) if world.properties.is_charged(o) == want))


@_op("filter_static_attr")
def _filter_static(name, args, world, i):
    return Value("objects", tuple(o for o in _as_set(args[0]) if args[1] in world.obj(o).triple))


@_op("filter_dynamic_attr")
def _filter_dynamic(name, args, world, i):
    attr, frame = args[1], args[2].data
    return Value("objects", tuple(
        o for o in _as_set(args[0])
        if moving_predicate(world.target.state(frame, o), world.moving_threshold) == (attr == "moving")
    ))


@_op("filter_event")
def _filter_event(name, args, world, i):
    objs = set(_as_set(args[1]))
    return Value("events", tuple(e for e in _as_set(args[0]) if objs & set(e.participants)))


@_op("filter_kind")
def _filter_kind(name, args, world, i):
    return Value("events", tuple(e for e in _as_set(args[0]) if e.kind == args[1]))


@_op("get_col_partner")
def _col_partner(name, args, world, i):
    ev, obj = args[0].data, args[1].data
    if getattr(ev, "kind", None) != "collision" or obj not in ev.participants:
        raise ExecutionError(f"object {obj} is not a participant of a collision", i, "bad_argument")
    return Value("object", next(p for p in ev.participants if p != obj))


@_op("filter_before", "filter_after")
def _filter_time(name, args, world, i):
    ref = _as_set(args[1])
    if not ref:
        raise ExecutionError("empty reference event set", i, "bad_argument")
    t = min(e.frame for e in ref)
    if name == "filter_before":
        return Value("events", tuple(e for e in _as_set(args[0]) if e.frame < t))
    return Value("events", tuple(e for e in _as_set(args[0]) if e.frame > t))


@_op("filter_order")
def _filter_order(name, args, world, i):
    evs = _sorted_events(_as_set(args[0]))
    k = {"first": 0, "second": 1, "third": 2, "last": -1}[args[1]]
    if not evs or k >= len(evs):
        raise ExecutionError(f"no {args[1]} event", i, "bad_argument")
    return Value("event", evs[k])


@_op("get_frame")
def _get_frame(name, args, world, i):
    return Value("frame", int(args[0].data.frame))


@_op("unique")
def _unique(name, args, world, i):
    items = _as_set(args[0])
    if len(items) != 1:
        raise ExecutionError(f"non-unique referent ({len(items)} candidates)", i, "non_unique")
    return Value("object" if args[0].tag in ("objects", "object") else "event", items[0])


@_op(*COUNTERFACTUAL_OPS)
def _counterfactual(name, args, world, i):
    key = (name, args[0].data)
    if key not in world.counterfactuals:
        raise ExecutionError(f"missing counterfactual world {key}", i, "missing_counterfactual")
    return Value("events", tuple(_sorted_events(world.counterfactuals[key].events)))


@_op("query_attribute")
def _query(name, args, world, i):
    return Value("attr", getattr(world.obj(args[0].data), args[1]))


@_op("query_both_attribute")
def _query_both(name, args, world, i):
    objs = sorted(_as_set(args[0]))
    if len(objs) != 2:
        raise ExecutionError(f"expected two objects, got {len(objs)}", i, "non_unique")
    return Value("attr", " and ".join(getattr(world.obj(o), args[1]) for o in objs))


@_op("query_direction")
def _direction(name, args, world, i):
    st = world.target.state(args[1].data, args[0].data)
    if not moving_predicate(st, world.moving_threshold):
        return Value("attr", "stationary")
    return Value("attr", direction_name(*st.velocity))


@_op("is_heavier", "is_lighter")
def _mass_compare(name, args, world, i):
    a, b = world.properties.mass(args[0].data), world.properties.mass(args[1].data)
    if name == "is_heavier":
        return Value("bool", a == "heavy" and b == "light")
    return Value("bool", a == "light" and b == "heavy")


@_op("is_same_charged", "is_opposite_charged")
def _charge_compare(name, args, world, i):
    want = "same" if name == "is_same_charged" else "opposite"
    return Value("bool", world.properties.edge(args[0].data, args[1].data) == want)


@_op("count")
def _count(name, args, world, i):
    return Value("int", len(_as_set(args[0])))


@_op("exist")
def _exist(name, args, world, i):
    return Value("bool", len(_as_set(args[0])) > 0)


@_op("belong_to")
def _belong(name, args, world, i):
    return Value("bool", args[0].data in _as_set(args[1]))


@_op("negate")
def _negate(name, args, world, i):
    return Value("bool", not args[0].data)
