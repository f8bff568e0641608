"""Property edits and the re-simulations behind counterfactual and future worlds."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Mapping, Sequence

from .core import ObjectSpec, SceneRecord
from .executor import COUNTERFACTUAL_OPS
from .physics import InitialConditions, PhysicsConfig, continue_record, simulate

_FLIP = {"positive": "negative", "negative": "positive", "neutral": "neutral"}


def edit_object(obj: ObjectSpec, op: str) -> ObjectSpec:
    if op == "counterfactual_mass_heavy":
        return replace(obj, mass="heavy")
    if op == "counterfactual_mass_light":
        return replace(obj, mass="light")
    if op == "counterfactual_uncharged":
        return replace(obj, charge="neutral")
    if op == "counterfactual_opposite_charged":
        return replace(obj, charge=_FLIP[obj.charge])
    if op == "identity":
        return obj
    raise ValueError(f"unknown edit {op!r}")


def edited(objects: Sequence[ObjectSpec], op: str, obj_id: int) -> list[ObjectSpec]:
    return [edit_object(o, op) if o.id == obj_id else o for o in objects]


def counterfactual_record(target: SceneRecord, objects: Sequence[ObjectSpec], op: str, obj_id: int,
                          cfg: PhysicsConfig = PhysicsConfig()) -> SceneRecord:
    """Re-simulate the target from its first frame with one object's property edited.

    ``objects`` carries the (true or inferred) properties of the target's objects.
    """
    by_id = {o.id: o for o in objects}
    objs = edited([by_id[i] for i in target.ids], op, obj_id)
    init = InitialConditions.from_record(target, 0, objs)
    rec = simulate(init, target.duration_s, cfg, kind="counterfactual")
    return rec


def future_record(target: SceneRecord, objects: Sequence[ObjectSpec], duration_s: float,
                  cfg: PhysicsConfig = PhysicsConfig()) -> SceneRecord:
    by_id = {o.id: o for o in objects}
    return continue_record(target, duration_s, cfg, [by_id[i] for i in target.ids])


def counterfactual_worlds(target: SceneRecord, objects: Sequence[ObjectSpec],
                          edits: Iterable[tuple[str, int]],
                          cfg: PhysicsConfig = PhysicsConfig()) -> dict[tuple[str, int], SceneRecord]:
    out = {}
    for op, obj_id in sorted(set(edits)):
        if op not in COUNTERFACTUAL_OPS:
            raise ValueError(f"not a counterfactual operation: {op}")
        out[(op, obj_id)] = counterfactual_record(target, objects, op, obj_id, cfg)
    return out


def objects_with(roster: Sequence[ObjectSpec], mass: Mapping[int, str], charge: Mapping[int, int]) -> list[ObjectSpec]:
    """Roster copies carrying the given mass labels and signed charges."""
    name = {1: "positive", -1: "negative", 0: "neutral"}
    return [replace(o, mass=mass.get(o.id, o.mass), charge=name[charge.get(o.id, 0)]) for o in roster]
