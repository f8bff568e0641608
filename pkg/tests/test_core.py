from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physreason.core import (
    BodyState,
    EventRecord,
    ObjectSpec,
    PropertyGraph,
    Question,
    SceneRecord,
    ValidationError,
    canonicalize_charges,
    dumps,
    loads,
    relative_charge,
    validate_video_set,
)
from physreason.program import parse_program


def test_object_spec_rejects_unknown_values():
    with pytest.raises(ValidationError):
        ObjectSpec(0, "orange", "cube", "metal")
    with pytest.raises(ValidationError):
        ObjectSpec(0, "red", "cube", "metal", mass="medium")
    o = ObjectSpec(3, "red", "cube", "rubber", "heavy", "negative")
    assert (o.mass_value, o.charge_value, o.radius) == (5.0, -1, 0.35)
    assert ObjectSpec.from_dict(o.to_dict()) == o


def test_body_state_and_event_validation():
    with pytest.raises(ValidationError):
        BodyState((0, 0), (float("inf"), 0), 0.3)
    with pytest.raises(ValidationError):
        EventRecord("collision", (1,), 0)
    with pytest.raises(ValidationError):
        EventRecord("collision", (1, 1), 0)
    with pytest.raises(ValidationError):
        EventRecord("attraction", (1, 2), 5, end_frame=3)
    e = EventRecord("repulsion", (1, 2), 3, 9)
    assert EventRecord.from_dict(e.to_dict()) == e


def test_scene_record_shape_and_immutability():
    objs = (ObjectSpec(0, "red", "cube", "metal"),)
    rec = SceneRecord(objs, np.zeros((50, 1, 2)), np.zeros((50, 1, 2)), 2.0)
    with pytest.raises(ValueError):
        rec.positions[0, 0, 0] = 1.0
    with pytest.raises(ValidationError):
        SceneRecord(objs, np.zeros((49, 1, 2)), np.zeros((49, 1, 2)), 2.0)
    with pytest.raises(ValidationError):
        SceneRecord(objs, np.zeros((50, 1, 2)), np.zeros((50, 1, 2)), 2.0,
                    events=(EventRecord("collision", (0, 7), 3),))


def test_question_shape_rules():
    p = parse_program("(count (objects))")
    with pytest.raises(ValidationError):
        Question("How many?", "factual", p)
    with pytest.raises(ValidationError):
        Question("Which?", "predictive", p, choices=())


def test_video_set_json_round_trip(video_sets):
    vs = video_sets[0]
    back = loads(dumps(vs))
    assert back.roster == vs.roster
    assert back.target == vs.target and back.future == vs.future
    assert all(a == b for a, b in zip(back.references, vs.references))


def test_generated_sets_are_valid(video_sets):
    assert all(validate_video_set(vs) == [] for vs in video_sets)


def test_validator_reports_violations(video_sets):
    vs = video_sets[0]
    roster = list(vs.roster)
    roster[0] = replace(roster[0], charge="positive")
    roster[1] = replace(roster[1], charge="positive")
    roster[2] = replace(roster[2], charge="negative")
    bad = replace(vs, roster=tuple(roster), references=vs.references[:3])
    msgs = validate_video_set(bad)
    assert any(m.startswith("charge-pair violation") for m in msgs)
    assert any(m.startswith("reference count violation") for m in msgs)


def test_property_graph_from_roster_and_assignment():
    roster = [ObjectSpec(0, "red", "cube", "metal", charge="negative"),
              ObjectSpec(1, "blue", "cube", "metal", charge="negative"),
              ObjectSpec(2, "gray", "sphere", "rubber", mass="heavy")]
    g = PropertyGraph.from_roster(roster)
    assert g.edge(1, 0) == "same" and g.edge(0, 2) == "none"
    assert g.mass(2) == "heavy" and g.is_charged(0) and not g.is_charged(2)
    assert g.signed_assignment([0, 1, 2]) == {0: 1, 1: 1, 2: 0}
    assert PropertyGraph.from_dict(g.to_dict()) == g


def test_inconsistent_graph_detected():
    g = PropertyGraph({}, {(0, 1): ("same", 1.0), (1, 2): ("same", 1.0), (0, 2): ("opposite", 1.0)})
    assert not g.is_consistent()
    with pytest.raises(ValidationError):
        PropertyGraph({0: ("light", 1.5)}, {})


charges = st.dictionaries(st.integers(0, 6), st.sampled_from([-1, 0, 1]), min_size=1)


@given(charges)
def test_canonicalization_is_idempotent_and_flip_invariant(q):
    c = canonicalize_charges(q)
    assert canonicalize_charges(c) == c
    assert canonicalize_charges({k: -v for k, v in q.items()}) == c
    for a in q:
        for b in q:
            assert relative_charge(c[a], c[b]) == relative_charge(q[a], q[b])


@given(charges)
def test_graph_of_assignment_is_flip_invariant(q):
    roster = [ObjectSpec(i, "red", "cube", "metal", charge={1: "positive", -1: "negative", 0: "neutral"}[v])
              for i, v in q.items()]
    flipped = [replace(o, charge={"positive": "negative", "negative": "positive"}.get(o.charge, o.charge))
               for o in roster]
    assert PropertyGraph.from_roster(roster) == PropertyGraph.from_roster(flipped)
