import itertools
import logging

import numpy as np
import pytest

from physreason.core import ObjectSpec, PropertyGraph, canonicalize_charges
from physreason.inference import (
    _restricted_key,
    enumerate_hypotheses,
    fuse_subgraphs,
    graph_matches,
    infer,
    infer_by_enumeration,
    infer_from_events,
    trajectory_discrepancy,
)
from physreason.physics import InitialConditions, PhysicsConfig, simulate
from physreason.scene_gen import sign_flipped


def obj(i, mass="light", charge="neutral", color="red"):
    return ObjectSpec(i, color, "sphere", "metal", mass=mass, charge=charge)


def test_repulsion_gives_same_charge():
    init = InitialConditions((obj(0, charge="positive"), obj(1, charge="positive", color="blue")),
                             [[-0.6, 0], [0.6, 0]], [[0, 0], [0, 0]])
    g = infer_from_events([simulate(init, 2.0)])
    assert g.edge(0, 1) == "same"


def test_attraction_gives_opposite_charge():
    init = InitialConditions((obj(0, charge="positive"), obj(1, charge="negative", color="blue")),
                             [[-1.0, 0], [1.0, 0]], [[0, 0.3], [0, -0.3]])
    g = infer_from_events([simulate(init, 2.0)])
    assert g.edge(0, 1) == "opposite"


def test_heavy_light_collision_sets_masses():
    init = InitialConditions((obj(0, mass="heavy"), obj(1, color="blue")),
                             [[-1.5, 0], [0.5, 0]], [[1.5, 0], [0, 0]])
    rec = simulate(init, 2.0)
    g = infer_from_events([rec])
    assert (g.mass(0), g.mass(1)) == ("heavy", "light")
    assert g.edge(0, 1) == "none"


def test_equal_masses_both_light():
    init = InitialConditions((obj(0), obj(1, color="blue")), [[-1.5, 0], [0.5, 0]], [[1.5, 0], [0, 0]])
    g = infer_from_events([simulate(init, 2.0)])
    assert (g.mass(0), g.mass(1)) == ("light", "light")


def test_fuse_keeps_most_confident_label(caplog):
    a = PropertyGraph({0: ("heavy", 0.6)}, {(0, 1): ("same", 0.9)})
    b = PropertyGraph({0: ("light", 0.8), 1: ("light", 0.7)}, {})
    with caplog.at_level(logging.WARNING, logger="physreason"):
        fused = fuse_subgraphs([a, b])
    assert fused.node_mass == {0: ("light", 0.8), 1: ("light", 0.7)}
    assert fused.edge(0, 1) == "same"
    assert "conflicting node 0" in caplog.text
    caplog.clear()
    fuse_subgraphs([a, b], quiet=True)
    assert caplog.text == ""


def _brute_force_count(n):
    ids = range(n)
    seen = set()
    for masses in itertools.product((1.0, 5.0), repeat=n):
        if sum(m > 1 for m in masses) > 1:
            continue
        for q in itertools.product((-1, 0, 1), repeat=n):
            nz = sum(v != 0 for v in q)
            if nz not in (0, 2):
                continue
            canon = canonicalize_charges(dict(zip(ids, q)))
            seen.add((masses, tuple(sorted(canon.items()))))
    return len(seen)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_hypothesis_space_size(n):
    hyps = enumerate_hypotheses(range(n))
    assert len(hyps) == len(set(hyps)) == _brute_force_count(n)


def test_true_hypothesis_reproduces_videos(video_sets):
    cfg = PhysicsConfig()
    vs = video_sets[0]
    truth_graph = PropertyGraph.from_roster(vs.roster)
    truth = next(h for h in enumerate_hypotheses([o.id for o in vs.roster]) if graph_matches(h.graph(), truth_graph))
    for rec in vs.references:
        assert trajectory_discrepancy(rec, _restricted_key(truth, rec.ids), cfg) < 1e-20


def test_enumeration_recovers_generated_sets(video_sets):
    hits = [graph_matches(infer_by_enumeration(vs).graph, PropertyGraph.from_roster(vs.roster))
            for vs in video_sets]
    assert sum(hits) >= len(hits) - 1


def test_enumeration_is_sign_flip_invariant(video_sets):
    for vs in video_sets[:4]:
        assert infer_by_enumeration(vs).graph == infer_by_enumeration(sign_flipped(vs)).graph


def test_enumeration_agrees_with_charge_events(video_sets):
    for vs in video_sets:
        g = infer(vs)
        for rec in vs.records:
            for e in rec.events:
                if e.kind in ("attraction", "repulsion"):
                    assert g.edge(*e.participants) == ("same" if e.kind == "repulsion" else "opposite")


def test_uninformative_video_is_ambiguous():
    roster = (obj(0), obj(1, color="blue"))
    init = InitialConditions(roster, [[-3, -3], [3, 3]], [[0.5, 0], [-0.5, 0]])
    rec = simulate(init, 2.0)
    from physreason.core import VideoSet

    vs = VideoSet(roster, rec, (rec,) * 4, rec)
    res = infer_by_enumeration(vs, records=[rec])
    assert res.ambiguous
    assert res.graph.ambiguous
    assert all(conf == 0.5 for _, conf in res.graph.node_mass.values())


def test_neutral_set_has_no_charge_edges(video_sets):
    neutral = [vs for vs in video_sets if not any(o.is_charged for o in vs.roster)]
    assert neutral
    for vs in neutral:
        g = infer(vs)
        assert {lab for lab, _ in g.edge_charge.values()} == {"none"}


def test_unknown_method():
    with pytest.raises(ValueError):
        infer(None, method="guess")
