"""Recover hidden mass and charge labels for one generated set by re-simulation.

    python demos/hidden_properties.py [seed]
"""
import sys

from physreason.core import PropertyGraph
from physreason.inference import graph_matches, infer_by_enumeration, infer_from_events
from physreason.scene_gen import GenConfig, generate_video_set

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 12
vs = generate_video_set(GenConfig(), seed, "demo")

print("roster (hidden properties shown for reference):")
for o in vs.roster:
    print(f"  {o.id}: {o.color} {o.material} {o.shape:9s} mass={o.mass:5s} charge={o.charge}")

print("\nreference videos:")
for k, ref in enumerate(vs.references):
    events = ", ".join(f"{e.kind}{e.participants}@{e.frame}" for e in ref.interactions())
    print(f"  ref {k} objects {ref.ids}: {events}")

res = infer_by_enumeration(vs)
print(f"\n{len(res.ranking)} hypotheses scored; five best:")
for s in res.ranking[:5]:
    heavy = [i for i, m in s.hypothesis.mass if m > 1] or "-"
    charged = {i: q for i, q in s.hypothesis.charge if q}
    print(f"  heavy {heavy!s:6s} charges {charged!s:18s} score {s.total:.3e}")

truth = PropertyGraph.from_roster(vs.roster)
print("\nenumeration graph matches truth:", graph_matches(res.graph, truth))
for (a, b), (label, conf) in res.graph.edge_charge.items():
    if label != "none":
        print(f"  edge {a}-{b}: {label} (confidence {conf:.3f})")

rules = infer_from_events(vs.references)
print("event rules alone label", len(rules.node_mass), "masses and", len(rules.edge_charge), "edges")
