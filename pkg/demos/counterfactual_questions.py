"""Walk through the questions of one set: program, answer, and the worlds it runs on.

    python demos/counterfactual_questions.py [seed]
"""
import sys

import numpy as np

from physreason.executor import execute
from physreason.pipeline import build_worlds, question_rng
from physreason.questions import generate_questions
from physreason.scene_gen import GenConfig, generate_video_set

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
vs = generate_video_set(GenConfig(), seed, "demo")
vs = vs.with_questions(generate_questions(vs, question_rng(seed)))
world = build_worlds(vs, mode="oracle")


def events(record):
    return ", ".join(f"{e.kind}{e.participants}@{e.frame}" for e in record.interactions()) or "none"


print("target:", events(world.target))
print("future:", events(world.future))
for (op, obj), rec in sorted(world.counterfactuals.items()):
    print(f"{op}({obj}):", events(rec))

for q in vs.questions:
    print(f"\n[{q.qtype}] {q.text}")
    print("   ", q.program)
    if q.choices is None:
        print("    ->", execute(q.program, world).to_answer())
        continue
    for c in q.choices:
        got = bool(execute(c.program, world).data)
        print(f"    {'x' if got else ' '} {c.text}")

frames = np.asarray(world.target.positions)
print(f"\ntarget spans {len(frames)} frames; mean speed {np.abs(np.diff(frames, axis=0)).sum(-1).mean() * 25:.2f} units/s")
