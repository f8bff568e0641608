"""Random well-typed programs for round-trip testing."""

import random

from physreason.program import LITERAL_SETS, OPERATIONS, Program, build

_ACCEPT = {"objects": {"objects", "object"}, "events": {"events", "event"}}


def _outputs(name):
    sig = OPERATIONS[name]
    if callable(sig.output):
        return {"object", "event"}
    return {sig.output}


def _height():
    h = {}
    changed = True
    while changed:
        changed = False
        for name, sig in OPERATIONS.items():
            need = 0
            ok = True
            for p in sig.params:
                if p[0] in LITERAL_SETS:
                    continue
                opts = [h[t] for e in p for t in _ACCEPT.get(e, {e}) if t in h]
                if not opts:
                    ok = False
                    break
                need = max(need, min(opts) + 1)
            if ok:
                for t in _outputs(name):
                    if need < h.get(t, 10 ** 6):
                        h[t] = need
                        changed = True
    return h


HEIGHT = _height()


def random_program(rng: random.Random, want=("bool", "int", "attr", "objects", "events"), depth=6) -> Program:
    want = set(want)
    names = [n for n in OPERATIONS if _outputs(n) & want]
    if depth <= 0:
        names = [n for n in names if all(p[0] in LITERAL_SETS for p in OPERATIONS[n].params)] or \
            [n for n in names if min(HEIGHT.get(t, 99) for t in _outputs(n) & want) <= 1]
    name = rng.choice(sorted(names))
    sig = OPERATIONS[name]
    args = []
    for p in sig.params:
        if p[0] in LITERAL_SETS:
            args.append(rng.choice(LITERAL_SETS[p[0]]))
        else:
            accepted = set()
            for e in p:
                accepted |= _ACCEPT.get(e, {e})
            if name == "unique":
                accepted &= {"objects", "events"} if "object" in want or "event" in want else accepted
                if "object" in want and "event" not in want:
                    accepted = {"objects"}
                elif "event" in want and "object" not in want:
                    accepted = {"events"}
            args.append(random_program(rng, tuple(accepted), depth - 1))
    return build(name, *args)
