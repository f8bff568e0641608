"""Template-driven question generation, corpus balancing and NL-to-program parsing.

Every question template is a triple (renderer, regex, program builder) over a
small slot dictionary, so ``parse_question_nl(render(slots))`` rebuilds exactly
the program the generator attached. Object mentions use the shortest static
description that picks out a single object in the target video.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import vocab
from .core import Choice, ObjectSpec, Question, SceneRecord, VideoSet
from .executor import ExecutionError, World, execute, moving_predicate
from .physics import PhysicsConfig
from .program import Program, build
from .worlds import counterfactual_record

SA = tuple  # (color | None, material | None, shape | None)

TIME_TEXT = {"start": "at the beginning of the video", "end": "when the video ends"}
EDIT_OP = {
    "heavier": "counterfactual_mass_heavy",
    "lighter": "counterfactual_mass_light",
    "uncharged": "counterfactual_uncharged",
    "oppositely charged": "counterfactual_opposite_charged",
}
CF_ASKS = ("which event would happen", "which of the following would happen", "which event would not happen")
PRED_ASKS = ("Which event will happen next", "Which of the following will happen next",
             "Which event will not happen next")
CATEGORY = {"factual": "factual", "predictive": "predictive",
            "counterfactual_mass": "counterfactual", "counterfactual_charge": "counterfactual"}
DEFAULT_MIX = {"factual": 0.42, "counterfactual": 0.50, "predictive": 0.08}


class QuestionParseError(ValueError):
    pass


# ---------------------------------------------------------------- descriptions

def sa_text(sa: SA, plural: bool = False) -> str:
    color, material, shape = sa
    noun = (shape or "object") + ("s" if plural else "")
    return " ".join(w for w in (color, material, noun) if w)


def sa_program(sa: SA, base: Optional[Program] = None) -> Program:
    prog = base if base is not None else build("objects")
    for value in sa:
        if value is not None:
            prog = build("filter_static_attr", prog, value)
    return prog


def matches(obj: ObjectSpec, sa: SA) -> bool:
    return all(v is None or v == getattr(obj, k) for v, k in zip(sa, ("color", "material", "shape")))


def describe(obj: ObjectSpec) -> SA:
    return (obj.color, obj.material, obj.shape)


def unique_descriptions(obj: ObjectSpec, objects: Sequence[ObjectSpec]) -> list[SA]:
    """All shortest static descriptions that match ``obj`` and nothing else."""
    full = describe(obj)
    for size in range(1, 4):
        found = []
        for keep in itertools.combinations(range(3), size):
            sa = tuple(full[i] if i in keep else None for i in range(3))
            if sum(matches(o, sa) for o in objects) == 1:
                found.append(sa)
        if found:
            return found
    raise ValueError(f"object {obj.id} is not distinguishable by static attributes")


def _alt(words):
    return "|".join(sorted(words, key=len, reverse=True))


def _sa_re(prefix: str, plural: bool = False) -> str:
    nouns = [s + ("s" if plural else "") for s in vocab.SHAPES + ("object",)]
    return (rf"(?:(?P<{prefix}_c>{_alt(vocab.COLORS)}) )?(?:(?P<{prefix}_m>{_alt(vocab.MATERIALS)}) )?"
            rf"(?P<{prefix}_s>{_alt(nouns)})")


def _sa_from(groups: Mapping, prefix: str, plural: bool) -> SA:
    shape = groups[f"{prefix}_s"]
    if plural:
        shape = shape[:-1]
    return (groups[f"{prefix}_c"], groups[f"{prefix}_m"], None if shape == "object" else shape)


# ---------------------------------------------------------------- templates

def _frame(ti: str) -> Program:
    return build("get_frame", build(ti))


def _unique(sa: SA) -> Program:
    return build("unique", sa_program(sa))


def _prop_filter(prog: Program, pa: Optional[str]) -> Program:
    return build(f"filter_{pa}", prog) if pa else prog


def _pair_events(kind: str, a: SA, b: SA, base: Program) -> Program:
    return build("filter_event", build("filter_event", build("filter_kind", base, kind), sa_program(a)), sa_program(b))


@dataclass(frozen=True)
class Template:
    id: str
    qtype: str
    render: Callable[[dict], str]
    pattern: str
    program: Callable[[dict], Program]
    plural: tuple = ()

    @property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)

    def parse(self, text: str) -> Optional[dict]:
        m = self.regex.fullmatch(text)
        if m is None:
            return None
        g = m.groupdict()
        slots = {k: v for k, v in g.items() if not re.fullmatch(r"[ab]_[cms]", k)}
        for p in ("a", "b"):
            if f"{p}_s" in g:
                slots[p] = _sa_from(g, p, p in self.plural)
        return slots


_H = rf"(?P<h>{_alt(vocab.ATTR_NAMES)})"
_PA = r"(?P<pa>heavy|light|uncharged|charged)"
_TI = r"(?P<ti>at the beginning of the video|when the video ends)"
_TI_BACK = {v: k for k, v in TIME_TEXT.items()}


def _query_set(s):
    prog = sa_program(s["a"])
    if s.get("da"):
        prog = build("filter_dynamic_attr", prog, s["da"], _frame("start"))
    return _prop_filter(prog, s["pa"])


def _query_prog(s):
    return build("query_attribute", build("unique", _query_set(s)), s["h"])


def _set_prog(s):
    prog = build("filter_dynamic_attr", sa_program(s["a"]), s["da"], _frame(s["ti"]))
    return _prop_filter(prog, s["pa"])


def _partner_prog(s):
    ev = build("filter_order", build("filter_kind", build("filter_event", build("events"), sa_program(s["a"])),
                                     "collision"), s["order"])
    return build("query_attribute", build("get_col_partner", ev, _unique(s["a"])), s["h"])


def _count_events_prog(s):
    anchor = build("filter_order", _pair_events("collision", s["a"], s["b"], build("events")), "first")
    return build("count", build(f"filter_{s['when']}", build("filter_kind", build("events"), "collision"), anchor))


def _cf_prog(s):
    return build(EDIT_OP[s["edit"]], _unique(s["a"]))


def _norm_ti(s):
    return {**s, "ti": _TI_BACK.get(s["ti"], s["ti"])}


TEMPLATES: dict[str, Template] = {}


def _register(t: Template):
    TEMPLATES[t.id] = t


_register(Template(
    "query", "factual",
    lambda s: f"What is the {s['h']} of the {s['da'] + ' ' if s.get('da') else ''}{sa_text(s['a'])} that is {s['pa']}?",
    rf"What is the {_H} of the (?:(?P<da>moving|stationary) )?{_sa_re('a')} that is {_PA}\?",
    _query_prog,
))
_register(Template(
    "exist", "factual",
    lambda s: f"Are there any {s['pa']} {s['da']} {sa_text(s['a'], True)} {TIME_TEXT[s['ti']]}?",
    rf"Are there any {_PA} (?P<da>moving|stationary) {_sa_re('a', True)} {_TI}\?",
    lambda s: build("exist", _set_prog(s)), plural=("a",),
))
_register(Template(
    "count", "factual",
    lambda s: f"How many {s['pa']} {s['da']} {sa_text(s['a'], True)} are there {TIME_TEXT[s['ti']]}?",
    rf"How many {_PA} (?P<da>moving|stationary) {_sa_re('a', True)} are there {_TI}\?",
    lambda s: build("count", _set_prog(s)), plural=("a",),
))
_register(Template(
    "mass_compare", "factual",
    lambda s: f"Is the {sa_text(s['a'])} {s['cmp']} than the {sa_text(s['b'])}?",
    rf"Is the {_sa_re('a')} (?P<cmp>heavier|lighter) than the {_sa_re('b')}\?",
    lambda s: build("is_heavier" if s["cmp"] == "heavier" else "is_lighter", _unique(s["a"]), _unique(s["b"])),
))
_register(Template(
    "charge_opposite", "factual",
    lambda s: f"Are the {sa_text(s['a'])} and the {sa_text(s['b'])} oppositely charged?",
    rf"Are the {_sa_re('a')} and the {_sa_re('b')} oppositely charged\?",
    lambda s: build("is_opposite_charged", _unique(s["a"]), _unique(s["b"])),
))
_register(Template(
    "charge_same", "factual",
    lambda s: f"Are the {sa_text(s['a'])} and the {sa_text(s['b'])} with the same type of charge?",
    rf"Are the {_sa_re('a')} and the {_sa_re('b')} with the same type of charge\?",
    lambda s: build("is_same_charged", _unique(s["a"]), _unique(s["b"])),
))
_register(Template(
    "query_both", "factual",
    lambda s: f"What are the {s['h']}s of the two charged objects?",
    rf"What are the {_H}s of the two charged objects\?",
    lambda s: build("query_both_attribute", build("filter_charged", build("objects")), s["h"]),
))
_register(Template(
    "query_partner", "factual",
    lambda s: f"What is the {s['h']} of the object that {s['order']} collides with the {sa_text(s['a'])}?",
    rf"What is the {_H} of the object that (?P<order>first|last) collides with the {_sa_re('a')}\?",
    _partner_prog,
))
_register(Template(
    "count_events", "factual",
    lambda s: (f"How many collisions happen {s['when']} the {sa_text(s['a'])} "
               f"first collides with the {sa_text(s['b'])}?"),
    rf"How many collisions happen (?P<when>before|after) the {_sa_re('a')} first collides with the {_sa_re('b')}\?",
    _count_events_prog,
))
_register(Template(
    "direction", "factual",
    lambda s: f"What direction is the {sa_text(s['a'])} moving {TIME_TEXT[s['ti']]}?",
    rf"What direction is the {_sa_re('a')} moving {_TI}\?",
    lambda s: build("query_direction", _unique(s["a"]), _frame(s["ti"])),
))
_register(Template(
    "cf_mass", "counterfactual_mass",
    lambda s: f"If the {sa_text(s['a'])} were {s['edit']}, {s['ask']}?",
    rf"If the {_sa_re('a')} were (?P<edit>heavier|lighter), (?P<ask>{_alt(CF_ASKS)})\?",
    _cf_prog,
))
_register(Template(
    "cf_charge", "counterfactual_charge",
    lambda s: f"If the {sa_text(s['a'])} were {s['edit']}, {s['ask']}?",
    rf"If the {_sa_re('a')} were (?P<edit>uncharged|oppositely charged), (?P<ask>{_alt(CF_ASKS)})\?",
    _cf_prog,
))
_register(Template(
    "predictive", "predictive",
    lambda s: f"{s['ask']}?",
    rf"(?P<ask>{_alt(PRED_ASKS)})\?",
    lambda s: build("unseen_events"),
))

_CHOICE_FORMS = {
    "collision": ("the {a} collides with the {b}", rf"the {_sa_re('a')} collides with the {_sa_re('b')}"),
    "attraction": ("the {a} and the {b} attract each other",
                   rf"the {_sa_re('a')} and the {_sa_re('b')} attract each other"),
    "repulsion": ("the {a} and the {b} repel each other",
                  rf"the {_sa_re('a')} and the {_sa_re('b')} repel each other"),
}


def render(template_id: str, slots: dict) -> str:
    return TEMPLATES[template_id].render(slots)


def template_program(template_id: str, slots: dict) -> Program:
    t = TEMPLATES[template_id]
    return t.program(_norm_ti(slots) if "ti" in slots else slots)


def choice_text(kind: str, a: SA, b: SA) -> str:
    return _CHOICE_FORMS[kind][0].format(a=sa_text(a), b=sa_text(b))


def choice_program(base: Program, kind: str, a: SA, b: SA, negated: bool) -> Program:
    prog = build("exist", _pair_events(kind, a, b, base))
    return build("negate", prog) if negated else prog


def is_negated(slots: Mapping) -> bool:
    return " not " in f" {slots.get('ask', '')} "


def parse_question_nl(text: str) -> tuple[str, dict, Program]:
    """Exact template match; returns (template id, slots, program)."""
    for t in TEMPLATES.values():
        slots = t.parse(text)
        if slots is not None:
            if "ti" in slots:
                slots = _norm_ti(slots)
            return t.id, slots, t.program(slots)
    raise QuestionParseError(f"no template matches {text!r}")


def parse_choice_nl(question_text: str, text: str) -> Program:
    _, slots, base = parse_question_nl(question_text)
    for kind, (_, pattern) in _CHOICE_FORMS.items():
        m = re.fullmatch(pattern, text)
        if m:
            g = m.groupdict()
            return choice_program(base, kind, _sa_from(g, "a", False), _sa_from(g, "b", False), is_negated(slots))
    raise QuestionParseError(f"no choice form matches {text!r}")


# ---------------------------------------------------------------- generation

@dataclass(frozen=True)
class QuestionConfig:
    n_factual: int = 6
    n_counterfactual: int = 6
    n_predictive: int = 2
    n_choices: tuple[int, int] = (3, 4)
    attempts: int = 60


def _interacting(vs: VideoSet, a: int, b: int) -> bool:
    return any(set(e.participants) == {a, b} for r in vs.records for e in r.interactions())


def _ref(rng, obj: ObjectSpec, objects) -> SA:
    options = unique_descriptions(obj, objects)
    return options[int(rng.integers(len(options)))]


def _pick(rng, seq):
    seq = list(seq)
    return seq[int(rng.integers(len(seq)))] if seq else None


class _Factual:
    """Slot samplers for the factual families; each returns slots or None."""

    def __init__(self, vs: VideoSet, rng):
        self.vs, self.rng = vs, rng
        self.objs = list(vs.target.objects)

    def query(self):
        rng, o = self.rng, _pick(self.rng, self.objs)
        pa = _pick(rng, ["heavy" if o.mass == "heavy" else "light", "charged" if o.is_charged else "uncharged"])
        da = None
        if rng.random() < 0.5:
            da = "moving" if moving_predicate(self.vs.target.state(0, o.id)) else "stationary"
        full = describe(o)
        options = []
        for keep in itertools.product((False, True), repeat=3):
            sa = tuple(v if k else None for v, k in zip(full, keep))
            options.append(sa)
        rng.shuffle(options)
        for sa in sorted(options, key=lambda s: sum(v is not None for v in s)):
            h_opts = [h for h, v in zip(("color", "material", "shape"), sa) if v is None]
            if not h_opts:
                continue
            s = {"h": _pick(rng, h_opts), "da": da, "a": sa, "pa": pa}
            if len(execute_set(_query_set(s), self.vs)) == 1:
                return s
        return None

    def _set(self):
        rng, o = self.rng, _pick(self.rng, self.objs)
        full = describe(o)
        sa = tuple(v if rng.random() < 0.4 else None for v in full)
        return {"pa": _pick(rng, ("heavy", "light", "charged", "uncharged")),
                "da": _pick(rng, vocab.DYNAMIC_ATTRS), "a": sa, "ti": _pick(rng, ("start", "end"))}

    exist = _set
    count = _set

    def mass_compare(self):
        rng = self.rng
        pairs = [(a, b) for a, b in itertools.permutations(self.objs, 2) if _interacting(self.vs, a.id, b.id)]
        heavy_pairs = [p for p in pairs if "heavy" in (p[0].mass, p[1].mass)]
        pool = heavy_pairs if heavy_pairs and rng.random() < 0.6 else pairs
        if not pool:
            return None
        a, b = _pick(rng, pool)
        return {"a": _ref(rng, a, self.objs), "b": _ref(rng, b, self.objs), "cmp": _pick(rng, ("heavier", "lighter"))}

    def _charge(self):
        rng = self.rng
        pairs = [(a, b) for a, b in itertools.combinations(self.objs, 2) if _interacting(self.vs, a.id, b.id)]
        charged = [p for p in pairs if p[0].is_charged and p[1].is_charged]
        pool = charged if charged and rng.random() < 0.6 else pairs
        if not pool:
            return None
        a, b = _pick(rng, pool)
        if rng.random() < 0.5:
            a, b = b, a
        return {"a": _ref(rng, a, self.objs), "b": _ref(rng, b, self.objs)}

    charge_opposite = _charge
    charge_same = _charge

    def query_both(self):
        if sum(o.is_charged for o in self.objs) != 2:
            return None
        return {"h": _pick(self.rng, vocab.ATTR_NAMES)}

    def query_partner(self):
        rng = self.rng
        hit = [o for o in self.objs if any(e.kind == "collision" and o.id in e.participants
                                           for e in self.vs.target.events)]
        if not hit:
            return None
        o = _pick(rng, hit)
        return {"h": _pick(rng, vocab.ATTR_NAMES), "order": _pick(rng, ("first", "last")),
                "a": _ref(rng, o, self.objs)}

    def count_events(self):
        rng = self.rng
        cols = [e for e in self.vs.target.events if e.kind == "collision"]
        if not cols:
            return None
        e = _pick(rng, cols)
        a, b = (self.vs.target.objects[self.vs.target.index_of(p)] for p in e.participants)
        if rng.random() < 0.5:
            a, b = b, a
        return {"when": _pick(rng, ("before", "after")), "a": _ref(rng, a, self.objs), "b": _ref(rng, b, self.objs)}

    def direction(self):
        rng = self.rng
        ti = _pick(rng, ("start", "end"))
        frame = 0 if ti == "start" else self.vs.target.n_frames - 1
        moving = [o for o in self.objs if moving_predicate(self.vs.target.state(frame, o.id))]
        if not moving:
            return None
        return {"a": _ref(rng, _pick(rng, moving), self.objs), "ti": ti}


def execute_set(program: Program, vs: VideoSet):
    return execute(program, World.oracle(vs)).data


FACTUAL_FAMILIES = ("query", "exist", "count", "mass_compare", "charge_opposite", "charge_same",
                    "query_both", "query_partner", "count_events", "direction")
_BOOL_FAMILIES = {"exist", "mass_compare", "charge_opposite", "charge_same"}


def instantiate_factual(vs: VideoSet, rng, n: int, attempts: int = 60) -> list[Question]:
    """Up to ``n`` distinct factual questions; yes/no families are drawn answer-balanced."""
    sampler = _Factual(vs, rng)
    world = World.oracle(vs)
    out: dict[str, Question] = {}
    for _ in range(attempts):
        if len(out) >= n:
            break
        family = FACTUAL_FAMILIES[int(rng.integers(len(FACTUAL_FAMILIES)))]
        want = bool(rng.random() < 0.5) if family in _BOOL_FAMILIES else None
        for _try in range(6):
            slots = getattr(sampler, family)()
            if slots is None:
                break
            program = template_program(family, slots)
            try:
                value = execute(program, world)
            except ExecutionError:
                continue
            if want is not None and value.data != want:
                continue
            text = render(family, slots)
            out.setdefault(text, Question(text, "factual", program, answer=value.to_answer(), template=family))
            break
    return list(out.values())


def _occurred(record: SceneRecord) -> set:
    return {(e.kind, e.pair) for e in record.interactions()}


def _universe(objects: Sequence[ObjectSpec], extra_kinds: Iterable[str]) -> list:
    ids = [o.id for o in objects]
    cands = [("collision", frozenset(p)) for p in itertools.combinations(ids, 2)]
    charged = frozenset(o.id for o in objects if o.is_charged)
    if len(charged) == 2:
        cands += [(k, charged) for k in sorted(set(extra_kinds))]
    return cands


def _relation_kind(objects) -> Optional[str]:
    ch = [o for o in objects if o.is_charged]
    if len(ch) != 2:
        return None
    return "repulsion" if ch[0].charge == ch[1].charge else "attraction"


def _choices(rng, universe, occurred, negated, base, objects, n_range, prefer=frozenset()):
    pos = [c for c in universe if c in occurred]
    neg = [c for c in universe if c not in occurred]
    if not pos or not neg:
        return None
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    n = min(n, len(pos) + len(neg))
    k_pos = int(rng.integers(1, min(len(pos), n - 1) + 1))
    k_neg = min(n - k_pos, len(neg))

    def draw(pool, k):
        w = np.array([3.0 if c in prefer else 1.0 for c in pool])
        idx = rng.choice(len(pool), size=k, replace=False, p=w / w.sum())
        return [pool[i] for i in sorted(idx)]

    picked = draw(pos, k_pos) + draw(neg, k_neg)
    rng.shuffle(picked)
    by_id = {o.id: o for o in objects}
    out = []
    for kind, pair in picked:
        a, b = sorted(pair)
        if rng.random() < 0.5:
            a, b = b, a
        sa_a, sa_b = _ref(rng, by_id[a], objects), _ref(rng, by_id[b], objects)
        out.append((choice_text(kind, sa_a, sa_b), choice_program(base, kind, sa_a, sa_b, negated)))
    return out


def _mc_question(text, qtype, template, program, choice_specs, world) -> Question:
    choices = tuple(Choice(t, p, bool(execute(p, world).data)) for t, p in choice_specs)
    return Question(text, qtype, program, choices=choices, template=template)


def cf_edits(vs: VideoSet) -> list[tuple[str, int]]:
    """Edits worth asking about: the edited object interacts in the target."""
    active = {p for e in vs.target.interactions() for p in e.participants}
    out = []
    for o in vs.target.objects:
        if o.id not in active:
            continue
        out.append(("heavier" if o.mass == "light" else "lighter", o.id))
        if o.is_charged:
            out += [("uncharged", o.id), ("oppositely charged", o.id)]
    return out


def instantiate_counterfactual(vs: VideoSet, rng, n: int, cfg: QuestionConfig = QuestionConfig(),
                               physics: PhysicsConfig = PhysicsConfig(), cache: Optional[dict] = None) -> list[Question]:
    cache = {} if cache is None else cache
    objects = list(vs.target.objects)
    edits = cf_edits(vs)
    out: dict[str, Question] = {}
    base_occ = _occurred(vs.target)
    for _ in range(cfg.attempts):
        if len(out) >= n or not edits:
            break
        edit, obj_id = edits[int(rng.integers(len(edits)))]
        op = EDIT_OP[edit]
        if (op, obj_id) not in cache:
            cache[(op, obj_id)] = counterfactual_record(vs.target, vs.roster, op, obj_id, physics)
        cf = cache[(op, obj_id)]
        slots = {"a": _ref(rng, vs.obj(obj_id), objects), "edit": edit, "ask": _pick(rng, CF_ASKS)}
        tid = "cf_mass" if edit in ("heavier", "lighter") else "cf_charge"
        program = template_program(tid, slots)
        occ = _occurred(cf)
        kinds = [k for k in (_relation_kind(objects), _relation_kind(cf.objects)) if k]
        specs = _choices(rng, _universe(objects, kinds), occ, is_negated(slots), program, objects,
                         cfg.n_choices, prefer=occ ^ base_occ)
        if specs is None:
            continue
        text = render(tid, slots)
        if text in out:
            continue
        world = World(vs.target, World.oracle(vs).properties, vs.future, {(op, obj_id): cf})
        out[text] = _mc_question(text, TEMPLATES[tid].qtype, tid, program, specs, world)
    return list(out.values())


def instantiate_predictive(vs: VideoSet, rng, n: int, cfg: QuestionConfig = QuestionConfig()) -> list[Question]:
    objects = list(vs.target.objects)
    occ = _occurred(vs.future)
    kinds = [k for k in (_relation_kind(objects),) if k]
    world = World.oracle(vs)
    out: dict[str, Question] = {}
    for _ in range(cfg.attempts // 4):
        if len(out) >= n:
            break
        slots = {"ask": _pick(rng, PRED_ASKS)}
        program = template_program("predictive", slots)
        specs = _choices(rng, _universe(objects, kinds), occ, is_negated(slots), program, objects, cfg.n_choices)
        if specs is None:
            break
        text = render("predictive", slots)
        key = text + "|" + "|".join(t for t, _ in specs)
        if key not in out:
            out[key] = _mc_question(text, "predictive", "predictive", program, specs, world)
    return list(out.values())


def generate_questions(vs: VideoSet, rng, cfg: QuestionConfig = QuestionConfig(),
                       physics: PhysicsConfig = PhysicsConfig()) -> list[Question]:
    qs = (instantiate_factual(vs, rng, cfg.n_factual, cfg.attempts)
          + instantiate_counterfactual(vs, rng, cfg.n_counterfactual, cfg, physics)
          + instantiate_predictive(vs, rng, cfg.n_predictive, cfg))
    return [Question(q.text, q.qtype, q.program, q.choices, q.answer, q.template, f"{vs.set_id}:{k}")
            for k, q in enumerate(qs)]


# ---------------------------------------------------------------- balancing

def _mix(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: (counts.get(k, 0) / total if total else 0.0) for k in DEFAULT_MIX}


def balance_corpus(items: Sequence, seed: int = 0, targets: Mapping[str, float] = DEFAULT_MIX,
                   tolerance: float = 0.05, qtype: Callable = lambda q: q.qtype) -> tuple[list, dict]:
    """Subsample so the factual/counterfactual/predictive mix sits within ``tolerance`` of ``targets``.

    Items already within tolerance come back untouched. Selection is seeded and
    preserves input order. Returns (kept items, report).
    """
    groups: dict[str, list[int]] = {k: [] for k in targets}
    for i, q in enumerate(items):
        groups[CATEGORY[qtype(q)]].append(i)
    before = {k: len(v) for k, v in groups.items()}
    report = {"before": before, "targets": dict(targets), "tolerance": tolerance}
    mix = _mix(before)
    if items and all(abs(mix[k] - targets[k]) <= tolerance for k in targets):
        report.update(after=before, mix=mix, changed=False, feasible=True)
        return list(items), report
    feasible = all(before[k] > 0 for k in targets if targets[k] > 0)
    if not feasible:
        report.update(after=before, mix=mix, changed=False, feasible=False)
        return list(items), report
    total = min(before[k] / targets[k] for k in targets if targets[k] > 0)
    want = {k: min(before[k], int(round(targets[k] * total))) for k in targets}
    rng = np.random.default_rng(seed)
    keep = set()
    for k, idx in groups.items():
        chosen = rng.choice(len(idx), size=want[k], replace=False) if want[k] else []
        keep.update(idx[j] for j in chosen)
    kept = [q for i, q in enumerate(items) if i in keep]
    after = {k: want[k] for k in targets}
    report.update(after=after, mix=_mix(after), changed=True, feasible=True)
    return kept, report


def corpus_stats(video_sets: Sequence[VideoSet]) -> dict:
    qs = [q for vs in video_sets for q in vs.questions]
    by_type = Counter(q.qtype for q in qs)
    by_cat = Counter(CATEGORY[q.qtype] for q in qs)
    answers = Counter(q.answer for q in qs if q.qtype == "factual")
    choices = [c for q in qs if q.choices for c in q.choices]
    return {
        "n_sets": len(video_sets),
        "n_questions": len(qs),
        "by_qtype": dict(sorted(by_type.items())),
        "by_category": dict(sorted(by_cat.items())),
        "mix": _mix(by_cat),
        "by_template": dict(sorted(Counter(q.template for q in qs).items())),
        "factual_answers": dict(answers.most_common(20)),
        "n_choices": len(choices),
        "choice_true_rate": (sum(c.answer for c in choices) / len(choices)) if choices else 0.0,
    }
