"""Corpus generation, world construction, question answering and scoring."""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .core import ObjectSpec, PropertyGraph, Question, SceneRecord, VideoSet, relative_charge
from .executor import COUNTERFACTUAL_OPS, ExecutionError, World, execute
from .physics import PhysicsConfig, SimulationError, annotate
from .program import Program
from .questions import CATEGORY, QuestionConfig, balance_corpus, generate_questions
from .scene_gen import GenConfig, generate_video_set, set_seeds
from .worlds import counterfactual_record, edited, future_record

MODES = ("oracle", "inferred", "gnn")
CORPUS_FORMAT = "physreason-corpus/1"


class EmptyCorpusError(ValueError):
    pass


# ---------------------------------------------------------------- corpus

def question_rng(set_seed: int) -> np.random.Generator:
    return np.random.default_rng([set_seed, 1])


def generate_corpus(n_sets: int, seed: int, gen: GenConfig = GenConfig(), qcfg: QuestionConfig = QuestionConfig(),
                    balance: bool = True, tolerance: float = 0.05) -> tuple[list[VideoSet], dict]:
    """``n_sets`` sets with questions; the question-type mix is balanced across the whole corpus."""
    sets = []
    pool = []
    for k, s in enumerate(set_seeds(seed, n_sets)):
        vs = generate_video_set(gen, s, f"set{k:05d}")
        qs = generate_questions(vs, question_rng(s), qcfg, gen.physics)
        sets.append(vs)
        pool += [(k, q) for q in qs]
    report: dict = {}
    if balance:
        pool, report = balance_corpus(pool, seed=seed, tolerance=tolerance, qtype=lambda x: x[1].qtype)
    per_set: dict[int, list[Question]] = {}
    for k, q in pool:
        per_set.setdefault(k, []).append(q)
    sets = [vs.with_questions(per_set.get(k, [])) for k, vs in enumerate(sets)]
    return sets, report


def set_bytes(vs: VideoSet) -> bytes:
    """Canonical JSON encoding of one set."""
    return json.dumps(vs.to_dict(), separators=(",", ":")).encode()


def corpus_checksum(sets: Sequence[VideoSet]) -> str:
    h = hashlib.sha256()
    for vs in sets:
        h.update(set_bytes(vs))
    return h.hexdigest()


def corpus_bytes(sets: Sequence[VideoSet], seed: Optional[int] = None) -> bytes:
    """Single-file bundle of a corpus (used by tests and small tools)."""
    doc = {"format": CORPUS_FORMAT, "root_seed": seed, "sets": [vs.to_dict() for vs in sets]}
    return json.dumps(doc, separators=(",", ":")).encode()


def write_corpus(sets: Sequence[VideoSet], out_dir, seed: Optional[int] = None) -> dict:
    """One ``sets/<set_id>.json`` per set; returns the manifest entries for the corpus."""
    out_dir = Path(out_dir)
    (out_dir / "sets").mkdir(parents=True, exist_ok=True)
    entries = []
    for vs in sets:
        data = set_bytes(vs)
        name = f"sets/{vs.set_id}.json"
        (out_dir / name).write_bytes(data)
        entries.append({"set_id": vs.set_id, "seed": vs.seed, "file": name, "sha256": sha256(data)})
    return {"format": CORPUS_FORMAT, "root_seed": seed, "sets": entries, "corpus_sha256": corpus_checksum(sets)}


def load_corpus(path) -> list[VideoSet]:
    """Sets from a generated directory, a single-file bundle, or one VideoSet JSON file."""
    path = Path(path)
    if path.is_dir():
        manifest = path / "manifest.json"
        if manifest.exists():
            names = [e["file"] for e in json.loads(manifest.read_text())["sets"]]
        else:
            names = sorted(str(p.relative_to(path)) for p in (path / "sets").glob("*.json"))
        if not names:
            raise ValueError(f"{path}: no video sets found")
        return [VideoSet.from_dict(json.loads((path / n).read_text())) for n in names]
    doc = json.loads(path.read_text())
    if doc.get("format") == CORPUS_FORMAT:
        if "corpus_sha256" in doc:
            return load_corpus(path.parent)  # a generate manifest
        return [VideoSet.from_dict(d) for d in doc["sets"]]
    if "roster" in doc:
        return [VideoSet.from_dict(doc)]
    raise ValueError(f"{path}: neither a corpus nor a video set")


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_manifest(command: str, args: Mapping, files: Mapping[str, bytes], extra: Optional[Mapping] = None) -> dict:
    import numba

    return {
        "command": command,
        "args": dict(args),
        "versions": {"physreason": __version__, "numpy": np.__version__, "numba": numba.__version__,
                     "python": platform.python_version()},
        "checksums": {name: sha256(data) for name, data in sorted(files.items())},
        **(dict(extra) if extra else {}),
    }


# ---------------------------------------------------------------- worlds

def objects_from_graph(roster: Sequence[ObjectSpec], graph: PropertyGraph) -> list[ObjectSpec]:
    """Roster copies carrying the graph's mass labels and a sign assignment realizing its edges.

    When the edges admit no sign assignment, the most confident charged edge wins.
    """
    ids = [o.id for o in roster]
    q = graph.signed_assignment(ids)
    if q is None:
        charged = [(c, k, lab) for k, (lab, c) in graph.edge_charge.items() if lab != "none"]
        q = {i: 0 for i in ids}
        if charged:
            _, (a, b), lab = max(charged)
            q[a], q[b] = 1, (1 if lab == "same" else -1)
    name = {1: "positive", -1: "negative", 0: "neutral"}
    return [replace(o, mass=graph.mass(o.id) or "light", charge=name[q.get(o.id, 0)]) for o in roster]


def requested_edits(questions: Sequence[Question], world: World) -> list[tuple[str, int]]:
    """(operation, object id) for every counterfactual node whose referent resolves."""
    edits = set()
    for q in questions:
        for prog in [q.program] + [c.program for c in q.choices or ()]:
            for node in prog.nodes:
                if node.name in COUNTERFACTUAL_OPS:
                    try:
                        obj = execute(prog.subprogram(node.args[0]), world).data
                    except ExecutionError:
                        continue
                    edits.add((node.name, obj))
    return sorted(edits)


def _with_objects(record: SceneRecord, objects: Sequence[ObjectSpec], cfg: PhysicsConfig) -> SceneRecord:
    by_id = {o.id: o for o in objects}
    rec = SceneRecord(tuple(by_id[i] for i in record.ids), record.positions, record.velocities, record.duration_s,
                      record.fps, record.events, record.kind, record.contacts)
    return annotate(rec, cfg=cfg)


def _rollout_record(model, frames: np.ndarray, objects: Sequence[ObjectSpec], graph: PropertyGraph,
                    n_frames: int, fps: int, kind: str, cfg: PhysicsConfig) -> SceneRecord:
    from .gnn import _pairs

    n = len(objects)
    I, J = _pairs(n)
    labels = [relative_charge(objects[i].charge_value, objects[j].charge_value) for i, j in zip(I, J)]
    radii = [o.radius for o in objects]
    masses = [o.mass_value for o in objects]
    steps = n_frames - len(frames)
    pred = model.rollout_positions(frames, radii, masses, labels, steps)
    P = np.concatenate([np.asarray(frames), pred])
    V = np.gradient(P, axis=0) * fps
    rec = SceneRecord(tuple(objects), P, V, n_frames / fps, fps, kind=kind, contacts=None)
    return annotate(rec, cfg=cfg)


def build_worlds(vs: VideoSet, props: Optional[PropertyGraph] = None, cfg: PhysicsConfig = PhysicsConfig(),
                 questions: Optional[Sequence[Question]] = None, mode: str = "oracle", model=None) -> World:
    """World bundle for answering ``questions`` (defaults to the set's own).

    oracle: recorded future, ground-truth properties; inferred: ``props`` with
    every world re-simulated; gnn: ``props`` with learned rollouts.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    questions = vs.questions if questions is None else questions
    if mode == "oracle" or props is None:
        props = PropertyGraph.from_roster(vs.roster)
    objects = objects_from_graph(vs.target.objects, props) if mode != "oracle" else list(vs.target.objects)
    target = vs.target if mode == "oracle" else _with_objects(vs.target, objects, cfg)
    probe = World(target, props)
    edits = requested_edits(questions, probe)
    cfs = {}
    if mode == "gnn":
        fut_frames = cfg.n_frames(vs.future.duration_s)
        future = _rollout_record(model, np.asarray(target.positions[-3:]), objects, props, fut_frames + 2,
                                 target.fps, "predicted", cfg)
        future = SceneRecord(future.objects, future.positions[2:], future.velocities[2:], vs.future.duration_s,
                             future.fps, kind="predicted", contacts=None)
        future = annotate(future, cfg=cfg)
        for op, obj in edits:
            objs = edited(objects, op, obj)
            cfs[(op, obj)] = _rollout_record(model, np.asarray(target.positions[:3]), objs, props, target.n_frames,
                                             target.fps, "predicted", cfg)
        return World(target, props, future, cfs)
    if mode == "oracle":
        future = vs.future
    else:
        future = future_record(target, objects, vs.future.duration_s, cfg)
    for op, obj in edits:
        try:
            cfs[(op, obj)] = counterfactual_record(target, objects, op, obj, cfg)
        except SimulationError as exc:
            raise SimulationError(f"counterfactual {op} on object {obj}: {exc}") from exc
    return World(target, props, future, cfs)


# ---------------------------------------------------------------- answering

@dataclass(frozen=True)
class AnswerRecord:
    qid: str
    qtype: str
    predicted: object
    truth: object
    option_correct: tuple[bool, ...]
    errors: tuple[Optional[str], ...] = ()

    @property
    def correct(self) -> bool:
        return all(self.option_correct)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["option_correct"] = list(self.option_correct)
        d["errors"] = list(self.errors)
        d["correct"] = self.correct
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnswerRecord":
        return cls(d["qid"], d["qtype"], d["predicted"], d["truth"], tuple(d["option_correct"]),
                   tuple(d.get("errors", ())))


def _run(program: Program, world: World):
    try:
        return execute(program, world), None
    except ExecutionError as exc:
        return None, exc.category


def answer_questions(questions: Sequence[Question], world: World) -> list[AnswerRecord]:
    out = []
    for q in questions:
        if q.choices is None:
            v, err = _run(q.program, world)
            pred = v.to_answer() if v is not None else None
            out.append(AnswerRecord(q.qid, q.qtype, pred, q.answer, (pred == q.answer,), (err,)))
            continue
        preds, errs = [], []
        for c in q.choices:
            v, err = _run(c.program, world)
            preds.append(None if v is None else bool(v.data))
            errs.append(err)
        truth = [c.answer for c in q.choices]
        out.append(AnswerRecord(q.qid, q.qtype, preds, truth, tuple(p == t for p, t in zip(preds, truth)),
                                tuple(errs)))
    return out


def answer(vs: VideoSet, mode: str = "oracle", cfg: PhysicsConfig = PhysicsConfig(),
           props: Optional[PropertyGraph] = None, model=None) -> list[AnswerRecord]:
    """Answer every question of ``vs``; executor failures are scored as wrong, never raised."""
    if mode == "inferred" and props is None:
        from .inference import infer

        props = infer(vs, cfg)
    if mode == "gnn":
        if model is None:
            raise ValueError("gnn mode needs a trained model")
        props = props or model.predict_graph(vs)
    world = build_worlds(vs, props, cfg, mode=mode, model=model)
    return answer_questions(vs.questions, world)


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class Metrics:
    factual: Optional[float]
    predictive_per_option: Optional[float]
    predictive_per_question: Optional[float]
    counterfactual_per_option: Optional[float]
    counterfactual_per_question: Optional[float]
    counts: Mapping[str, int] = field(default_factory=dict)
    breakdown: Mapping[str, float] = field(default_factory=dict)
    errors: Mapping[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = ("Factual", "Pred. opt", "Pred. ques", "CF opt", "CF ques")
        vals = (self.factual, self.predictive_per_option, self.predictive_per_question,
                self.counterfactual_per_option, self.counterfactual_per_question)
        w = [max(len(h), 6) for h in head]
        line = "| " + " | ".join(h.rjust(n) for h, n in zip(head, w)) + " |"
        sep = "|" + "|".join("-" * (n + 2) for n in w) + "|"
        row = "| " + " | ".join(("n/a" if v is None else f"{100 * v:.1f}").rjust(n) for v, n in zip(vals, w)) + " |"
        return "\n".join([line, sep, row])


def _mean(xs) -> Optional[float]:
    """Mean, or None when a category has no questions."""
    xs = list(xs)
    return float(sum(xs) / len(xs)) if xs else None


def evaluate(records: Sequence[AnswerRecord]) -> Metrics:
    if not records:
        raise EmptyCorpusError("no answer records to evaluate")
    cat = {r.qid: CATEGORY[r.qtype] for r in records}

    def pick(c):
        return [r for r in records if cat[r.qid] == c]

    fact, pred, cf = pick("factual"), pick("predictive"), pick("counterfactual")
    counts = {t: sum(r.qtype == t for r in records) for t in sorted({r.qtype for r in records})}
    breakdown = {}
    for t in ("counterfactual_mass", "counterfactual_charge"):
        rs = [r for r in records if r.qtype == t]
        if rs:
            breakdown[f"{t}_per_option"] = _mean(o for r in rs for o in r.option_correct)
            breakdown[f"{t}_per_question"] = _mean(r.correct for r in rs)
    errors: dict[str, int] = {}
    for r in records:
        for e in r.errors:
            if e:
                errors[e] = errors.get(e, 0) + 1
    return Metrics(
        factual=_mean(r.correct for r in fact),
        predictive_per_option=_mean(o for r in pred for o in r.option_correct),
        predictive_per_question=_mean(r.correct for r in pred),
        counterfactual_per_option=_mean(o for r in cf for o in r.option_correct),
        counterfactual_per_question=_mean(r.correct for r in cf),
        counts=counts, breakdown=breakdown, errors=dict(sorted(errors.items())),
    )


def answer_corpus(sets: Sequence[VideoSet], mode: str = "oracle", cfg: PhysicsConfig = PhysicsConfig(),
                  props: Optional[Mapping[str, PropertyGraph]] = None, model=None) -> list[AnswerRecord]:
    out = []
    for vs in sets:
        out += answer(vs, mode, cfg, None if props is None else props.get(vs.set_id), model)
    return out
