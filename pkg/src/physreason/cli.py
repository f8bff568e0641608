"""Command-line entry point: ``physreason <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .core import PropertyGraph
from .physics import PhysicsConfig, SimulationError
from .program import ProgramError, parse_program
from .questions import QuestionConfig, corpus_stats
from .scene_gen import GenConfig, GenerationError

log = logging.getLogger("physreason")


def _read_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text.decode())


def _dc(cls, table: dict, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in table.items()}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kw)


def load_config(path) -> dict:
    """Dataclass configs from a TOML/JSON file with optional [physics], [generation], [questions], [training]."""
    from .gnn import TrainConfig

    raw = _read_config(path)
    physics = _dc(PhysicsConfig, raw.get("physics", {}))
    gen = _dc(GenConfig, raw.get("generation", {}), physics=physics)
    return {"physics": physics, "generation": gen, "questions": _dc(QuestionConfig, raw.get("questions", {})),
            "training": _dc(TrainConfig, raw.get("training", {}))}


def _write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _dump(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _manifest(args, command, files, extra=None):
    from .pipeline import run_manifest

    keep = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    return run_manifest(command, keep, files, extra)


def cmd_generate(args, cfg):
    from .pipeline import generate_corpus, write_corpus

    gen = cfg["generation"]
    if args.complex:
        gen = GenConfig(**{**{f.name: getattr(gen, f.name) for f in fields(gen)}, "complex_mode": True})
    sets, report = generate_corpus(args.sets, args.seed, gen, cfg["questions"], balance=not args.no_balance,
                                   tolerance=args.tolerance)
    out = Path(args.out)
    corpus = write_corpus(sets, out, args.seed)
    stats = _dump({"balance": report, **corpus_stats(sets)})
    _write(out / "stats.json", stats)
    _write(out / "manifest.json", _dump(_manifest(args, "generate", {"stats.json": stats}, corpus)))
    print(f"{len(sets)} sets, {sum(len(v.questions) for v in sets)} questions -> {out}  "
          f"corpus sha256 {corpus['corpus_sha256']}")


def cmd_infer(args, cfg):
    from .inference import infer, infer_by_enumeration
    from .pipeline import load_corpus

    single = Path(args.corpus).is_file() and "roster" in json.loads(Path(args.corpus).read_text())
    out, scores = {}, {}
    for vs in load_corpus(args.corpus):
        if args.method == "enumeration":
            res = infer_by_enumeration(vs, cfg["physics"])
            out[vs.set_id] = res.graph.to_dict()
            scores[vs.set_id] = res.table()
        else:
            out[vs.set_id] = infer(vs, cfg["physics"], args.method).to_dict()
    data = _dump(next(iter(out.values())) if single else out)
    _write(args.out, data)
    files = {Path(args.out).name: data}
    if args.scores:
        sd = _dump(next(iter(scores.values())) if single else scores)
        _write(args.scores, sd)
        files[Path(args.scores).name] = sd
    _write(str(args.out) + ".manifest.json", _dump(_manifest(args, "infer", files)))
    print(f"inferred {len(out)} sets -> {args.out}")


def _load_props(path, sets):
    if path is None:
        return None
    doc = json.loads(Path(path).read_text())
    if "node_mass" in doc:  # one graph for a one-set corpus
        if len(sets) != 1:
            raise ValueError("a single property graph needs a single-set corpus")
        return {sets[0].set_id: PropertyGraph.from_dict(doc)}
    return {k: PropertyGraph.from_dict(v) for k, v in doc.items()}


def cmd_answer(args, cfg):
    from .pipeline import answer_corpus, load_corpus

    model = None
    if args.mode == "gnn":
        if not args.model:
            raise ValueError("--model is required for --mode gnn")
        from .gnn import load_checkpoint

        model = load_checkpoint(args.model)
    sets = load_corpus(args.corpus)
    recs = answer_corpus(sets, args.mode, cfg["physics"], _load_props(args.props, sets), model)
    data = _dump([r.to_dict() for r in recs])
    _write(args.out, data)
    _write(str(args.out) + ".manifest.json", _dump(_manifest(args, "answer", {Path(args.out).name: data})))
    print(f"{len(recs)} answers ({args.mode}) -> {args.out}")


def cmd_eval(args, cfg):
    from .pipeline import AnswerRecord, evaluate

    recs = [AnswerRecord.from_dict(d) for d in json.loads(Path(args.answers).read_text())]
    m = evaluate(recs)
    if args.out:
        _write(args.out, (m.to_json() + "\n").encode())
    print(m.table())


def cmd_exec(args, cfg):
    from .core import Question
    from .executor import execute
    from .pipeline import build_worlds, load_corpus

    sets = load_corpus(args.world)
    if args.set is not None:
        sets = [vs for vs in sets if vs.set_id == args.set]
        if not sets:
            raise KeyError(f"no set {args.set!r} in {args.world}")
    elif len(sets) != 1:
        raise ValueError(f"{args.world} holds {len(sets)} sets; pick one with --set")
    text = Path(args.program).read_text() if Path(args.program).is_file() else args.program
    program = parse_program(text)
    probe = Question("exec", "factual", program, answer="")
    world = build_worlds(sets[0], None, cfg["physics"], questions=[probe], mode="oracle")
    print(json.dumps(execute(program, world).to_json(), sort_keys=True))


def cmd_train(args, cfg):
    from .gnn import evaluate_ppl, save_checkpoint, train
    from .pipeline import load_corpus

    sets = load_corpus(args.corpus)
    tc = cfg["training"]
    overrides = {k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    tc = type(tc)(**{**{f.name: getattr(tc, f.name) for f in fields(tc)}, **overrides})
    model, curves = train(sets, tc)
    save_checkpoint(model, args.out)
    cd = _dump({"curves": curves, "train_accuracy": evaluate_ppl(model, sets)})
    _write(str(args.out) + ".curves.json", cd)
    _write(str(args.out) + ".manifest.json", _dump(_manifest(args, "train", {Path(args.out).name: Path(args.out).read_bytes()})))
    print(f"trained on {len(sets)} sets -> {args.out}; final ppl loss {curves['ppl'][-1]:.4f}")


def cmd_eval_gnn(args, cfg):
    from .gnn import evaluate_ppl, load_checkpoint
    from .pipeline import load_corpus

    res = evaluate_ppl(load_checkpoint(args.model), load_corpus(args.corpus))
    data = _dump(res)
    if args.out:
        _write(args.out, data)
    print(data.decode(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="physreason", description="Physical-property reasoning problem sets.")
    p.add_argument("--config", help="TOML or JSON configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a question corpus")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sets", type=int, default=10)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--complex", action="store_true", help="6-8 objects with a heavy object and a charged pair")
    g.add_argument("--no-balance", action="store_true")
    g.add_argument("--tolerance", type=float, default=0.05)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("infer", help="infer property graphs for a corpus")
    i.add_argument("--corpus", required=True, help="VideoSet JSON file or generated corpus directory")
    i.add_argument("--out", required=True)
    i.add_argument("--method", choices=("enumeration", "events", "fused"), default="enumeration")
    i.add_argument("--scores", help="also dump the per-hypothesis score table here (enumeration only)")
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("answer", help="answer a corpus's questions")
    a.add_argument("--corpus", required=True)
    a.add_argument("--mode", choices=("oracle", "inferred", "gnn"), default="oracle")
    a.add_argument("--props", help="property graphs from `infer` (inferred mode)")
    a.add_argument("--model", help="checkpoint from `train` (gnn mode)")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_answer)

    e = sub.add_parser("eval", help="score answer records")
    e.add_argument("--answers", required=True)
    e.add_argument("--out", help="metrics JSON path")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("exec", help="run one program against a video set's worlds")
    x.add_argument("--world", required=True, help="VideoSet JSON file or generated corpus directory")
    x.add_argument("--set", help="set id, e.g. set00003, when --world holds several")
    x.add_argument("--program", required=True, help="program file or inline program text")
    x.set_defaults(func=cmd_exec)

    t = sub.add_parser("train", help="train the learned property and dynamics networks")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    ge = sub.add_parser("eval-gnn", help="held-out accuracy of a trained property learner")
    ge.add_argument("--corpus", required=True)
    ge.add_argument("--model", required=True)
    ge.add_argument("--out")
    ge.set_defaults(func=cmd_eval_gnn)
    return p


HARD_ERRORS = (ValueError, KeyError, OSError, ProgramError, SimulationError, GenerationError, RuntimeError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except HARD_ERRORS as exc:
        print(f"physreason {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
