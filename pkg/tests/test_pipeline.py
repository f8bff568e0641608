import json

import numpy as np
import pytest

from physreason.core import Question, PropertyGraph
from physreason.executor import World
from physreason.gnn import TrainConfig, train
from physreason.pipeline import (
    AnswerRecord,
    EmptyCorpusError,
    answer,
    answer_corpus,
    answer_questions,
    build_worlds,
    corpus_bytes,
    evaluate,
    generate_corpus,
    load_corpus,
    objects_from_graph,
    write_corpus,
)
from physreason.program import parse_program
from physreason.worlds import counterfactual_record, edit_object


def test_identity_edit_replays_target(video_sets):
    vs = video_sets[0]
    rec = counterfactual_record(vs.target, vs.roster, "identity", vs.roster[0].id)
    assert np.array_equal(rec.positions, vs.target.positions)
    assert np.array_equal(rec.velocities, vs.target.velocities)


def test_neutralizing_removes_charge_events(video_sets):
    for vs in video_sets:
        charged = [o for o in vs.roster if o.is_charged]
        if not charged:
            continue
        rec = counterfactual_record(vs.target, vs.roster, "counterfactual_uncharged", charged[0].id)
        assert not any(e.kind in ("attraction", "repulsion") for e in rec.events)
        assert rec.n_frames == vs.target.n_frames


def test_edits():
    from physreason.core import ObjectSpec

    o = ObjectSpec(0, "red", "cube", "metal", charge="positive")
    assert edit_object(o, "counterfactual_mass_heavy").mass == "heavy"
    assert edit_object(o, "counterfactual_opposite_charged").charge == "negative"
    with pytest.raises(ValueError):
        edit_object(o, "counterfactual_taller")


def test_inferred_worlds_have_future_and_all_edits(small_corpus):
    vs = small_corpus[0]
    world = build_worlds(vs, PropertyGraph.from_roster(vs.roster), mode="inferred")
    assert world.future.n_frames == 50
    assert np.array_equal(world.future.positions[0], world.target.positions[-1])
    wanted = {n.name for q in vs.questions for n in q.program.nodes if n.name.startswith("counterfactual_")}
    assert {op for op, _ in world.counterfactuals} == wanted


def test_objects_from_graph_keeps_relations(video_sets):
    for vs in video_sets:
        truth = PropertyGraph.from_roster(vs.roster)
        assert PropertyGraph.from_roster(objects_from_graph(vs.roster, truth)) == truth


def test_evaluate_scoring():
    records = [
        AnswerRecord("a", "factual", "3", "3", (True,)),
        AnswerRecord("b", "factual", "red", "blue", (False,)),
        AnswerRecord("c", "predictive", [True, False], [True, False], (True, True)),
        AnswerRecord("d", "counterfactual_mass", [True, True], [True, False], (True, False)),
    ]
    m = evaluate(records)
    assert m.factual == 0.5
    assert (m.predictive_per_option, m.predictive_per_question) == (1.0, 1.0)
    assert (m.counterfactual_per_option, m.counterfactual_per_question) == (0.5, 0.0)
    assert m.breakdown["counterfactual_mass_per_option"] == 0.5
    assert json.loads(m.to_json())["counts"] == {"counterfactual_mass": 1, "factual": 2, "predictive": 1}
    assert "Factual" in m.table()


def test_missing_category_is_none():
    m = evaluate([AnswerRecord("a", "factual", "3", "3", (True,))])
    assert m.factual == 1.0 and m.predictive_per_option is None
    assert "n/a" in m.table()


def test_evaluate_empty():
    with pytest.raises(EmptyCorpusError):
        evaluate([])


def test_answer_record_round_trip():
    r = AnswerRecord("x", "predictive", [True, None], [True, False], (True, False), (None, "non_unique"))
    assert AnswerRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r


def test_oracle_mode_is_perfect(small_corpus):
    m = evaluate(answer_corpus(small_corpus, "oracle"))
    assert (m.factual, m.predictive_per_question, m.counterfactual_per_question) == (1.0, 1.0, 1.0)
    assert m.errors == {}


def test_failing_programs_score_as_wrong(video_sets):
    vs = video_sets[0]
    q = Question("How many?", "factual", parse_program("(count (unseen_events))"), answer="1", qid="x")
    [rec] = answer_questions([q], World(vs.target, PropertyGraph.from_roster(vs.roster)))
    assert not rec.correct and rec.errors == ("missing_future",)


def test_corpus_round_trip(tmp_path, small_corpus):
    path = tmp_path / "c.json"
    path.write_bytes(corpus_bytes(small_corpus, 5))
    back = load_corpus(path)
    assert corpus_bytes(back, 5) == corpus_bytes(small_corpus, 5)


def test_generation_is_deterministic():
    a, ra = generate_corpus(3, seed=21)
    b, rb = generate_corpus(3, seed=21)
    assert corpus_bytes(a, 21) == corpus_bytes(b, 21) and ra == rb


def test_gnn_mode_answers_everything(small_corpus):
    model, _ = train(small_corpus[:6], TrainConfig(hidden=16, epochs=3, dyn_epochs=2, windows_per_scene=4))
    vs = small_corpus[6]
    recs = answer(vs, "gnn", model=model)
    assert len(recs) == len(vs.questions)
    with pytest.raises(ValueError):
        answer(vs, "gnn")


def test_unknown_mode(small_corpus):
    with pytest.raises(ValueError):
        build_worlds(small_corpus[0], mode="psychic")


def test_corpus_directory_round_trip(tmp_path, small_corpus):
    entries = write_corpus(small_corpus[:3], tmp_path, seed=5)
    assert [e["file"] for e in entries["sets"]] == [f"sets/{vs.set_id}.json" for vs in small_corpus[:3]]
    back = load_corpus(tmp_path)
    assert corpus_bytes(back) == corpus_bytes(small_corpus[:3])
    assert load_corpus(tmp_path / "sets" / "set00001.json")[0].to_dict() == small_corpus[1].to_dict()
