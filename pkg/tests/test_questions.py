from collections import Counter
from types import SimpleNamespace

import numpy as np
import pytest

from physreason.executor import World, execute
from physreason.program import format_program
from physreason.questions import (
    TEMPLATES,
    QuestionParseError,
    balance_corpus,
    corpus_stats,
    generate_questions,
    parse_choice_nl,
    parse_question_nl,
)


@pytest.fixture(scope="module")
def generated(video_sets):
    rng = np.random.default_rng(11)
    return [(vs, generate_questions(vs, rng)) for vs in video_sets]


def test_every_template_family_is_generated(generated):
    used = {q.template for _, qs in generated for q in qs}
    assert {"cf_mass", "cf_charge", "predictive", "query", "count", "exist"} <= used


def test_text_parses_back_to_program(generated):
    for _, qs in generated:
        for q in qs:
            tid, _, prog = parse_question_nl(q.text)
            assert tid == q.template
            assert format_program(prog) == format_program(q.program)
            for c in q.choices or ():
                assert format_program(parse_choice_nl(q.text, c.text)) == format_program(c.program)


def test_unknown_text_rejected():
    with pytest.raises(QuestionParseError):
        parse_question_nl("What is the meaning of the video?")


def test_stored_answers_match_execution(generated):
    for vs, qs in generated:
        world = World.oracle(vs)
        for q in qs:
            if q.qtype == "factual":
                assert execute(q.program, world).to_answer() == q.answer


def test_choices_mix_true_and_false(generated):
    for _, qs in generated:
        for q in qs:
            if q.choices:
                labels = {c.answer for c in q.choices}
                assert labels == {True, False}
                assert 2 <= len(q.choices) <= 4


def test_counterfactual_edits_target_interacting_objects(generated):
    for vs, qs in generated:
        active = {p for e in vs.target.interactions() for p in e.participants}
        for q in qs:
            if q.qtype.startswith("counterfactual"):
                node = next(n for n in q.program.nodes if n.name.startswith("counterfactual_"))
                obj = execute(q.program.subprogram(node.args[0]), World.oracle(vs)).data
                assert obj in active


def test_qids_unique(generated):
    ids = [q.qid for _, qs in generated for q in qs]
    assert len(ids) == len(set(ids))


def _items(counts):
    return [SimpleNamespace(qtype=t) for t, n in counts.items() for _ in range(n)]


def _shares(items):
    c = Counter(i.qtype for i in items)
    return {k: c[k] / len(items) for k in c}


def test_balance_skewed_pool():
    items = _items({"factual": 600, "counterfactual_mass": 300, "predictive": 100})
    kept, report = balance_corpus(items, seed=1)
    shares = _shares(kept)
    assert report["changed"]
    assert abs(shares["factual"] - 0.42) <= 0.05
    assert abs(shares["counterfactual_mass"] - 0.50) <= 0.05
    assert abs(shares["predictive"] - 0.08) <= 0.05
    assert balance_corpus(items, seed=1)[0] == kept


def test_balance_leaves_good_pool_alone():
    items = _items({"factual": 42, "counterfactual_charge": 50, "predictive": 8})
    kept, report = balance_corpus(items)
    assert kept == items and not report["changed"]


def test_balance_infeasible_pool_reported():
    items = _items({"factual": 10})
    kept, report = balance_corpus(items)
    assert kept == items and not report["feasible"]


def test_corpus_stats(small_corpus):
    stats = corpus_stats(small_corpus)
    assert stats["n_sets"] == 12
    assert stats["n_questions"] == sum(stats["by_qtype"].values())
    assert abs(sum(stats["mix"].values()) - 1.0) < 1e-9
    assert set(stats["by_template"]) <= set(TEMPLATES)
