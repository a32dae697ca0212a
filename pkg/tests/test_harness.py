import random
import sys

import pytest

from wozloc import synthetic
from wozloc.backends import BOGUS_SLOT, DeltaOracleBackend, EchoBackend, ScriptedErrorBackend
from wozloc.harness import (
    Mode,
    UndefinedMetricError,
    UsageError,
    build_report,
    compute_gjga,
    compute_jga,
    run_csp_loop,
    split_request_id,
    request_id,
)
from wozloc.ingest import Corpus
from wozloc.state import BeliefState, SlotId, serialize_state
from wozloc.wire import PARSE_PROTOCOL, JsonLineProcess, TransportError


def run(corpus, backend, mode, jobs=1):
    return run_csp_loop(corpus, lambda: backend, mode, jobs)


def test_scripted_fixture_worked_example():
    corpus = synthetic.scripted_fixture()
    backend = ScriptedErrorBackend(corpus, every=3)
    gold = run(corpus, backend, Mode.GOLD)
    pred = run(corpus, backend, Mode.PREDICTED)
    assert [r.correct for r in gold] == [True, True, False, True]
    assert [r.correct for r in pred] == [True, True, False, False]
    assert compute_gjga(gold) == 0.75 and compute_jga(pred) == 0.50


def test_oracle_is_perfect(corpus):
    oracle = DeltaOracleBackend(corpus)
    assert compute_jga(run(corpus, oracle, Mode.PREDICTED)) == 1.0
    assert compute_gjga(run(corpus, oracle, Mode.GOLD)) == 1.0


def test_echo_backend_right_only_on_unchanged_turns(corpus):
    records = run(corpus, EchoBackend(), Mode.GOLD)
    expected = []
    for d in corpus.dialogues:
        prev = BeliefState()
        for t in d.turns:
            expected.append(t.state == prev)
            prev = t.state
    assert [r.correct for r in records] == expected


def test_turn_zero_gets_empty_state(corpus):
    for mode in Mode:
        for r in run(corpus, EchoBackend(), mode):
            if r.turn == 0:
                assert r.input_state == BeliefState()


def test_metric_errors():
    with pytest.raises(UndefinedMetricError):
        compute_jga([])
    records = run(synthetic.scripted_fixture(), EchoBackend(), Mode.GOLD)
    with pytest.raises(UsageError):
        compute_jga(records)


def test_gold_mode_is_order_independent(corpus):
    backend = ScriptedErrorBackend(corpus, every=2)
    shuffled = list(corpus.dialogues)
    random.Random(3).shuffle(shuffled)
    a = compute_gjga(run(corpus, backend, Mode.GOLD))
    b = compute_gjga(run(Corpus(tuple(shuffled), corpus.ontology), backend, Mode.GOLD))
    assert a == b


def test_predicted_mode_compounds(corpus):
    """An earlier injected error never makes a later turn right."""
    for every in (2, 3, 5):
        backend = ScriptedErrorBackend(corpus, every)
        pred = run(corpus, backend, Mode.PREDICTED)
        gold = run(corpus, backend, Mode.GOLD)
        for p, g in zip(pred, gold):
            assert p.correct <= g.correct
        by_dialogue = {}
        for p in pred:
            by_dialogue.setdefault(p.dialogue_id, []).append(p.correct)
        for flags in by_dialogue.values():
            first_wrong = flags.index(False) if False in flags else len(flags)
            assert not any(flags[first_wrong:])


def test_exact_match_ignores_slot_order():
    a = BeliefState([(SlotId("b", "x"), "1"), (SlotId("a", "y"), "2")])
    b = BeliefState([(SlotId("a", "y"), "2"), (SlotId("b", "x"), "1")])
    assert a == b and b == a and a == a and hash(a) == hash(b)


class Malformed:
    def __init__(self, bad_turns):
        self.bad_turns = bad_turns
        self.oracle = None

    def request(self, payload):
        did, turn = split_request_id(payload["id"])
        if turn in self.bad_turns:
            return {"id": payload["id"], "next_state": "this is not a state"}
        return {"id": payload["id"], "next_state": payload["prev_state"]}

    def close(self):
        pass


def test_malformed_response_scored_wrong_and_recorded():
    corpus = synthetic.scripted_fixture()
    records = run(corpus, Malformed({1}), Mode.GOLD)
    assert not records[1].correct and records[1].error.startswith("bad backend response")
    report = build_report({Mode.GOLD: records})
    assert len(report.errors) == 1


def test_transport_loss_aborts_dialogue_only(corpus):
    small = Corpus(corpus.dialogues[:3], corpus.ontology)
    oracle = DeltaOracleBackend(small)

    class Dies:
        def request(self, payload):
            did, turn = split_request_id(payload["id"])
            if did == small.dialogues[1].id and turn == 2:
                raise TransportError("gone")
            return oracle.request(payload)

        def close(self):
            pass

    records = run_csp_loop(small, Dies, Mode.PREDICTED)
    assert len(records) == small.n_turns
    lost = [r for r in records if r.error]
    assert {r.dialogue_id for r in lost} == {small.dialogues[1].id}
    assert [r.turn for r in lost] == list(range(2, len(small.dialogues[1])))
    assert all(r.correct for r in records if r.dialogue_id != small.dialogues[1].id)


def test_exclude_final_turn():
    corpus = synthetic.scripted_fixture()
    records = run(corpus, ScriptedErrorBackend(corpus), Mode.GOLD)
    assert compute_gjga(records, exclude_final=True) == pytest.approx(2 / 3)
    report = build_report({Mode.GOLD: records}, exclude_final=True)
    assert report.turns == 3 and report.jga is None


def test_report_breakdowns(corpus):
    backend = ScriptedErrorBackend(corpus)
    report = build_report({m: run(corpus, backend, m) for m in Mode})
    assert report.turns == corpus.n_turns
    assert set(report.per_dialogue) == {d.id for d in corpus.dialogues}
    assert report.per_turn["gjga"][2] == 0.0 and report.per_turn["gjga"][0] == 1.0
    assert 0 <= report.jga <= report.gjga <= 1
    assert "JGA" in report.summary()
    assert set(report.to_json()) >= {"jga", "gjga", "turns", "per_dialogue", "per_turn"}


def test_request_ids_round_trip():
    assert split_request_id(request_id("a#b", 12)) == ("a#b", 12)


def test_subprocess_backend(tmp_path):
    from wozloc.ingest import save_canonical
    corpus = synthetic.scripted_fixture()
    path = tmp_path / "c.json"
    save_canonical(corpus, path)
    cmd = [sys.executable, "-m", "wozloc.backends", "scripted", "--corpus", str(path)]
    records = run_csp_loop(corpus, lambda: JsonLineProcess(cmd, PARSE_PROTOCOL), Mode.GOLD, jobs=2)
    assert compute_gjga(records) == 0.75
    assert BOGUS_SLOT in records[2].predicted_state
    assert serialize_state(records[0].predicted_state) == 'train departure = " cambridge "'
