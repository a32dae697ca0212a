"""End-to-end acceptance checks.  Each test reports one line in the terminal summary."""
import json
import random
import subprocess
import sys
import time
from importlib import resources

import pytest

from conftest import report_criterion
from wozloc import synthetic
from wozloc.align import AlignmentConfig, CharSpan, align_span, find_occurrences
from wozloc.backends import DeltaOracleBackend, ScriptedErrorBackend
from wozloc.harness import Mode, compute_gjga, compute_jga, run_csp_loop
from wozloc.ingest import Corpus, Dialogue, Turn, load_canonical, save_canonical
from wozloc.lint import LintConfig, findings_by_kind, lint_corpus
from wozloc.mock_translator import MockTranslator
from wozloc.pipeline import corpus_faithfulness, translate_corpus
from wozloc.state import (
    DONTCARE_VALUE,
    BeliefState,
    NumericRange,
    SlotId,
    expand_range,
    parse_state,
    serialize_state,
)

PY = sys.executable


def bundled(name):
    with resources.as_file(resources.files("wozloc.data") / name) as path:
        return path


def random_state(rng, ontology):
    slots = rng.sample(ontology.slots, rng.randint(0, len(ontology.slots)))
    return BeliefState({s: DONTCARE_VALUE if rng.random() < 0.1 else rng.choice(ontology.values[s]) for s in slots})


# 1

def test_state_round_trip(ontology):
    rng = random.Random(1)
    start = time.perf_counter()
    failures = 0
    for _ in range(10_000):
        state = random_state(rng, ontology)
        failures += parse_state(serialize_state(state), ontology, strict=True) != state
    example = BeliefState({SlotId("train", "day"): "thursday", SlotId("train", "departure"): "cambridge"})
    rendered = serialize_state(example)
    elapsed = time.perf_counter() - start
    ok = (failures == 0 and rendered == 'train day = " thursday " train departure = " cambridge "'
          and serialize_state(BeliefState()) == "null" and parse_state("null") == BeliefState()
          and elapsed < 5)
    report_criterion(1, ok, f"{failures} round-trip failures in 10000 states, {elapsed:.2f}s")
    assert ok


# 2

def random_walk_dialogue(did, rng, ontology):
    """Dialogue whose states add, change, dontcare and clear slots at random."""
    turns, state = [], {}
    for i in range(rng.randint(1, 10)):
        for _ in range(rng.randint(0, 3)):
            slot = rng.choice(ontology.slots)
            move = rng.random()
            if move < 0.2:
                state.pop(slot, None)
            elif move < 0.3:
                state[slot] = DONTCARE_VALUE
            else:
                state[slot] = rng.choice(ontology.values[slot])
        if rng.random() < 0.05:
            state = {}
        turns.append(Turn(i, "", f"u{i}", BeliefState(state)))
    return Dialogue(did, tuple(turns))


def replay_oracle(corpus, every, gold_input):
    """Plain-dict replay of the scripted backend; returns (jga or gjga) as a fraction."""
    correct = total = 0
    for d in corpus.dialogues:
        gold = [{str(s): t.state[s].render() for s in t.state} for t in d.turns]
        prev_pred = {}
        for i, g in enumerate(gold):
            before = gold[i - 1] if i else {}
            source = before if gold_input else prev_pred
            pred = dict(source)
            for k in set(before) | set(g):
                if k not in g:
                    pred.pop(k, None)
                elif before.get(k) != g[k]:
                    pred[k] = g[k]
            if (i + 1) % every == 0:
                pred["zz_bogus slot"] = "injected"
            correct += pred == g
            total += 1
            prev_pred = pred
    return correct / total


def test_metric_oracle_equivalence(ontology):
    start = time.perf_counter()
    rng = random.Random(2)
    corpus = Corpus(tuple(random_walk_dialogue(f"r{i}", rng, ontology) for i in range(1000)), ontology)
    mismatches = []
    for every in (2, 3, 4):
        backend = ScriptedErrorBackend(corpus, every)
        jga = compute_jga(run_csp_loop(corpus, lambda: backend, Mode.PREDICTED))
        gjga = compute_gjga(run_csp_loop(corpus, lambda: backend, Mode.GOLD))
        expected = (replay_oracle(corpus, every, False), replay_oracle(corpus, every, True))
        if (jga, gjga) != expected:
            mismatches.append((every, (jga, gjga), expected))
    fixture = synthetic.scripted_fixture()
    backend = ScriptedErrorBackend(fixture, 3)
    worked = (compute_gjga(run_csp_loop(fixture, lambda: backend, Mode.GOLD)),
              compute_jga(run_csp_loop(fixture, lambda: backend, Mode.PREDICTED)))
    elapsed = time.perf_counter() - start
    ok = not mismatches and worked == (0.75, 0.5) and elapsed < 30
    report_criterion(2, ok, f"{len(mismatches)} metric mismatches over {corpus.n_turns} turns x 3 schedules; "
                            f"fixture GJGA={worked[0]} JGA={worked[1]}; {elapsed:.2f}s")
    assert ok


# 3

def test_oracle_identity(ontology):
    corpora = [synthetic.generate_corpus(30, seed=s) for s in range(3)]
    corpora += [synthetic.planted_corpus(k, 20, seed=1)[0] for k in synthetic.PLANT_KINDS]
    rng = random.Random(3)
    corpora.append(Corpus(tuple(random_walk_dialogue(f"w{i}", rng, ontology) for i in range(200)), ontology))
    scores = []
    for c in corpora:
        oracle = DeltaOracleBackend(c)
        scores.append((compute_jga(run_csp_loop(c, lambda: oracle, Mode.PREDICTED)),
                       compute_gjga(run_csp_loop(c, lambda: oracle, Mode.GOLD))))
    ok = all(s == (1.0, 1.0) for s in scores)
    report_criterion(3, ok, f"oracle JGA=GJGA=1.0 on {sum(s == (1.0, 1.0) for s in scores)}/{len(corpora)} corpora")
    assert ok


# 4

def tokens(n, width):
    return [(i * (width + 1), i * (width + 1) + width) for i in range(n)]


def permutation_trials():
    """(errors, contiguous-image errors, spans, contiguous spans) over 500 random permutations."""
    rng = random.Random(4)
    errors = contiguous_errors = spans = contiguous = 0
    for _ in range(500):
        n = rng.randint(1, 12)
        perm = list(range(n))
        rng.shuffle(perm)
        attn = [[1.0 if perm[s] == j else 0.0 for s in range(n)] for j in range(n)]
        src, tgt = tokens(n, 2), tokens(n, 3)
        for a in range(n):
            for b in range(a + 1, n + 1):
                image = sorted(perm[a:b])
                got = align_span(CharSpan(src[a][0], src[b - 1][1]), src, tgt, attn)
                selected = [j for j, (x, y) in enumerate(tgt) if got.start <= x and y <= got.end]
                spans += 1
                wrong = selected != image
                errors += wrong
                if image == list(range(image[0], image[-1] + 1)):
                    contiguous += 1
                    contiguous_errors += wrong
    return errors, contiguous_errors, spans, contiguous


@pytest.fixture(scope="module")
def trials():
    start = time.perf_counter()
    result = permutation_trials()
    return result, time.perf_counter() - start


def worked_threshold_example():
    scores = [0.1, 0.6, 0.5, 0.2, 0.1]
    tgt = tokens(5, 2)
    got = align_span(CharSpan(0, 1), [(0, 1), (2, 3)], tgt, [[s, 1 - s] for s in scores], AlignmentConfig(0.5))
    return [j for j, (x, y) in enumerate(tgt) if got.start <= x and y <= got.end]


@pytest.mark.xfail(strict=True, reason="a contiguous output span cannot equal a scattered permutation image")
def test_alignment_recovery_all_spans(trials):
    (errors, contiguous_errors, spans, _), elapsed = trials
    ok = errors == 0 and worked_threshold_example() == [1, 2] and elapsed < 10
    report_criterion(4, ok, f"{errors}/{spans} spans differ from the exact permuted image "
                            f"({errors - contiguous_errors} on non-contiguous images); {elapsed:.2f}s")
    assert ok


def test_alignment_recovery_contiguous_images(trials):
    (_, contiguous_errors, _, contiguous), elapsed = trials
    ok = contiguous_errors == 0 and worked_threshold_example() == [1, 2] and elapsed < 10
    report_criterion(4.1, ok, f"{contiguous_errors}/{contiguous} errors on spans with contiguous images; "
                              f"threshold example selects {worked_threshold_example()}")
    assert ok


# 5

def test_faithfulness_under_alignment():
    start = time.perf_counter()
    corpus = load_canonical(bundled("synthetic_corpus.json"), strict=True)
    args = (synthetic.dependency_dictionary(), synthetic.target_ontology(), 0, "en", "de")
    aligned = translate_corpus(corpus, MockTranslator, *args)
    ablated = translate_corpus(corpus, lambda: MockTranslator(mode="noisy"), *args, align=False)
    hit, ablated_hit = corpus_faithfulness(corpus, aligned.corpus), corpus_faithfulness(corpus, ablated.corpus)
    elapsed = time.perf_counter() - start
    ok = hit == 1.0 and ablated_hit < 0.5 and not aligned.failed and elapsed < 60
    report_criterion(5, ok, f"verbatim values aligned {100 * hit:.1f}%, noisy without alignment "
                            f"{100 * ablated_hit:.1f}%; {elapsed:.2f}s")
    assert ok


# 6

def test_dictionary_dependencies():
    corpus = load_canonical(bundled("synthetic_corpus.json"), strict=True)
    dictionary = synthetic.dependency_dictionary()
    run = translate_corpus(corpus, MockTranslator, dictionary, synthetic.target_ontology(), 0, "en", "de")
    by_id = {d.id: d for d in run.corpus.dialogues}
    triggered = violations = 0
    for d in corpus.dialogues:
        values = {(s, v) for t in d.turns for s, v in t.state.regular_items()}
        for entry in dictionary.entries:
            if (entry.trigger.slot, entry.trigger.value) not in values:
                continue
            triggered += 1
            for src, tgt in zip(d.turns, by_id[d.id].turns):
                for dv in (entry.trigger, *entry.consequents):
                    if src.state.get(dv.slot) is None or src.state[dv.slot].text != dv.value:
                        continue
                    if tgt.state[dv.slot].text != dv.target:
                        violations += 1
                    elif find_occurrences(src.text, dv.value) and not find_occurrences(tgt.text, dv.target):
                        violations += 1
    ok = triggered > 0 and violations == 0
    report_criterion(6, ok, f"{violations} violations across {triggered} triggered dialogues")
    assert ok


# 7

def test_lint_planted_corpora():
    start = time.perf_counter()
    details, ok = [], True
    cfg = LintConfig(inferable_slots=synthetic.INFERABLE)
    for kind in synthetic.PLANT_KINDS:
        corpus, expected = synthetic.planted_corpus(kind, 100, seed=7)
        found = findings_by_kind(lint_corpus(corpus, cfg).findings)
        flagged = set().union(*found.values()) if found else set()
        hits = len(found[kind] & expected)
        precision = hits / len(flagged) if flagged else 0.0
        recall = hits / len(expected)
        ok &= precision == recall == 1.0
        details.append(f"{kind} P={precision:.2f} R={recall:.2f}")
    expanded = expand_range(NumericRange(100, 150), 83)
    ok &= (expanded.low, expanded.high) == (80, 150)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30
    report_criterion(7, ok, "; ".join(details) + f"; 100-150 + 83 -> {expanded.low}-{expanded.high}; "
                                                 f"{elapsed:.2f}s")
    assert ok


def test_range_example_is_not_anomalous():
    budget = SlotId("restaurant", "budget")
    d = Dialogue("r", (Turn(0, "", "between 100-150", BeliefState({budget: "100-150"})),
                       Turn(1, "i only found one place , the cost is 83 yuan per person .", "ok",
                            BeliefState({budget: "80-150"}))))
    report = lint_corpus(Corpus((d,), synthetic.source_ontology()), LintConfig())
    ok = report.findings == []
    report_criterion(7.1, ok, f"100-150 -> 80-150 with 83 in the agent turn: {len(report.findings)} findings")
    assert ok


# 8

def cli(*args, env=None):
    return subprocess.run([PY, "-m", "wozloc", *args], capture_output=True, text=True, env=env)


def test_determinism(tmp_path):
    corpus_path = bundled("synthetic_corpus.json")
    outputs = {}
    for name, jobs in [("t1", "1"), ("t1b", "1"), ("t8", "8")]:
        out = tmp_path / f"{name}.json"
        proc = cli("translate", "--in", str(corpus_path), "--src", "en", "--tgt", "de",
                   "--client", f"{PY} -m wozloc.mock_translator --mode noisy",
                   "--dict", str(bundled("synthetic_dictionary.json")),
                   "--target-ontology", str(bundled("synthetic_target_ontology.json")),
                   "--seed", "11", "--jobs", jobs, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        outputs[name] = out.read_bytes()
    planted, _ = synthetic.planted_corpus("DelayedAnnotation", 100, seed=3)
    planted_path = tmp_path / "planted.json"
    save_canonical(planted, planted_path)
    for name, jobs in [("l1", "1"), ("l1b", "1"), ("l8", "8")]:
        out = tmp_path / f"{name}.json"
        proc = cli("lint", "--in", str(planted_path), "--sample", "200", "--seed", "7", "--jobs", jobs,
                   "--report", str(out))
        assert proc.returncode == 0, proc.stderr
        outputs[name] = out.read_bytes()
    same_translate = outputs["t1"] == outputs["t1b"] == outputs["t8"]
    same_lint = outputs["l1"] == outputs["l1b"] == outputs["l8"]
    ok = same_translate and same_lint and json.loads(outputs["l1"])["inspected_turns"] == 200
    report_criterion(8, ok, f"translate identical: {same_translate}; lint --sample identical: {same_lint} "
                            f"(2 runs, --jobs 1 vs 8)")
    assert ok
