import random
from importlib import resources

from wozloc import synthetic
from wozloc.align import find_occurrences
from wozloc.ingest import load_canonical


def test_bundled_files_match_generator(tmp_path):
    synthetic.write_bundle(tmp_path)
    data = resources.files("wozloc.data")
    for path in sorted(tmp_path.iterdir()):
        assert path.read_text(encoding="utf-8") == (data / path.name).read_text(encoding="utf-8"), path.name


def test_default_corpus_size():
    corpus = synthetic.generate_corpus()
    assert len(corpus) == 50 and corpus.n_turns == 400


def test_bundled_corpus_loads_cleanly():
    with resources.as_file(resources.files("wozloc.data") / "synthetic_corpus.json") as path:
        corpus = load_canonical(path, strict=True)
    assert corpus == synthetic.generate_corpus()


def test_generation_is_seeded():
    assert synthetic.generate_corpus(5, seed=3) == synthetic.generate_corpus(5, seed=3)
    assert synthetic.generate_corpus(5, seed=3) != synthetic.generate_corpus(5, seed=4)


def test_states_are_valid_and_user_said_values_are_verbatim():
    corpus = synthetic.generate_corpus(20, seed=1)
    for d in corpus.dialogues:
        assert d.turns[-1].user and not d.turns[0].agent
        for t in d.turns:
            assert corpus.ontology.validate_state(t.state) == []


def test_every_state_value_was_said_by_someone():
    corpus = synthetic.generate_corpus(20, seed=2)
    for d in corpus.dialogues:
        said = " ".join(f"{t.agent} {t.user}" for t in d.turns)
        for t in d.turns:
            for slot, value in t.state.regular_items():
                if slot not in synthetic.INFERABLE:
                    assert find_occurrences(said, value), (d.id, slot, value)


def test_planting_reports_every_dialogue():
    for kind in synthetic.PLANT_KINDS:
        corpus, expected = synthetic.planted_corpus(kind, 10, seed=9)
        assert len(expected) == 10 and {did for did, _, _ in expected} == {d.id for d in corpus.dialogues}


def test_generate_dialogue_respects_domains():
    d = synthetic.generate_dialogue("x", random.Random(0), domains=["train"])
    assert {s.domain for t in d.turns for s, _ in t.state.items()} == {"train"}
