"""Deterministic synthetic corpora for tests, demos and the bundled fixtures.

The clean generator produces template dialogues in which every annotated value
is said verbatim in the turn it enters the state, so the linter finds nothing
and the mock translator's ground truth is computable.  ``planted_corpus``
injects one error of a given lint kind per dialogue and records where.

Regenerate the bundled files with::

    python -m wozloc.synthetic --write src/wozloc/data
"""
from __future__ import annotations

import argparse
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .align import find_occurrences
from .ingest import Corpus, Dialogue, Turn, dump_corpus
from .pipeline import DependencyDictionary
from .state import BeliefState, Ontology, SlotId

AREAS = ["north", "south", "east", "west", "centre"]
PEOPLE = [str(i) for i in range(1, 9)]
STATIONS = ["cambridge", "london kings cross", "birmingham new street", "stevenage", "ely", "norwich"]

SOURCE_VALUES: dict[tuple[str, str], list[str]] = {
    ("restaurant", "food"): ["fast food", "hotpot", "italian", "indian", "chinese", "thai"],
    ("restaurant", "price"): ["cheap", "moderate", "expensive"],
    ("restaurant", "area"): AREAS,
    ("restaurant", "name"): ["golden wok", "curry garden", "pizza hut", "noodle bar", "little seoul", "grill house"],
    ("restaurant", "budget"): ["50-100", "100-150", "150-200", "80-150", "90-150"],
    ("restaurant", "book people"): PEOPLE,
    ("hotel", "name"): ["acorn guest house", "city lodge", "alpha hotel", "kings inn", "avalon"],
    ("hotel", "area"): AREAS,
    ("hotel", "stars"): ["2", "3", "4", "5"],
    ("hotel", "book stay"): ["1", "2", "3", "4", "5"],
    ("hotel", "book people"): PEOPLE,
    ("train", "day"): ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"],
    ("train", "departure"): STATIONS,
    ("train", "destination"): STATIONS,
    ("train", "leaveat"): ["09:15", "10:00", "13:30", "17:45"],
    ("train", "book people"): PEOPLE,
    ("attraction", "type"): ["museum", "park", "theatre", "college"],
    ("attraction", "area"): AREAS,
    ("attraction", "name"): ["kettles yard", "botanic garden", "castle hill", "corn exchange"],
}

TARGET_AREAS = ["norden", "sueden", "osten", "westen", "zentrum"]
TARGET_VALUES: dict[tuple[str, str], list[str]] = {
    ("restaurant", "food"): ["schnellimbiss", "feuertopf", "italienisch", "indisch", "chinesisch", "thailaendisch"],
    ("restaurant", "price"): ["billig", "mittel", "teuer"],
    ("restaurant", "area"): TARGET_AREAS,
    ("restaurant", "name"): ["goldener wok", "curry garten", "pizzeria sole", "nudel stube", "klein seoul", "grill haus"],
    ("restaurant", "budget"): SOURCE_VALUES[("restaurant", "budget")],
    ("restaurant", "book people"): PEOPLE,
    ("hotel", "name"): ["gasthaus eichel", "stadt lodge", "hotel alpha", "koenigs hof", "haus avalon"],
    ("hotel", "area"): TARGET_AREAS,
    ("hotel", "stars"): SOURCE_VALUES[("hotel", "stars")],
    ("hotel", "book stay"): SOURCE_VALUES[("hotel", "book stay")],
    ("hotel", "book people"): PEOPLE,
    ("train", "day"): ["montag", "dienstag", "mittwoch", "donnerstag", "freitag", "samstag", "sonntag"],
    ("train", "departure"): ["berlin", "hamburg", "koeln", "bonn", "ulm", "kiel"],
    ("train", "destination"): ["berlin", "hamburg", "koeln", "bonn", "ulm", "kiel"],
    ("train", "leaveat"): SOURCE_VALUES[("train", "leaveat")],
    ("train", "book people"): PEOPLE,
    ("attraction", "type"): ["ausstellung", "grünanlage", "schauspielhaus", "hochschule"],
    ("attraction", "area"): TARGET_AREAS,
    ("attraction", "name"): ["kesselhof", "botanischer garten", "burgberg", "kornbörse"],
}

DOMAINS = ("restaurant", "hotel", "train", "attraction")

# slot ordering constraints per domain: names are proposed once the domain is active
DOMAIN_SLOTS = {
    "restaurant": ["food", "price", "area", "budget", "name", "book people"],
    "hotel": ["area", "stars", "name", "book stay", "book people"],
    "train": ["departure", "destination", "day", "leaveat", "book people"],
    "attraction": ["type", "area", "name"],
}
PROPOSED = {"name"}

# food value -> the price it implies, mirrored in the dependency dictionary
PRICE_OF_FOOD = {"fast food": "cheap", "hotpot": "expensive"}

USER_TEMPLATES = {
    ("restaurant", "food"): "i want to eat {v} .",
    ("restaurant", "price"): "something in the {v} price range please .",
    ("restaurant", "area"): "the restaurant should be in the {v} of town .",
    ("restaurant", "budget"): "we can spend {v} per person .",
    ("restaurant", "book people"): "please book a table for {v} people .",
    ("hotel", "area"): "i need a hotel in the {v} .",
    ("hotel", "stars"): "the hotel should have {v} stars .",
    ("hotel", "book stay"): "we will stay {v} nights .",
    ("hotel", "book people"): "please book rooms for {v} people .",
    ("train", "departure"): "i am leaving from {v} .",
    ("train", "destination"): "i am going to {v} .",
    ("train", "day"): "i want to travel on {v} .",
    ("train", "leaveat"): "the train should leave at {v} .",
    ("train", "book people"): "please book tickets for {v} people .",
    ("attraction", "type"): "i want to visit a {v} .",
    ("attraction", "area"): "the attraction should be in the {v} .",
}
PROPOSALS = {
    "restaurant": "how about {v} ?",
    "hotel": "i recommend {v} .",
    "attraction": "you could visit {v} .",
}
ACCEPT = ["yes , that sounds good .", "great , i will take it .", "okay . that works for me ."]
AGENT_FILLERS = ["sure , what else ?", "okay , noted .", "i can help with that .", "anything else ?"]
USER_FILLERS = ["let me think .", "hmm , give me a moment .", "okay . just a second ."]
PREFIXES = ["", "", "okay . ", "well . "]
GREETING = "hello , i need some help . "
FAREWELL_AGENT = "is there anything else ?"
FAREWELL_USER = "no , thank you . goodbye ."

# slot used by planted InferredSlot errors
INFERABLE = frozenset({SlotId("restaurant", "price")})


def _ontology(values: dict[tuple[str, str], list[str]]) -> Ontology:
    slots = tuple(SlotId(d, s) for d, s in values)
    return Ontology(DOMAINS, slots, {SlotId(d, s): tuple(v) for (d, s), v in values.items()})


def source_ontology() -> Ontology:
    return _ontology(SOURCE_VALUES)


def target_ontology() -> Ontology:
    return _ontology(TARGET_VALUES)


def dependency_dictionary() -> DependencyDictionary:
    food, price = ("restaurant", "food"), ("restaurant", "price")
    tgt = dict(zip(SOURCE_VALUES[price], TARGET_VALUES[price]))
    ftgt = dict(zip(SOURCE_VALUES[food], TARGET_VALUES[food]))
    entries = []
    for f, p in PRICE_OF_FOOD.items():
        entries.append({
            "trigger": {"domain": food[0], "slot": food[1], "value": f, "target": ftgt[f]},
            "consequents": [{"domain": price[0], "slot": price[1], "value": p, "target": tgt[p]}],
        })
    return DependencyDictionary.from_json({"entries": entries})


LEXICON = {
    "i": "ich", "want": "will", "to": "zu", "eat": "essen", "something": "etwas", "in": "in", "the": "die",
    "price": "preis", "range": "bereich", "please": "bitte", "restaurant": "gaststätte", "should": "soll",
    "be": "sein", "of": "von", "town": "stadt", "we": "wir", "can": "können", "spend": "ausgeben",
    "per": "pro", "person": "person", "book": "buchen", "a": "ein", "table": "tisch", "for": "für",
    "people": "leute", "need": "brauche", "hotel": "hotel", "have": "haben", "stars": "sterne",
    "will": "werden", "stay": "bleiben", "nights": "nächte", "rooms": "zimmer", "am": "bin",
    "leaving": "abfahrend", "from": "aus", "going": "fahrend", "travel": "reisen", "on": "am",
    "train": "zug", "leave": "abfahren", "at": "um", "tickets": "fahrkarten", "visit": "besuchen",
    "attraction": "sehenswürdigkeit", "how": "wie", "about": "wäre", "?": "?", "recommend": "empfehle",
    ".": ".", ",": ",", "you": "du", "could": "könntest", "yes": "ja", "that": "das", "sounds": "klingt",
    "good": "gut", "great": "toll", "take": "nehmen", "it": "es", "okay": "okay", "works": "passt",
    "me": "mir", "sure": "sicher", "what": "was", "else": "sonst", "noted": "notiert", "help": "helfen",
    "with": "mit", "anything": "irgendetwas", "let": "lass", "think": "denken", "hmm": "hmm",
    "give": "gib", "moment": "moment", "just": "nur", "second": "sekunde", "well": "also",
    "hello": "hallo", "some": "etwas", "is": "ist", "there": "da", "no": "nein", "thank": "danke",
    "goodbye": "tschüss", "only": "nur", "found": "gefunden", "one": "ein", "place": "ort",
    "cost": "kosten", "yuan": "yuan", "my": "mein", "address": "adresse",
    "its": "seine", "where": "wo", "exactly": "genau", "called": "genannt",
}


# clean dialogue generation

@dataclass
class _Plan:
    """Per-dialogue script: one event per turn before the farewell."""
    events: list[tuple[str, SlotId | None, str | None]]   # (kind, slot, value); kind in user/propose/filler


def _pick_values(rng: random.Random, domains: list[str], force: dict[SlotId, str]) -> list[tuple[SlotId, str]]:
    chosen: list[tuple[SlotId, str]] = []
    used: list[str] = []

    def clash(v: str) -> bool:
        return any(v in u or u in v for u in used)

    for dom in domains:
        slots = list(DOMAIN_SLOTS[dom])
        # first slot stays first so that proposals happen in an active domain
        head, rest = slots[0], [s for s in slots[1:] if s not in PROPOSED]
        rng.shuffle(rest)
        keep = [head] + rest[: rng.randint(1, len(rest))]
        if "name" in slots and rng.random() < 0.7:
            keep.insert(rng.randint(1, len(keep)), "name")
        for s in slots:
            sid = SlotId(dom, s)
            if sid in force and s not in keep:
                keep.append(s)
        for s in keep:
            sid = SlotId(dom, s)
            if sid in force:
                v = force[sid]
            elif s == "price" and any(c.slot == "food" and c.domain == dom and c_v in PRICE_OF_FOOD
                                      for c, c_v in chosen):
                food = next(c_v for c, c_v in chosen if c == SlotId(dom, "food"))
                v = PRICE_OF_FOOD[food]
            else:
                options = [v for v in SOURCE_VALUES[(dom, s)] if not clash(v)]
                if s == "budget":
                    options = [v for v in options if v in ("50-100", "100-150", "150-200")]
                if not options:
                    continue
                v = rng.choice(options)
            if clash(v):
                continue
            chosen.append((sid, v))
            used.append(v)
    return chosen


def generate_dialogue(dialogue_id: str, rng: random.Random, n_turns: int = 8,
                      domains: list[str] | None = None, force: dict[SlotId, str] | None = None) -> Dialogue:
    """One clean dialogue of exactly ``n_turns`` turns (the last is a farewell)."""
    if domains is None:
        domains = rng.sample(DOMAINS, rng.choice((1, 2)))
    values = _pick_values(rng, domains, force or {})
    n_events = n_turns - 1
    # at least one filler after the first turn
    values = values[: n_events - 1]
    events: list[tuple[str, SlotId | None, str | None]] = [
        ("propose" if sid.slot in PROPOSED else "user", sid, v) for sid, v in values]
    while len(events) < n_events:
        events.insert(rng.randint(1, len(events)), ("filler", None, None))

    turns = []
    state: dict[SlotId, str] = {}
    for i, (kind, sid, v) in enumerate(events):
        agent = "" if i == 0 else rng.choice(AGENT_FILLERS)
        if kind == "user":
            user = rng.choice(PREFIXES) + USER_TEMPLATES[(sid.domain, sid.slot)].format(v=v)
        elif kind == "propose":
            agent = PROPOSALS[sid.domain].format(v=v)
            user = rng.choice(ACCEPT)
        else:
            user = rng.choice(USER_FILLERS)
        if i == 0:
            user = GREETING + user
        if sid is not None:
            state[sid] = v
        turns.append(Turn(i, agent, user, BeliefState(state)))
    turns.append(Turn(n_events, FAREWELL_AGENT, FAREWELL_USER, BeliefState(state)))
    return Dialogue(dialogue_id, turns, "en")


def generate_corpus(n_dialogues: int = 50, n_turns: int = 8, seed: int = 0, split: str = "test") -> Corpus:
    rng = random.Random(seed)
    dialogues = [generate_dialogue(f"syn-{i:04d}", rng, n_turns) for i in range(n_dialogues)]
    return Corpus(tuple(dialogues), source_ontology(), split)


def scripted_fixture() -> Corpus:
    """Four turns, one new slot per turn; used for the worked metric example."""
    slots = [("train", "departure", "cambridge"), ("train", "destination", "ely"),
             ("train", "day", "thursday"), ("train", "leaveat", "10:00")]
    turns, state = [], {}
    for i, (d, s, v) in enumerate(slots):
        state[SlotId(d, s)] = v
        agent = "" if i == 0 else "okay , noted ."
        turns.append(Turn(i, agent, USER_TEMPLATES[(d, s)].format(v=v), BeliefState(state)))
    return Corpus((Dialogue("scripted-0", turns, "en"),), source_ontology(), "test")


# planted errors

PLANT_KINDS = ("InexactMatch", "MissingSlot", "ExtraSlot", "DelayedAnnotation",
               "EmptyAnnotation", "RangeAnomaly", "InferredSlot")

Expected = tuple[str, int, SlotId | None]


def _with_states(d: Dialogue, states: list[BeliefState], texts: dict[int, tuple[str, str]] | None = None) -> Dialogue:
    texts = texts or {}
    turns = []
    for t, s in zip(d.turns, states):
        agent, user = texts.get(t.index, (t.agent, t.user))
        turns.append(Turn(t.index, agent, user, s))
    return Dialogue(d.id, turns, d.language)


def _intro_turns(d: Dialogue) -> list[tuple[int, SlotId, str]]:
    prev: BeliefState = BeliefState()
    out = []
    for t in d.turns:
        for sid, v in t.state.regular_items():
            if prev.get(sid) != t.state[sid]:
                out.append((t.index, sid, v))
        prev = t.state
    return out


def _drop(state: BeliefState, sid: SlotId) -> BeliefState:
    return BeliefState({k: v for k, v in state.items() if k != sid})


def _add(state: BeliefState, sid: SlotId, value: str) -> BeliefState:
    return BeliefState({**state, sid: value})


def _said_anywhere(d: Dialogue, value: str) -> bool:
    return any(find_occurrences(t.text, value) for t in d.turns)


def _near_anywhere(d: Dialogue, value: str) -> bool:
    """Any substring within edit distance 1 (brute force over windows)."""
    from .lint import levenshtein
    for t in d.turns:
        text = t.text
        for a in range(len(text)):
            for b in range(a + max(1, len(value) - 1), min(len(text), a + len(value) + 1) + 1):
                if levenshtein(value, text[a:b]) <= 1:
                    return True
    return False


def _said_values(d: Dialogue) -> set[str]:
    return {v for v in source_ontology().value_owners() if _said_anywhere(d, v)}


def _fillers(d: Dialogue) -> list[int]:
    return [t.index for t in d.turns if any(t.user.endswith(f) for f in USER_FILLERS)]


def _plant_empty(d, rng):
    cands = [t for t in _fillers(d) if 0 < t < len(d) - 1 and len(d.turns[t - 1].state)]
    if not cands:
        return None
    t = rng.choice(cands)
    states = d.states()
    states[t] = BeliefState()
    return _with_states(d, states), [(d.id, t, None)]


def _plant_unsaid(d, rng, inferable: bool):
    """Add an annotation nobody said, from turn t on."""
    onto = source_ontology()
    active = sorted(d.turns[-1].state.domains())
    if inferable:
        options = [s for s in INFERABLE if s.domain in active]
    else:
        options = [s for s in onto.slots if s.domain in active and s not in INFERABLE
                   and s.slot not in ("budget",)]
    options = [s for s in options if s not in d.turns[-1].state]
    if not options:
        return None
    sid = rng.choice(sorted(options))
    first = max(1, min(t.index for t in d.turns if sid.domain in t.state.domains()))
    if first > len(d) - 2:
        return None
    t = rng.randint(first, len(d) - 2)
    values = [v for v in onto.values[sid] if len(v) >= 2]
    rng.shuffle(values)
    v = next((v for v in values if not _said_anywhere(d, v) and not _near_anywhere(d, v)), None)
    if v is None:
        return None
    states = [_add(s, sid, v) if i >= t else s for i, s in enumerate(d.states())]
    return _with_states(d, states), [(d.id, t, sid)]


def _mutate(value: str, rng: random.Random) -> str:
    letters = [i for i, ch in enumerate(value) if ch.isalpha() and 0 < i < len(value) - 1]
    i = rng.choice(letters)
    repl = "q" if value[i] != "q" else "x"
    return value[:i] + repl + value[i + 1:]


def _plant_inexact(d, rng):
    cands = [(t, sid, v) for t, sid, v in _intro_turns(d) if sum(ch.isalpha() for ch in v) >= 3]
    if not cands:
        return None
    t, sid, v = rng.choice(cands)
    turn = d.turns[t]
    near = _mutate(v, rng)
    agent, user = turn.agent.replace(v, near), turn.user.replace(v, near)
    out = _with_states(d, d.states(), {t: (agent, user)})
    if _said_anywhere(out, v) or _said_values(out) - _said_values(d):
        return None
    return out, [(d.id, t, sid)]


def _plant_missing(d, rng):
    cands = []
    for t, sid, v in _intro_turns(d):
        if sid.slot in PROPOSED and sid.domain in d.turns[t - 1].state.domains():
            cands.append((t, sid, v))
    if not cands:
        return None
    t, sid, v = rng.choice(cands)
    states = [_drop(s, sid) if i >= t else s for i, s in enumerate(d.states())]
    user = f"where is {v} exactly ?"
    return _with_states(d, states, {t: (d.turns[t].agent, user)}), [(d.id, t, sid)]


def _plant_delayed(d, rng):
    cands = [(t, sid, v) for t, sid, v in _intro_turns(d)
             if t < len(d) - 1 and not find_occurrences(d.turns[t + 1].text, v)]
    if not cands:
        return None
    t, sid, v = rng.choice(cands)
    states = d.states()
    states[t] = _drop(states[t], sid)
    return _with_states(d, states), [(d.id, t, sid)]


def _plant_range(d, rng):
    budget = SlotId("restaurant", "budget")
    intro = [t for t, sid, v in _intro_turns(d) if sid == budget and v == "100-150"]
    if not intro:
        return None
    later = [t for t in _fillers(d) if intro[0] < t]
    if not later:
        return None
    t = rng.choice(later)
    agent = "i only found one place , the cost is 83 yuan per person ."
    states = [_add(s, budget, "90-150") if i >= t else s for i, s in enumerate(d.states())]
    return _with_states(d, states, {t: (agent, d.turns[t].user)}), [(d.id, t, budget)]


_PLANTERS = {
    "EmptyAnnotation": _plant_empty,
    "ExtraSlot": lambda d, rng: _plant_unsaid(d, rng, False),
    "InferredSlot": lambda d, rng: _plant_unsaid(d, rng, True),
    "InexactMatch": _plant_inexact,
    "MissingSlot": _plant_missing,
    "DelayedAnnotation": _plant_delayed,
    "RangeAnomaly": _plant_range,
}

_SCENARIO = {
    "InferredSlot": (["restaurant"], {}),
    "MissingSlot": (None, {}),
    "RangeAnomaly": (["restaurant"], {SlotId("restaurant", "budget"): "100-150"}),
}


def plant_dialogue(kind: str, dialogue_id: str, rng: random.Random, n_turns: int = 8) -> tuple[Dialogue, list[Expected]]:
    """A clean dialogue with exactly one planted error of ``kind``."""
    domains, force = _SCENARIO.get(kind, (None, {}))
    for _ in range(1000):
        d = generate_dialogue(dialogue_id, rng, n_turns, list(domains) if domains else None, force)
        if kind == "InferredSlot" and SlotId("restaurant", "price") in d.turns[-1].state:
            continue
        planted = _PLANTERS[kind](d, rng)
        if planted is not None:
            return planted
    raise RuntimeError(f"could not plant {kind} in {dialogue_id}")


def planted_corpus(kind: str, n_dialogues: int = 100, seed: int = 0, n_turns: int = 8) -> tuple[Corpus, set[Expected]]:
    if kind not in _PLANTERS:
        raise ValueError(f"unknown kind {kind!r}")
    rng = random.Random(f"{kind}:{seed}")
    dialogues, expected = [], set()
    for i in range(n_dialogues):
        d, exp = plant_dialogue(kind, f"{kind.lower()}-{i:04d}", rng, n_turns)
        dialogues.append(d)
        expected.update(exp)
    return Corpus(tuple(dialogues), source_ontology(), "test"), expected


def one_of_each(seed: int = 0) -> tuple[Corpus, set[Expected]]:
    """One planted error per non-informational kind, each in its own dialogue."""
    rng = random.Random(seed)
    dialogues, expected = [], set()
    for kind in PLANT_KINDS:
        if kind == "InferredSlot":
            continue
        d, exp = plant_dialogue(kind, f"each-{kind.lower()}", rng)
        dialogues.append(d)
        expected.update((kind,) + e for e in exp)
    return Corpus(tuple(dialogues), source_ontology(), "test"), expected


# bundled files

def write_bundle(directory: str | Path) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    def dump(name: str, obj) -> None:
        (out / name).write_text(json.dumps(obj, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    (out / "synthetic_corpus.json").write_text(dump_corpus(generate_corpus()), encoding="utf-8")
    dump("synthetic_target_ontology.json", target_ontology().to_json())
    dump("synthetic_dictionary.json", dependency_dictionary().to_json())
    dump("mock_lexicon.json", dict(sorted(LEXICON.items())))


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="write the bundled synthetic fixtures")
    parser.add_argument("--write", required=True, metavar="DIR")
    args = parser.parse_args(argv)
    write_bundle(args.write)


if __name__ == "__main__":
    main()
