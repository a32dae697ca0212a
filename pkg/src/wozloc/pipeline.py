"""Dialogue translation with entity alignment.

Utterances are quote-stripped, split into sentences and translated one
sentence at a time.  Every annotated value found in the source is located in
the translation (numeric heuristics first, cross-attention otherwise) and
overwritten with the value chosen for it by a per-dialogue substitution plan,
which is also used to rewrite the gold states.
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .align import (
    AlignmentConfig,
    AlignmentFailure,
    CharSpan,
    Sentence,
    align_span,
    classify_numeric,
    detect_entity_spans,
    find_occurrences,
    normalize_rows,
    numeric_span_recover,
    split_sentences,
    strip_quotes,
)
from .ingest import Corpus, Dialogue, Turn
from .state import BeliefState, Ontology, SlotId, SlotValue, normalize_value
from .wire import ProtocolError, TransportError, byte_to_char_offsets, map_with_connections

log = logging.getLogger(__name__)

STRATEGIES = ("random", "identity", "dictionary")


class PipelineError(Exception):
    pass


class PlanError(PipelineError):
    pass


# translator client

@dataclass(frozen=True)
class Translation:
    text: str
    src_offsets: tuple[tuple[int, int], ...]
    tgt_offsets: tuple[tuple[int, int], ...]
    attention: tuple[tuple[float, ...], ...]


class TranslatorClient:
    """Wraps a connection (stdio worker, HTTP endpoint or in-process object with ``request``)."""

    def __init__(self, conn: Any, src_lang: str, tgt_lang: str):
        self.conn = conn
        self.src_lang = src_lang
        self.tgt_lang = tgt_lang
        self._counter = 0

    def translate(self, text: str) -> Translation:
        self._counter += 1
        req = {"id": str(self._counter), "src_lang": self.src_lang, "tgt_lang": self.tgt_lang, "text": text}
        reply = self.conn.request(req)
        try:
            translation = reply["translation"]
            src = byte_to_char_offsets(text, reply["src_token_offsets"])
            tgt = byte_to_char_offsets(translation, reply["tgt_token_offsets"])
            attn = normalize_rows(reply["attention"])
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"malformed translator response: {e!r}") from e
        if len(attn) != len(tgt) or any(len(row) != len(src) for row in attn):
            raise ProtocolError("attention shape does not match the token offsets")
        return Translation(translation, tuple(src), tuple(tgt), tuple(tuple(r) for r in attn))

    def close(self) -> None:
        self.conn.close()


# per-utterance translation

@dataclass
class UtteranceTranslation:
    text: str
    spans: list[CharSpan]
    trace: list[tuple[CharSpan, str]] = field(default_factory=list)   # (source span, method)


def _merge_for_spans(sentences: list[Sentence], spans: Sequence[CharSpan], text: str) -> list[Sentence]:
    """Join sentences that a span would otherwise cut in two."""
    merged: list[Sentence] = []
    for sent in sentences:
        if merged and any(sp.start < merged[-1].end < sp.end for sp in spans):
            prev = merged.pop()
            sent = Sentence(text[prev.offset:sent.end], prev.offset)
        merged.append(sent)
    return merged


def translate_utterance(
    utterance: str,
    spans: Sequence[CharSpan],
    client: TranslatorClient,
    cfg: AlignmentConfig = AlignmentConfig(),
    align: bool = True,
) -> UtteranceTranslation:
    clean, qmap = strip_quotes(utterance)
    moved = []
    for sp in spans:
        a, b = qmap.to_clean(sp.start), qmap.to_clean(sp.end)
        if b > a:
            moved.append(CharSpan(a, b, sp.slot, sp.value))
    sentences = _merge_for_spans(split_sentences(clean), moved, clean)

    pieces: list[str] = []
    out_spans: list[CharSpan] = []
    trace: list[tuple[CharSpan, str]] = []
    pos = 0
    for sent in sentences:
        tr = client.translate(sent.text)
        text = tr.text
        placed: list[CharSpan] = []
        local_spans = [sp for sp in moved if sent.offset <= sp.start < sent.end] if align else []
        for sp in local_spans:
            local = sp.shift(-sent.offset)
            target, method = None, "attention"
            if cfg.numeric_heuristics_enabled:
                target = numeric_span_recover(sp.value, text, sp.slot)
                method = "numeric"
            if target is None:
                method = "attention"
                try:
                    target = align_span(local, tr.src_offsets, tr.tgt_offsets, tr.attention, cfg)
                except AlignmentFailure as e:
                    log.debug("alignment failed for %r: %s", sp.value, e)
                    target = None
            if target is not None and any(target.overlaps(p) for p in placed):
                target = None
            if target is None:
                # keep the value visible: append it to the sentence and flag it
                method = "fallback"
                start = len(text) + 1
                text = f"{text} {sp.value}"
                target = CharSpan(start, start + len(sp.value), sp.slot, sp.value)
            placed.append(CharSpan(target.start, target.end, sp.slot, sp.value))
            trace.append((sp, method))
        if pieces:
            pos += 1
        pieces.append(text)
        out_spans.extend(p.shift(pos) for p in placed)
        pos += len(text)
    return UtteranceTranslation(" ".join(pieces), sorted(out_spans, key=lambda s: s.start), trace)


# dependency dictionary and substitution plans

@dataclass(frozen=True)
class DictValue:
    slot: SlotId
    value: str
    target: str

    @classmethod
    def from_json(cls, obj: Mapping) -> "DictValue":
        return cls(SlotId(obj["domain"], obj["slot"]), normalize_value(obj["value"]), normalize_value(obj["target"]))

    def to_json(self) -> dict:
        return {"domain": self.slot.domain, "slot": self.slot.slot, "value": self.value, "target": self.target}


@dataclass(frozen=True)
class DictEntry:
    trigger: DictValue
    consequents: tuple[DictValue, ...] = ()


@dataclass(frozen=True)
class DependencyDictionary:
    entries: tuple[DictEntry, ...] = ()

    @classmethod
    def from_json(cls, obj: Mapping) -> "DependencyDictionary":
        entries = []
        for e in obj.get("entries", []):
            entries.append(DictEntry(DictValue.from_json(e["trigger"]),
                                     tuple(DictValue.from_json(c) for c in e.get("consequents", []))))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path: str | Path) -> "DependencyDictionary":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def to_json(self) -> dict:
        return {"entries": [{"trigger": e.trigger.to_json(), "consequents": [c.to_json() for c in e.consequents]}
                            for e in self.entries]}

    def validate(self, source: Ontology, target: Ontology) -> list[str]:
        problems = []
        for e in self.entries:
            for dv in (e.trigger, *e.consequents):
                if not source.is_empty and dv.value not in source.values.get(dv.slot, ()):
                    problems.append(f"{dv.slot} = {dv.value!r} not in source ontology")
                if not target.is_empty and dv.target not in target.values.get(dv.slot, ()):
                    problems.append(f"{dv.slot} = {dv.target!r} not in target ontology")
        return problems


@dataclass(frozen=True)
class SubstitutionPlan:
    mapping: Mapping[tuple[SlotId, str], str]
    seed: int
    strategy: str

    def target(self, slot: SlotId, value: str) -> str:
        try:
            return self.mapping[(slot, value)]
        except KeyError:
            raise PlanError(f"no substitution planned for {slot} = {value!r}") from None


def dialogue_rng(seed: int, dialogue_id: str) -> random.Random:
    """Independent stream per dialogue so parallel and serial runs agree."""
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}\x00{dialogue_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def dialogue_values(dialogue: Dialogue) -> list[tuple[SlotId, str]]:
    """Distinct (slot, value) pairs in order of first appearance."""
    seen: dict[tuple[SlotId, str], None] = {}
    for turn in dialogue.turns:
        for pair in turn.state.regular_items():
            seen.setdefault(pair, None)
    return list(seen)


def build_substitution_plan(
    dialogue: Dialogue,
    dictionary: DependencyDictionary,
    target_ontology: Ontology,
    seed: int,
    strategy: str = "random",
) -> SubstitutionPlan:
    if strategy not in STRATEGIES:
        raise PlanError(f"unknown strategy {strategy!r}")
    present = dialogue_values(dialogue)
    present_set = set(present)
    mapping: dict[tuple[SlotId, str], str] = {}

    triggered: dict[tuple[SlotId, str], set[str]] = {}
    all_renderings: dict[tuple[SlotId, str], set[str]] = {}
    for e in dictionary.entries:
        key = (e.trigger.slot, e.trigger.value)
        all_renderings.setdefault(key, set()).add(e.trigger.target)
        fired = key in present_set
        if fired:
            triggered.setdefault(key, set()).add(e.trigger.target)
        for c in e.consequents:
            ckey = (c.slot, c.value)
            all_renderings.setdefault(ckey, set()).add(c.target)
            if fired:
                triggered.setdefault(ckey, set()).add(c.target)
    for key in present:
        renders = triggered.get(key) or all_renderings.get(key)
        if not renders:
            continue
        if len(renders) > 1:
            if key in triggered:
                raise PlanError(f"conflicting dictionary renderings for {key[0]} = {key[1]!r}: {sorted(renders)}")
            continue    # ambiguous and not forced by a present trigger
        mapping[key] = next(iter(renders))

    rng = dialogue_rng(seed, dialogue.id)
    used: dict[SlotId, set[str]] = {}
    for (slot, value), target in mapping.items():
        used.setdefault(slot, set()).add(target)
    for slot, value in present:
        if (slot, value) in mapping:
            continue
        legal = target_ontology.values.get(slot, ())
        if strategy == "dictionary":
            raise PlanError(f"value {value!r} of {slot} is not covered by the dictionary")
        if strategy == "identity" or (classify_numeric(value) and value in legal):
            if legal and value not in legal:
                raise PlanError(f"value {value!r} of {slot} is in neither the dictionary nor the target ontology")
            mapping[(slot, value)] = value
            continue
        if not legal:
            raise PlanError(f"value {value!r} of {slot}: the target ontology has no values for this slot")
        fresh = [v for v in legal if v not in used.get(slot, set())]
        choice = rng.choice(fresh or list(legal))
        mapping[(slot, value)] = choice
        used.setdefault(slot, set()).add(choice)
    return SubstitutionPlan(mapping, seed, strategy)


def restrict_ontology(ontology: Ontology, part: int, n_parts: int) -> Ontology:
    """Keep every ``n_parts``-th value of each slot, starting at ``part``.

    Splits drawing replacements from different parts never share a value
    (slots with fewer values than parts keep all of them).
    """
    if not 0 <= part < n_parts:
        raise ValueError("part out of range")
    values = {}
    for slot, vals in ontology.values.items():
        sub = vals[part::n_parts]
        values[slot] = sub if sub else vals
    return Ontology(ontology.domains, ontology.slots, values)


# whole dialogues

def _substitute(text: str, spans: Sequence[CharSpan], plan: SubstitutionPlan) -> str:
    out, pos = [], 0
    for sp in sorted(spans, key=lambda s: s.start):
        out.append(text[pos:sp.start])
        out.append(plan.target(sp.slot, sp.value))  # type: ignore[arg-type]
        pos = sp.end
    out.append(text[pos:])
    return "".join(out)


def rewrite_state(state: BeliefState, plan: SubstitutionPlan) -> BeliefState:
    return BeliefState({
        slot: SlotValue.regular(plan.target(slot, value.text)) if value.is_regular else value  # type: ignore[arg-type]
        for slot, value in state.items()
    })


@dataclass
class DialogueTranslation:
    dialogue: Dialogue
    findings: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


def translate_dialogue(
    dialogue: Dialogue,
    client: TranslatorClient,
    plan: SubstitutionPlan,
    cfg: AlignmentConfig = AlignmentConfig(),
    align: bool = True,
) -> DialogueTranslation:
    turns = []
    findings: list[dict] = []
    trace: list[dict] = []
    try:
        for turn in dialogue.turns:
            texts = {}
            for speaker in ("agent", "user"):
                source = getattr(turn, speaker)
                if not source.strip():
                    texts[speaker] = ""
                    continue
                spans = detect_entity_spans(source, turn.state) if align else []
                result = translate_utterance(source, spans, client, cfg, align=align)
                for sp, method in result.trace:
                    trace.append({"turn": turn.index, "speaker": speaker, "slot": str(sp.slot),
                                  "value": sp.value, "method": method})
                    if method == "fallback":
                        findings.append({"kind": "AlignmentFailure", "dialogue": dialogue.id, "turn": turn.index,
                                         "speaker": speaker, "slot": str(sp.slot), "value": sp.value})
                texts[speaker] = _substitute(result.text, result.spans, plan) if align else result.text
            turns.append(Turn(turn.index, texts["agent"], texts["user"], rewrite_state(turn.state, plan)))
    except (TransportError, ProtocolError) as e:
        raise PipelineError(f"dialogue {dialogue.id}: {e}") from e
    return DialogueTranslation(Dialogue(dialogue.id, tuple(turns), client.tgt_lang), findings, trace)


# corpus level

@dataclass
class TranslationRun:
    corpus: Corpus
    findings: list[dict]
    failed: list[str]


def translate_corpus(
    corpus: Corpus,
    connect: Callable[[], Any],
    dictionary: DependencyDictionary,
    target_ontology: Ontology,
    seed: int,
    src_lang: str,
    tgt_lang: str,
    cfg: AlignmentConfig = AlignmentConfig(),
    align: bool = True,
    strategy: str = "random",
    jobs: int = 1,
) -> TranslationRun:
    """Translate every dialogue; ``connect()`` opens one translator connection per worker."""

    def work(conn: Any, dialogue: Dialogue):
        try:
            plan = build_substitution_plan(dialogue, dictionary, target_ontology, seed, strategy)
        except PlanError as e:
            return (None, f"{dialogue.id}: {e}"), False
        client = TranslatorClient(conn, src_lang, tgt_lang)
        try:
            return (translate_dialogue(dialogue, client, plan, cfg, align), None), False
        except PipelineError as e:
            log.warning("%s", e)
            return (None, str(e)), True

    def unreachable(dialogue: Dialogue, exc: Exception):
        return None, f"{dialogue.id}: {exc}"

    results = map_with_connections(corpus.dialogues, connect, work, unreachable, jobs)
    dialogues, findings, failed = [], [], []
    for dialogue, (result, error) in zip(corpus.dialogues, results):
        if result is None:
            failed.append(error or dialogue.id)
            continue
        dialogues.append(result.dialogue)
        findings.extend(result.findings)
    out = Corpus(tuple(dialogues), target_ontology, corpus.split)
    return TranslationRun(out, findings, failed)


def faithfulness(source: Dialogue, translated: Dialogue) -> tuple[int, int]:
    """(hits, total) over gold values that the source turn states verbatim.

    A hit means the translated value of that slot occurs verbatim in the
    translated turn.
    """
    hits = total = 0
    for src, tgt in zip(source.turns, translated.turns):
        for slot, value in src.state.regular_items():
            if not find_occurrences(src.text, value):
                continue
            total += 1
            out = tgt.state.get(slot)
            if out is not None and out.is_regular and find_occurrences(tgt.text, out.text):  # type: ignore[arg-type]
                hits += 1
    return hits, total


def corpus_faithfulness(source: Corpus, translated: Corpus) -> float:
    by_id = {d.id: d for d in translated.dialogues}
    hits = total = 0
    for d in source.dialogues:
        if d.id in by_id:
            h, t = faithfulness(d, by_id[d.id])
            hits += h
            total += t
    return hits / total if total else 1.0
