"""Misannotation detectors for WOZ-style dialogue corpora.

Each detector scans one dialogue at a time and reports per-turn findings:

* InexactMatch      - annotated value only near-matches what was said
* MissingSlot       - a value was clearly chosen but never annotated
* ExtraSlot         - annotated value was never said by anyone
* DelayedAnnotation - value was said, but annotated only at a later turn
* EmptyAnnotation   - the state is wiped in the middle of a dialogue
* RangeAnomaly      - a numeric range changed in a way no mention explains
* InferredSlot      - like ExtraSlot, for slots expected to be inferred

Inconsistency of agent-mentioned slots is reported as a corpus-level table
(see :func:`inferred_slot_stats`), not per turn.
"""
from __future__ import annotations

import random
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .align import find_occurrences
from .ingest import Corpus, Dialogue
from .state import BeliefState, NumericRange, Ontology, SlotId, expand_range

KINDS = (
    "InexactMatch",
    "MissingSlot",
    "ExtraSlot",
    "DelayedAnnotation",
    "EmptyAnnotation",
    "RangeAnomaly",
    "InferredSlot",
)
# informational kinds do not count towards the misannotation rate
INFORMATIONAL = frozenset({"InferredSlot"})


@dataclass(frozen=True)
class Finding:
    kind: str
    dialogue_id: str
    turn: int
    slot: SlotId | None = None
    evidence: dict = field(default_factory=dict, compare=False, hash=False)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dialogue": self.dialogue_id,
            "turn": self.turn,
            "slot": str(self.slot) if self.slot else None,
            "evidence": self.evidence,
        }


@dataclass(frozen=True)
class LintConfig:
    inferable_slots: frozenset[SlotId] = frozenset()
    max_edit_distance: int = 1
    sample_size: int | None = None
    seed: int = 0
    missing_slot_mode: str = "conservative"     # or "contextual"

    def __post_init__(self) -> None:
        if self.max_edit_distance < 1:
            raise ValueError("max_edit_distance must be at least 1")
        if self.missing_slot_mode not in ("conservative", "contextual"):
            raise ValueError(f"unknown missing_slot_mode {self.missing_slot_mode!r}")
        object.__setattr__(self, "inferable_slots", frozenset(self.inferable_slots))


# approximate substring search

def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def best_substring_match(pattern: str, text: str) -> tuple[int, int, int]:
    """(distance, start, end) of the substring of ``text`` closest to ``pattern``.

    Semi-global edit distance: the match may begin and end anywhere in text.
    """
    n = len(text)
    prev = [0] * (n + 1)
    prev_start = list(range(n + 1))
    for i, pc in enumerate(pattern, 1):
        cur = [i] + [0] * n
        cur_start = [0] * (n + 1)
        for j in range(1, n + 1):
            diag = prev[j - 1] + (pc != text[j - 1])
            up = prev[j] + 1
            left = cur[j - 1] + 1
            best = min(diag, up, left)
            cur[j] = best
            if best == diag:
                cur_start[j] = prev_start[j - 1]
            elif best == up:
                cur_start[j] = prev_start[j]
            else:
                cur_start[j] = cur_start[j - 1]
        prev, prev_start = cur, cur_start
    end = min(range(n + 1), key=lambda j: (prev[j], j))
    return prev[end], prev_start[end], end


# per-dialogue context

class _Context:
    def __init__(self, dialogue: Dialogue, ontology: Ontology, cfg: LintConfig):
        self.d = dialogue
        self.ontology = ontology
        self.cfg = cfg
        self.states = [t.state for t in dialogue.turns]
        self.texts = [t.text for t in dialogue.turns]

    def prev_state(self, t: int) -> BeliefState:
        return self.states[t - 1] if t > 0 else BeliefState()

    def entered(self, t: int) -> list[tuple[SlotId, str]]:
        prev = self.prev_state(t)
        return [(s, v) for s, v in self.states[t].regular_items() if prev.get(s) != self.states[t][s]]

    def mentioned_at(self, t: int, value: str) -> bool:
        return bool(find_occurrences(self.texts[t], value))

    def mentioned_upto(self, t: int, value: str) -> bool:
        return any(self.mentioned_at(i, value) for i in range(t + 1))

    def nearest_upto(self, t: int, value: str) -> tuple[int, str] | None:
        if len(value) < 2:
            return None
        best = None
        for i in range(t + 1):
            text = self.texts[i]
            dist, a, b = best_substring_match(value, text)
            if best is None or dist < best[0]:
                best = (dist, text[a:b])
        return best

    def range_change(self, t: int, slot: SlotId, value: str) -> bool:
        """True if this entry is a change of an existing numeric range."""
        prev = self.prev_state(t).get(slot)
        return (prev is not None and prev.is_regular and NumericRange.parse(prev.text) is not None
                and NumericRange.parse(value) is not None)


def _unmentioned_entries(ctx: _Context):
    """Annotations entering the state without a verbatim mention up to that turn."""
    for t in range(len(ctx.states)):
        for slot, value in ctx.entered(t):
            if ctx.range_change(t, slot, value) or ctx.mentioned_upto(t, value):
                continue
            yield t, slot, value, ctx.nearest_upto(t, value)


def detect_inexact_match(ctx: _Context) -> list[Finding]:
    out = []
    for t, slot, value, near in _unmentioned_entries(ctx):
        if near is not None and 1 <= near[0] <= ctx.cfg.max_edit_distance:
            out.append(Finding("InexactMatch", ctx.d.id, t, slot,
                               {"value": value, "near_miss": near[1], "distance": near[0]}))
    return out


def _is_unmentioned(ctx: _Context, near: tuple[int, str] | None) -> bool:
    return near is None or near[0] > ctx.cfg.max_edit_distance


def detect_extra_slot(ctx: _Context) -> list[Finding]:
    out = []
    for t, slot, value, near in _unmentioned_entries(ctx):
        if slot not in ctx.cfg.inferable_slots and _is_unmentioned(ctx, near):
            out.append(Finding("ExtraSlot", ctx.d.id, t, slot, {"value": value}))
    return out


def detect_inferred_slot(ctx: _Context) -> list[Finding]:
    out = []
    for t, slot, value, near in _unmentioned_entries(ctx):
        if slot in ctx.cfg.inferable_slots and _is_unmentioned(ctx, near):
            out.append(Finding("InferredSlot", ctx.d.id, t, slot, {"value": value}))
    return out


def detect_delayed_annotation(ctx: _Context) -> list[Finding]:
    out = []
    for t_ann in range(1, len(ctx.states)):
        for slot, value in ctx.entered(t_ann):
            if ctx.mentioned_at(t_ann, value):
                continue    # annotation matches its own turn
            earlier = [t for t in range(t_ann) if ctx.mentioned_at(t, value)]
            if not earlier:
                continue
            t = earlier[-1]
            if any(ctx.states[j].get(slot) == ctx.states[t_ann][slot] for j in range(t, t_ann)):
                continue
            out.append(Finding("DelayedAnnotation", ctx.d.id, t, slot, {"value": value, "annotated_at": t_ann}))
    return out


def _domain_candidates(ctx: _Context, t: int, text: str) -> dict[SlotId, list[str]]:
    """Ontology values of the turn's active domains mentioned in ``text``.

    Values legal for more than one slot of a domain are ambiguous and skipped.
    """
    found: dict[SlotId, list[str]] = {}
    domains = ctx.states[t].domains()
    for slot in ctx.ontology.slots:
        if slot.domain not in domains:
            continue
        for value in ctx.ontology.values.get(slot, ()):
            owners = [s for s in ctx.ontology.slots_for_value(value) if s.domain == slot.domain]
            if len(owners) == 1 and find_occurrences(text, value):
                found.setdefault(slot, []).append(value)
    return found


def detect_missing_slot(ctx: _Context) -> list[Finding]:
    out = []
    flagged: set[tuple[SlotId, str]] = set()
    n = len(ctx.states)
    for t, turn in enumerate(ctx.d.turns):
        if ctx.cfg.missing_slot_mode == "contextual":
            if not ("?" in turn.user or "？" in turn.user):
                continue
            cands = _domain_candidates(ctx, t, turn.agent)
        else:
            cands = _domain_candidates(ctx, t, ctx.texts[t])
        for slot, values in cands.items():
            if len(values) != 1 or slot in ctx.states[t]:
                continue
            value = values[0]
            # the mention is explained if the value is annotated under any slot
            if any(v.text == value for j in range(t, n) for v in ctx.states[j].values() if v.is_regular):
                continue
            if ctx.cfg.missing_slot_mode == "conservative":
                if any(slot in ctx.states[j] for j in range(t, n)) or (slot, value) in flagged:
                    continue
            flagged.add((slot, value))
            out.append(Finding("MissingSlot", ctx.d.id, t, slot, {"value": value}))
    return out


def detect_empty_annotation(ctx: _Context) -> list[Finding]:
    out = []
    last = len(ctx.states) - 1
    for t in range(1, last):
        if not ctx.states[t] and ctx.states[t - 1]:
            out.append(Finding("EmptyAnnotation", ctx.d.id, t, None, {"previous_size": len(ctx.states[t - 1])}))
    return out


_INT = re.compile(r"\d+")


def detect_range_anomaly(ctx: _Context) -> list[Finding]:
    out = []
    for t in range(1, len(ctx.states)):
        prev, cur = ctx.states[t - 1], ctx.states[t]
        for slot in cur:
            if slot not in prev or prev[slot] == cur[slot]:
                continue
            if not (prev[slot].is_regular and cur[slot].is_regular):
                continue
            old, new = NumericRange.parse(prev[slot].text), NumericRange.parse(cur[slot].text)
            if old is None or new is None:
                continue
            mentioned = [int(x) for x in _INT.findall(ctx.d.turns[t].agent)]
            if any(expand_range(old, m) == new for m in mentioned):
                continue
            if ctx.mentioned_at(t, cur[slot].text):
                continue    # stated outright
            out.append(Finding("RangeAnomaly", ctx.d.id, t, slot,
                               {"previous": str(old), "current": str(new), "agent_numbers": mentioned}))
    return out


DETECTORS = (
    detect_inexact_match,
    detect_missing_slot,
    detect_extra_slot,
    detect_delayed_annotation,
    detect_empty_annotation,
    detect_range_anomaly,
    detect_inferred_slot,
)


def lint_dialogue(dialogue: Dialogue, ontology: Ontology, cfg: LintConfig) -> list[Finding]:
    ctx = _Context(dialogue, ontology, cfg)
    found = {det.__name__: det(ctx) for det in DETECTORS}
    claimed = {(f.turn, f.slot) for f in found["detect_delayed_annotation"]}
    found["detect_missing_slot"] = [f for f in found["detect_missing_slot"] if (f.turn, f.slot) not in claimed]
    findings = [f for fs in found.values() for f in fs]
    order = {k: i for i, k in enumerate(KINDS)}
    return sorted(findings, key=lambda f: (f.turn, order[f.kind], f.slot or SlotId("_", "_")))


def _lint_star(args):
    return lint_dialogue(*args)


# corpus statistics

def inferred_slot_stats(corpus: Corpus) -> dict:
    """Per slot: share of annotated values never said verbatim, and agent uptake.

    Uptake is the fraction of unambiguous ontology values mentioned by the
    agent that later enter the state for their slot.
    """
    per_slot: dict[str, Counter] = {}
    for d in corpus.dialogues:
        text = "\n".join(t.text for t in d.turns)
        pairs = {pair for t in d.turns for pair in t.state.regular_items()}
        for slot, value in sorted(pairs):
            c = per_slot.setdefault(str(slot), Counter())
            c["verbatim" if find_occurrences(text, value) else "inferred"] += 1
    inferred = {}
    for slot, c in sorted(per_slot.items()):
        total = c["verbatim"] + c["inferred"]
        inferred[slot] = {
            "values": total,
            "verbatim": c["verbatim"],
            "inferred": c["inferred"],
            "verbatim_share": c["verbatim"] / total,
            "inferred_share": c["inferred"] / total,
        }

    uptake_counts: dict[str, Counter] = {}
    ontology = corpus.ontology
    for d in corpus.dialogues:
        seen: set[tuple[SlotId, str]] = set()
        for t, turn in enumerate(d.turns):
            for value, owners in ontology.value_owners().items():
                if len(owners) != 1 or (owners[0], value) in seen:
                    continue
                if not find_occurrences(turn.agent, value):
                    continue
                slot = owners[0]
                seen.add((slot, value))
                taken = any(later.state.get(slot) is not None and later.state[slot].text == value
                            for later in d.turns[t:])
                c = uptake_counts.setdefault(str(slot), Counter())
                c["mentioned"] += 1
                c["taken_up"] += taken
    uptake = {slot: {"agent_mentions": c["mentioned"], "taken_up": c["taken_up"],
                     "uptake": c["taken_up"] / c["mentioned"]}
              for slot, c in sorted(uptake_counts.items())}
    return {"inferred": inferred, "agent_uptake": uptake}


@dataclass
class LintReport:
    findings: list[Finding]
    counts: dict[str, int]
    inspected_turns: int
    flagged_turns: int
    stats: dict = field(default_factory=dict)
    sampled: bool = False
    seed: int | None = None

    @property
    def rate(self) -> float:
        return self.flagged_turns / self.inspected_turns if self.inspected_turns else 0.0

    def to_json(self) -> dict:
        return {
            "misannotation_rate": self.rate,
            "inspected_turns": self.inspected_turns,
            "flagged_turns": self.flagged_turns,
            "sampled": self.sampled,
            "seed": self.seed,
            "counts": self.counts,
            "findings": [f.to_json() for f in self.findings],
            "stats": self.stats,
        }

    def summary(self) -> str:
        lines = [f"{'kind':<20}{'count':>8}"]
        lines += [f"{k:<20}{self.counts[k]:>8}" for k in KINDS]
        lines.append(f"{'inspected turns':<20}{self.inspected_turns:>8}")
        lines.append(f"{'flagged turns':<20}{self.flagged_turns:>8}")
        lines.append(f"{'misannotation rate':<20}{100 * self.rate:>7.1f}%")
        return "\n".join(lines)


def sample_turns(corpus: Corpus, size: int, seed: int) -> set[tuple[str, int]]:
    turns = [(d.id, t.index) for d in corpus.dialogues for t in d.turns]
    rng = random.Random(seed)
    return set(rng.sample(turns, min(size, len(turns))))


def lint_corpus(corpus: Corpus, cfg: LintConfig = LintConfig(), jobs: int = 1) -> LintReport:
    tasks = [(d, corpus.ontology, cfg) for d in corpus.dialogues]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_dialogue = list(ex.map(_lint_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        per_dialogue = [_lint_star(t) for t in tasks]
    findings = [f for fs in per_dialogue for f in fs]

    if cfg.sample_size is not None:
        chosen = sample_turns(corpus, cfg.sample_size, cfg.seed)
        findings = [f for f in findings if (f.dialogue_id, f.turn) in chosen]
        inspected = len(chosen)
    else:
        inspected = corpus.n_turns
    counts = {k: 0 for k in KINDS}
    counts.update(Counter(f.kind for f in findings))
    flagged = len({(f.dialogue_id, f.turn) for f in findings if f.kind not in INFORMATIONAL})
    return LintReport(findings, counts, inspected, flagged, inferred_slot_stats(corpus),
                      cfg.sample_size is not None, cfg.seed if cfg.sample_size is not None else None)


def findings_by_kind(findings: Iterable[Finding]) -> dict[str, set[tuple[str, int, SlotId | None]]]:
    out: dict[str, set] = {k: set() for k in KINDS}
    for f in findings:
        out[f.kind].add((f.dialogue_id, f.turn, f.slot))
    return out
