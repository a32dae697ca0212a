"""Corpus model, canonical JSON format, and import of foreign WOZ-style dumps."""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .state import (
    EMPTY_STATE,
    BeliefState,
    Ontology,
    SlotId,
    SlotValue,
    StateError,
    ValidationError,
    ValueKind,
)

SPLITS = ("train", "dev", "test")


class IngestError(Exception):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class MappingError(IngestError):
    def __init__(self, path: str, message: str = "path does not resolve"):
        super().__init__(f"{message}: {path!r}")
        self.path = path


@dataclass(frozen=True)
class Turn:
    index: int
    agent: str
    user: str
    state: BeliefState = EMPTY_STATE

    def __post_init__(self) -> None:
        if self.index < 0:
            raise IngestError(f"negative turn index {self.index}")
        if not self.user.strip():
            raise IngestError(f"turn {self.index}: empty user utterance")
        object.__setattr__(self, "agent", unicodedata.normalize("NFC", self.agent))
        object.__setattr__(self, "user", unicodedata.normalize("NFC", self.user))

    @property
    def text(self) -> str:
        return f"{self.agent}\n{self.user}"


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...] = ()
    language: str = "und"

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        for i, turn in enumerate(self.turns):
            if turn.index != i:
                raise IngestError(f"dialogue {self.id}: turn indices are not contiguous at {i}")

    def __len__(self) -> int:
        return len(self.turns)

    def states(self) -> list[BeliefState]:
        return [t.state for t in self.turns]


@dataclass(frozen=True)
class Finding:
    """A validation problem found while loading (dialogue, turn, message)."""
    dialogue_id: str
    turn: int | None
    message: str

    def __str__(self) -> str:
        where = f"{self.dialogue_id}" + (f"#{self.turn}" if self.turn is not None else "")
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...] = ()
    ontology: Ontology = field(default_factory=Ontology)
    split: str = "test"
    validation_findings: tuple[Finding, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dialogues", tuple(self.dialogues))
        if self.split not in SPLITS:
            raise IngestError(f"unknown split {self.split!r}")
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise IngestError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)

    def __len__(self) -> int:
        return len(self.dialogues)

    @property
    def n_turns(self) -> int:
        return sum(len(d) for d in self.dialogues)


def validate_corpus(corpus: Corpus) -> list[Finding]:
    if corpus.ontology.is_empty:
        return []
    findings = []
    for d in corpus.dialogues:
        for t in d.turns:
            findings.extend(Finding(d.id, t.index, p) for p in corpus.ontology.validate_state(t.state))
    return findings


def _checked(corpus: Corpus, strict: bool) -> Corpus:
    findings = validate_corpus(corpus)
    if findings and strict:
        raise ValidationError([str(f) for f in findings])
    return Corpus(corpus.dialogues, corpus.ontology, corpus.split, tuple(findings))


# canonical format

def corpus_to_json(corpus: Corpus) -> dict:
    return {
        "split": corpus.split,
        "ontology": corpus.ontology.to_json(),
        "dialogues": [
            {
                "id": d.id,
                "language": d.language,
                "turns": [
                    {"agent": t.agent, "user": t.user, "state": t.state.to_triples()}
                    for t in d.turns
                ],
            }
            for d in corpus.dialogues
        ],
    }


def dump_corpus(corpus: Corpus) -> str:
    return json.dumps(corpus_to_json(corpus), ensure_ascii=False, indent=1) + "\n"


def corpus_from_json(obj: Mapping, strict: bool = False) -> Corpus:
    try:
        ontology = Ontology.from_json(obj.get("ontology"))
        dialogues = []
        for d in obj.get("dialogues", []):
            turns = [
                Turn(i, t.get("agent", ""), t["user"], BeliefState.from_triples(t.get("state", [])))
                for i, t in enumerate(d.get("turns", []))
            ]
            dialogues.append(Dialogue(str(d["id"]), tuple(turns), d.get("language", "und")))
        corpus = Corpus(tuple(dialogues), ontology, obj.get("split", "test"))
    except (KeyError, TypeError, ValueError, StateError) as e:
        if isinstance(e, (ValidationError, IngestError)):
            raise
        raise IngestError(f"invalid corpus document: {e!r}") from e
    return _checked(corpus, strict)


def loads_corpus(text: str, strict: bool = False) -> Corpus:
    if not text.strip():
        return Corpus()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise IngestError(f"malformed JSON: {e.msg}", e.lineno, e.colno) from e
    return corpus_from_json(obj, strict)


def load_canonical(path: str | Path, strict: bool = False) -> Corpus:
    return loads_corpus(Path(path).read_text(encoding="utf-8"), strict)


def save_canonical(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(dump_corpus(corpus), encoding="utf-8")


# foreign import

_PATH_TOKEN = re.compile(r"\.?([^.\[\]]+)|\[(\d+)\]")


def split_path(path: str) -> list[str | int]:
    """Split ``a.b[0].c`` into ``["a", "b", 0, "c"]``."""
    parts: list[str | int] = []
    pos = 0
    while pos < len(path):
        m = _PATH_TOKEN.match(path, pos)
        if m is None or m.end() == pos:
            raise MappingError(path, "malformed path expression")
        if m.group(1) is not None:
            parts.append(m.group(1))
        else:
            parts.append(int(m.group(2)))
        pos = m.end()
    return parts


def resolve(obj: Any, path: str) -> Any:
    if path in ("", "$"):
        return obj
    cur = obj
    for part in split_path(path):
        try:
            cur = cur[part]
        except (KeyError, IndexError, TypeError):
            raise MappingError(path) from None
    return cur


@dataclass
class FieldMapping:
    """Where things live inside a foreign dataset dump.

    ``dialogues`` is resolved from the document root and may be a list or an
    object keyed by dialogue id (use ``id = "$key"``).  ``layout`` is either
    ``paired`` (each turn element carries both utterances) or ``alternating``
    (a flat log of messages, user first, then agent).
    """
    dialogues: str = "$"
    id: str = "$key"
    turns: str = "turns"
    layout: str = "paired"
    agent: str = "agent"
    user: str = "user"
    text: str = "text"
    state: str = "state"
    state_format: str = "triples"   # triples | flat | nested | slot_values
    slot_separator: str = "-"
    skip_keys: tuple[str, ...] = ("semi", "book_info")
    accumulate: bool = True
    rename: dict[str, str] = field(default_factory=dict)
    drop_domains: tuple[str, ...] = ()
    language: str = "und"
    split: str = "test"
    ontology: Any = None

    REQUIRED = ("dialogues", "turns", "user", "state")

    @classmethod
    def from_json(cls, obj: Mapping) -> "FieldMapping":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise MappingError(sorted(unknown)[0], "unknown mapping key")
        for key in cls.REQUIRED:
            if key not in obj:
                raise MappingError(key, "required mapping path missing")
        kwargs = dict(obj)
        for key in ("skip_keys", "drop_domains"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "FieldMapping":
        with open(path, encoding="utf-8") as f:
            mapping = cls.from_json(json.load(f))
        if isinstance(mapping.ontology, str):
            mapping.ontology = str((Path(path).parent / mapping.ontology))
        return mapping


def _flatten_nested(obj: Mapping, skip: tuple[str, ...]) -> list[tuple[str, str, Any]]:
    out = []
    for domain, body in obj.items():
        stack: list[tuple[list[str], Any]] = [([], body)]
        while stack:
            keys, node = stack.pop()
            if isinstance(node, Mapping):
                for k in sorted(node, reverse=True):
                    stack.append((keys if k in skip else keys + [k], node[k]))
            elif isinstance(node, str) and keys:
                out.append((domain, " ".join(keys), node))
    return out


def _state_entries(raw: Any, mapping: FieldMapping) -> list[tuple[str, str, Any]]:
    fmt = mapping.state_format
    if raw is None:
        return []
    if fmt == "triples":
        return [tuple(e) for e in raw]  # type: ignore[misc]
    if fmt == "flat":
        out = []
        for key, value in raw.items():
            slot = SlotId.parse(key, mapping.slot_separator)
            out.append((slot.domain, slot.slot, value))
        return out
    if fmt == "slot_values":
        out = []
        for entry in raw:
            slot = SlotId.parse(entry["slot"], mapping.slot_separator)
            out.append((slot.domain, slot.slot, entry["value"]))
        return out
    if fmt == "nested":
        return _flatten_nested(raw, mapping.skip_keys)
    raise MappingError("state_format", f"unknown state format {fmt!r}")


def _rename(domain: str, slot: str, mapping: FieldMapping) -> SlotId:
    key = f"{domain}{mapping.slot_separator}{slot}"
    if key in mapping.rename:
        return SlotId.parse(mapping.rename[key], mapping.slot_separator)
    return SlotId(domain, slot)


def _foreign_turns(dialogue: Any, mapping: FieldMapping) -> list[tuple[str, str, Any]]:
    """Return (agent, user, raw_state) per turn."""
    items = resolve(dialogue, mapping.turns)
    if not isinstance(items, list):
        raise MappingError(mapping.turns, "turns path is not a list")
    out = []
    if mapping.layout == "paired":
        for item in items:
            agent = resolve(item, mapping.agent) if mapping.agent else ""
            out.append((agent or "", resolve(item, mapping.user), resolve(item, mapping.state)))
    elif mapping.layout == "alternating":
        # user, agent, user, agent, ...; the state annotation sits on the agent message
        agent_prev = ""
        for i in range(0, len(items), 2):
            user = resolve(items[i], mapping.text)
            reply = items[i + 1] if i + 1 < len(items) else None
            raw = resolve(reply, mapping.state) if reply is not None else None
            out.append((agent_prev, user, raw))
            agent_prev = resolve(reply, mapping.text) if reply is not None else ""
    else:
        raise MappingError("layout", f"unknown layout {mapping.layout!r}")
    return out


def import_foreign_obj(doc: Any, mapping: FieldMapping, ontology: Ontology | None = None) -> Corpus:
    if ontology is None:
        if isinstance(mapping.ontology, Mapping):
            ontology = Ontology.from_json(mapping.ontology)
        elif isinstance(mapping.ontology, str):
            ontology = Ontology.load(mapping.ontology)
        else:
            ontology = Ontology()
    root = resolve(doc, mapping.dialogues)
    if isinstance(root, Mapping):
        entries = list(root.items())
    elif isinstance(root, list):
        entries = list(enumerate(root))
    else:
        raise MappingError(mapping.dialogues, "dialogues path is neither list nor object")
    dialogues = []
    for key, raw in entries:
        did = str(key) if mapping.id == "$key" else str(resolve(raw, mapping.id))
        turns = []
        state: dict[SlotId, SlotValue] = {}
        for index, (agent, user, raw_state) in enumerate(_foreign_turns(raw, mapping)):
            if not mapping.accumulate:
                state = {}
            for domain, slot, value in _state_entries(raw_state, mapping):
                if domain in mapping.drop_domains:
                    continue
                sid = _rename(domain, " ".join(str(slot).split()), mapping)
                val = SlotValue.from_text(str(value))
                if val.kind is ValueKind.NONE:
                    state.pop(sid, None)
                else:
                    state[sid] = val
            turns.append(Turn(index, str(agent), str(user), BeliefState(state)))
        dialogues.append(Dialogue(did, tuple(turns), mapping.language))
    # unknown slots and illegal values surface as validation findings
    return _checked(Corpus(tuple(dialogues), ontology, mapping.split), strict=False)


def import_foreign(path: str | Path, mapping: FieldMapping, ontology: Ontology | None = None) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise IngestError(f"malformed JSON: {e.msg}", e.lineno, e.colno) from e
    return import_foreign_obj(doc, mapping, ontology)


@dataclass(frozen=True)
class StatsReport:
    domains: int = 0
    dialogues: int = 0
    turns: int = 0
    slots: int = 0
    values: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "Domains": self.domains,
            "Dialogues": self.dialogues,
            "Turns": self.turns,
            "Slots": self.slots,
            "Values": self.values,
        }

    def table(self) -> str:
        rows = self.as_dict()
        width = max(map(len, rows))
        return "\n".join(f"# {k:<{width}}  {v:>8,}" for k, v in rows.items())


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Counts over what the annotations actually use; a turn is one agent/user pair."""
    domains: set[str] = set()
    slots: set[SlotId] = set()
    values: set[tuple[SlotId, str]] = set()
    for d in corpus.dialogues:
        for t in d.turns:
            for slot, value in t.state.items():
                domains.add(slot.domain)
                slots.add(slot)
                if value.is_regular:
                    values.add((slot, value.text))  # type: ignore[arg-type]
    return StatsReport(len(domains), len(corpus.dialogues), corpus.n_turns, len(slots), len(values))


def filter_domains(corpus: Corpus, drop: Iterable[str]) -> Corpus:
    """Remove slots of the given domains from every state."""
    drop = set(drop)
    if not drop:
        return corpus
    dialogues = []
    for d in corpus.dialogues:
        turns = [
            Turn(t.index, t.agent, t.user, BeliefState({k: v for k, v in t.state.items() if k.domain not in drop}))
            for t in d.turns
        ]
        dialogues.append(Dialogue(d.id, tuple(turns), d.language))
    return Corpus(tuple(dialogues), corpus.ontology, corpus.split, corpus.validation_findings)
