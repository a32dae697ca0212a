"""Belief-state data model and its textual encoding.

A belief state is rendered as a flat sequence of assignments::

    train day = " thursday " train departure = " cambridge "

and the empty state is the literal ``null``.
"""
from __future__ import annotations

import enum
import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

NULL_STATE = "null"
DONTCARE = "dontcare"
NONE_VALUE = "none"


class StateError(ValueError):
    pass


class SerializationError(StateError):
    pass


class ParseError(StateError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(StateError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems) if problems else "validation failed")
        self.problems = problems


def normalize_value(text: str) -> str:
    """NFC-normalize and trim. No case folding."""
    return unicodedata.normalize("NFC", text).strip()


@dataclass(frozen=True, order=True)
class SlotId:
    domain: str
    slot: str

    def __post_init__(self) -> None:
        for name in (self.domain, self.slot):
            if not name or "=" in name or '"' in name:
                raise StateError(f"illegal slot name component: {name!r}")
            if name != name.strip():
                raise StateError(f"slot name component has surrounding whitespace: {name!r}")
        # the first whitespace-separated token of an assignment is the domain
        if any(ch.isspace() for ch in self.domain):
            raise StateError(f"domain name contains whitespace: {self.domain!r}")

    def __str__(self) -> str:
        return f"{self.domain} {self.slot}"

    @classmethod
    def parse(cls, key: str, sep: str | None = None) -> "SlotId":
        """Build from ``"domain slot"`` (or ``"domain-slot"`` with ``sep="-"``)."""
        key = key.strip()
        if sep is None:
            parts = key.split(None, 1)
        else:
            parts = key.split(sep, 1)
        if len(parts) != 2:
            raise StateError(f"cannot split slot key {key!r}")
        return cls(parts[0].strip(), " ".join(parts[1].split()))


class ValueKind(enum.Enum):
    REGULAR = "regular"
    NONE = "none"
    DONTCARE = "dontcare"


@dataclass(frozen=True)
class SlotValue:
    kind: ValueKind
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is ValueKind.REGULAR:
            if self.text is None:
                raise StateError("regular value needs text")
            object.__setattr__(self, "text", normalize_value(self.text))
            if not self.text:
                raise StateError("regular value is empty")
        elif self.text is not None:
            raise StateError(f"{self.kind.value} value carries no text")

    @classmethod
    def regular(cls, text: str) -> "SlotValue":
        return cls(ValueKind.REGULAR, text)

    @classmethod
    def from_text(cls, text: str) -> "SlotValue":
        """Map annotation text to a value, recognising the special literals."""
        norm = normalize_value(text)
        if norm == DONTCARE:
            return DONTCARE_VALUE
        if norm == NONE_VALUE or not norm:
            return NONE_VALUE_OBJ
        return cls(ValueKind.REGULAR, norm)

    @property
    def is_regular(self) -> bool:
        return self.kind is ValueKind.REGULAR

    def render(self) -> str:
        if self.kind is ValueKind.REGULAR:
            return self.text  # type: ignore[return-value]
        return self.kind.value

    def __str__(self) -> str:
        return self.render()


DONTCARE_VALUE = SlotValue(ValueKind.DONTCARE)
NONE_VALUE_OBJ = SlotValue(ValueKind.NONE)


def _coerce_value(value: SlotValue | str) -> SlotValue:
    if isinstance(value, SlotValue):
        return value
    return SlotValue.from_text(value)


class BeliefState(Mapping[SlotId, SlotValue]):
    """Immutable slot -> value mapping. ``none`` values are dropped, never stored."""

    __slots__ = ("_items", "_hash")

    def __init__(self, assignments: Mapping[SlotId, SlotValue | str] | Iterable[tuple[SlotId, SlotValue | str]] = ()):
        items = assignments.items() if isinstance(assignments, Mapping) else assignments
        data: dict[SlotId, SlotValue] = {}
        for slot, value in items:
            value = _coerce_value(value)
            if value.kind is ValueKind.NONE:
                data.pop(slot, None)
            else:
                data[slot] = value
        self._items = dict(sorted(data.items()))
        self._hash: int | None = None

    @classmethod
    def from_triples(cls, triples: Iterable[Iterable[str]]) -> "BeliefState":
        pairs = []
        for triple in triples:
            domain, slot, value = triple
            pairs.append((SlotId(domain, slot), SlotValue.from_text(value)))
        return cls(pairs)

    def to_triples(self) -> list[list[str]]:
        return [[s.domain, s.slot, v.render()] for s, v in self._items.items()]

    def __getitem__(self, key: SlotId) -> SlotValue:
        return self._items[key]

    def __iter__(self) -> Iterator[SlotId]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, BeliefState):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self._items == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._items.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"BeliefState({serialize_state(self)!r})"

    def domains(self) -> set[str]:
        return {s.domain for s in self._items}

    def regular_items(self) -> list[tuple[SlotId, str]]:
        return [(s, v.text) for s, v in self._items.items() if v.is_regular]  # type: ignore[misc]


EMPTY_STATE = BeliefState()


@dataclass(frozen=True)
class StateDelta:
    set: Mapping[SlotId, SlotValue] = field(default_factory=dict)
    clear: frozenset[SlotId] = frozenset()

    def __post_init__(self) -> None:
        values = {k: _coerce_value(v) for k, v in dict(self.set).items()}
        if any(v.kind is ValueKind.NONE for v in values.values()):
            raise StateError("a delta sets only regular or dontcare values; use clear")
        object.__setattr__(self, "set", dict(sorted(values.items())))
        object.__setattr__(self, "clear", frozenset(self.clear))
        overlap = self.clear & self.set.keys()
        if overlap:
            raise StateError(f"slots both set and cleared: {sorted(map(str, overlap))}")

    def __bool__(self) -> bool:
        return bool(self.set) or bool(self.clear)


def apply_delta(prev: BeliefState, delta: StateDelta) -> BeliefState:
    data = {k: v for k, v in prev.items() if k not in delta.clear}
    data.update(delta.set)
    return BeliefState(data)


def diff_states(prev: BeliefState, next_: BeliefState) -> StateDelta:
    to_set = {k: v for k, v in next_.items() if prev.get(k) != v}
    to_clear = frozenset(k for k in prev if k not in next_)
    return StateDelta(to_set, to_clear)


def serialize_state(state: BeliefState) -> str:
    if not state:
        return NULL_STATE
    parts = []
    for slot in sorted(state):
        value = state[slot].render()
        if '"' in value:
            raise SerializationError(f"value for {slot} contains a double quote: {value!r}")
        parts.append(f'{slot.domain} {slot.slot} = " {value} "')
    return " ".join(parts)


# <domain> <slot words> = " <value> "
_ASSIGNMENT = re.compile(
    r'\s*(?P<domain>[^\s="]+)\s+(?P<slot>[^="]*?)\s*=\s*"(?P<value>[^"]*)"\s*'
)


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def parse_state(encoded: str, ontology: "Ontology | None" = None, strict: bool = False) -> BeliefState:
    """Inverse of :func:`serialize_state`.

    Assignment order is irrelevant; a later assignment to the same slot wins.
    With ``strict`` and an ontology, unknown slots and illegal values raise
    :class:`ValidationError`.
    """
    if encoded.strip() == NULL_STATE:
        return EMPTY_STATE
    pos = 0
    pairs: list[tuple[SlotId, SlotValue]] = []
    if not encoded.strip():
        raise ParseError("empty state text (expected 'null')", 0)
    while pos < len(encoded):
        m = _ASSIGNMENT.match(encoded, pos)
        if m is None or m.end() == pos:
            raise ParseError("expected '<domain> <slot> = \" <value> \"'", _byte_offset(encoded, pos))
        if not m.group("slot").strip():
            raise ParseError("missing slot name", _byte_offset(encoded, m.start("slot")))
        value = m.group("value")
        if not value.strip():
            raise ParseError("empty value", _byte_offset(encoded, m.start("value")))
        slot = SlotId(m.group("domain"), " ".join(m.group("slot").split()))
        pairs.append((slot, SlotValue.from_text(value)))
        pos = m.end()
    state = BeliefState(pairs)
    if strict and ontology is not None:
        problems = ontology.validate_state(state)
        if problems:
            raise ValidationError(problems)
    return state


@dataclass(frozen=True)
class NumericRange:
    low: int
    high: int

    def __post_init__(self) -> None:
        if self.low < 0 or self.high < 0 or self.low > self.high:
            raise StateError(f"bad range {self.low}-{self.high}")

    def __contains__(self, value: int) -> bool:
        return self.low <= value <= self.high

    def __str__(self) -> str:
        return f"{self.low}-{self.high}"

    @classmethod
    def parse(cls, text: str) -> "NumericRange | None":
        m = _RANGE_TEXT.fullmatch(normalize_value(text))
        if m is None:
            return None
        low, high = int(m.group(1)), int(m.group(2))
        if low > high:
            return None
        return cls(low, high)


_RANGE_TEXT = re.compile(r"(\d+)\s*[-–—~～至到]\s*(\d+)\s*(?:元|yuan)?")


def expand_range(current: NumericRange, observed: int) -> NumericRange:
    """Widen ``current`` to take in ``observed``, rounding outward to a multiple of ten."""
    if observed < 0:
        raise StateError("observed value must be non-negative")
    if observed < current.low:
        return NumericRange((observed // 10) * 10, current.high)
    if observed > current.high:
        return NumericRange(current.low, math.ceil(observed / 10) * 10)
    return current


@dataclass(frozen=True)
class Ontology:
    domains: tuple[str, ...] = ()
    slots: tuple[SlotId, ...] = ()
    values: Mapping[SlotId, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", tuple(self.domains))
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "values", {k: tuple(v) for k, v in dict(self.values).items()})
        problems = []
        slot_set = set(self.slots)
        if len(slot_set) != len(self.slots):
            problems.append("duplicate slot")
        for slot in self.slots:
            if slot.domain not in self.domains:
                problems.append(f"slot {slot} references unknown domain {slot.domain!r}")
        for slot, vals in self.values.items():
            if slot not in slot_set:
                problems.append(f"values given for undeclared slot {slot}")
            if not vals:
                problems.append(f"empty value set for {slot}")
            if len(set(vals)) != len(vals):
                problems.append(f"duplicate values for {slot}")
            for v in vals:
                if '"' in v or v != v.strip() or not v:
                    problems.append(f"illegal value {v!r} for {slot}")
        if problems:
            raise ValidationError(problems)
        # value -> slots index, used for span detection and lint
        index: dict[str, list[SlotId]] = {}
        for slot in self.slots:
            for v in self.values.get(slot, ()):
                index.setdefault(v, []).append(slot)
        object.__setattr__(self, "_by_value", {k: tuple(v) for k, v in index.items()})

    @property
    def n(self) -> int:
        return len(self.slots)

    @property
    def is_empty(self) -> bool:
        return not self.slots

    def slots_for_value(self, value: str) -> tuple[SlotId, ...]:
        return self._by_value.get(value, ())  # type: ignore[attr-defined]

    def value_owners(self) -> Mapping[str, tuple[SlotId, ...]]:
        return self._by_value  # type: ignore[attr-defined]

    def is_legal(self, slot: SlotId, value: SlotValue) -> bool:
        if slot not in self.values and slot not in self.slots:
            return False
        if not value.is_regular:
            return True
        return value.text in self.values.get(slot, ())

    def validate_state(self, state: BeliefState) -> list[str]:
        problems = []
        known = set(self.slots)
        for slot, value in state.items():
            if slot not in known:
                problems.append(f"unknown slot {slot}")
            elif value.is_regular and value.text not in self.values.get(slot, ()):
                problems.append(f"illegal value {value.text!r} for {slot}")
        return problems

    def to_json(self) -> dict:
        return {
            "domains": list(self.domains),
            "slots": [
                {"domain": s.domain, "slot": s.slot, "values": list(self.values.get(s, ()))}
                for s in self.slots
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping | None) -> "Ontology":
        if not obj:
            return cls()
        slots, values = [], {}
        for entry in obj.get("slots", []):
            slot = SlotId(entry["domain"], entry["slot"])
            slots.append(slot)
            values[slot] = tuple(normalize_value(v) for v in entry.get("values", []))
        return cls(tuple(obj.get("domains", [])), tuple(slots), values)

    @classmethod
    def load(cls, path: str | Path) -> "Ontology":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))
