"""Entity spans, sentence splitting, quote stripping and attention-based span alignment.

Offsets here are Python string indices (code points), half-open. Conversion to
UTF-8 byte offsets happens only at the wire boundary (see :mod:`wozloc.wire`).
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Sequence

from .state import BeliefState, SlotId, normalize_value

SENTENCE_DELIMITERS = ".!?。！？；"
# full-width delimiters end a sentence even without a following space
_WIDE_DELIMITERS = "。！？；"
QUOTE_CHARS = "\"“”‘’「」"


class AlignmentFailure(Exception):
    pass


@dataclass(frozen=True)
class CharSpan:
    start: int
    end: int
    slot: SlotId | None = None
    value: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span {self.start}..{self.end}")

    def shift(self, delta: int) -> "CharSpan":
        return CharSpan(self.start + delta, self.end + delta, self.slot, self.value)

    def overlaps(self, other: "CharSpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class AlignmentConfig:
    extension_threshold: float = 0.5
    numeric_heuristics_enabled: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.extension_threshold <= 1:
            raise ValueError("extension_threshold must be in (0, 1]")


TokenOffsets = Sequence[tuple[int, int]]
AttentionMatrix = Sequence[Sequence[float]]


def check_token_offsets(offsets: TokenOffsets, text_length: int) -> None:
    prev_end = 0
    for start, end in offsets:
        if not (prev_end <= start <= end <= text_length):
            raise ValueError(f"token offsets not monotone/in bounds at ({start}, {end})")
        prev_end = end


def normalize_rows(attn: AttentionMatrix) -> list[list[float]]:
    out = []
    for row in attn:
        if any(w < 0 for w in row):
            raise ValueError("attention weights must be non-negative")
        total = sum(row)
        out.append([w / total for w in row] if total > 0 else [0.0] * len(row))
    return out


# entity detection

def _spaced_word_char(ch: str) -> bool:
    # letters/digits of scripts that separate words with spaces
    return ch.isalnum() and unicodedata.east_asian_width(ch) not in ("W", "F")


def find_occurrences(text: str, value: str) -> list[int]:
    """Start offsets of ``value`` in ``text`` that do not cut through a word."""
    if not value:
        return []
    starts = []
    head_word = _spaced_word_char(value[0])
    tail_word = _spaced_word_char(value[-1])
    i = text.find(value)
    while i >= 0:
        j = i + len(value)
        ok_left = not (head_word and i > 0 and _spaced_word_char(text[i - 1]))
        ok_right = not (tail_word and j < len(text) and _spaced_word_char(text[j]))
        if ok_left and ok_right:
            starts.append(i)
        i = text.find(value, i + 1)
    return starts


def contains_value(text: str, value: str) -> bool:
    return bool(find_occurrences(text, normalize_value(value)))


def select_longest(candidates: list[CharSpan]) -> list[CharSpan]:
    """Greedy non-overlapping selection: longest first, then leftmost."""
    chosen: list[CharSpan] = []
    key = lambda c: (-(c.end - c.start), c.start, c.slot or SlotId("_", "_"), c.value)
    for cand in sorted(candidates, key=key):
        if not any(cand.overlaps(c) for c in chosen):
            chosen.append(cand)
    return sorted(chosen, key=lambda c: c.start)


def detect_entity_spans(utterance: str, state: BeliefState) -> list[CharSpan]:
    utterance = unicodedata.normalize("NFC", utterance)
    candidates = []
    for slot, value in state.regular_items():
        for start in find_occurrences(utterance, value):
            candidates.append(CharSpan(start, start + len(value), slot, value))
    return select_longest(candidates)


# sentence splitting

@dataclass(frozen=True)
class Sentence:
    text: str
    offset: int

    @property
    def end(self) -> int:
        return self.offset + len(self.text)


_BREAK = re.compile(r"[.!?。！？；]+")


def split_sentences(text: str) -> list[Sentence]:
    """Split after sentence-final punctuation that is followed by a space or the end.

    Sentences keep their delimiters; the spaces between sentences belong to no
    sentence, so ``reconstruct(split_sentences(t), len(t)) == t``.
    """
    cuts = [0]
    for m in _BREAK.finditer(text):
        end = m.end()
        wide = any(ch in _WIDE_DELIMITERS for ch in m.group())
        if end == len(text) or text[end] == " " or wide:
            cuts.append(end)
    cuts.append(len(text))
    out = []
    for a, b in zip(cuts, cuts[1:]):
        chunk = text[a:b]
        stripped = chunk.strip(" ")
        if stripped:
            out.append(Sentence(stripped, a + (len(chunk) - len(chunk.lstrip(" ")))))
    return out


def reconstruct(sentences: Sequence[Sentence], length: int) -> str:
    chars = [" "] * length
    for s in sentences:
        chars[s.offset:s.end] = s.text
    return "".join(chars)


# quotes

@dataclass(frozen=True)
class QuoteMap:
    """Maps offsets of a quote-stripped text back to the original and forth."""
    kept: tuple[int, ...]       # original index of each kept character
    original_length: int

    def to_original(self, i: int) -> int:
        return self.kept[i] if i < len(self.kept) else self.original_length

    def to_clean(self, i: int) -> int:
        # number of kept characters strictly before original index i
        lo, hi = 0, len(self.kept)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.kept[mid] < i:
                lo = mid + 1
            else:
                hi = mid
        return lo


def strip_quotes(text: str) -> tuple[str, QuoteMap]:
    kept = [i for i, ch in enumerate(text) if ch not in QUOTE_CHARS]
    return "".join(text[i] for i in kept), QuoteMap(tuple(kept), len(text))


# attention alignment

def align_span(
    src_span: CharSpan,
    src_toks: TokenOffsets,
    tgt_toks: TokenOffsets,
    attn: AttentionMatrix,
    cfg: AlignmentConfig = AlignmentConfig(),
) -> CharSpan:
    """Project a source span onto the target through cross-attention.

    Each target subword is scored by the attention it pays to the source
    subwords under the span; the best one is grown into a contiguous run of
    subwords scoring at least ``extension_threshold`` times the best score.
    """
    if len(attn) != len(tgt_toks) or any(len(row) != len(src_toks) for row in attn):
        raise ValueError("attention shape does not match token counts")
    covered = [s for s, (a, b) in enumerate(src_toks) if a < src_span.end and b > src_span.start]
    if not covered:
        raise AlignmentFailure("span overlaps no source subword")
    scores = [sum(row[s] for s in covered) for row in attn]
    if not scores or sum(scores) <= 0:
        raise AlignmentFailure("no attention mass on the span's subwords")
    best = max(range(len(scores)), key=lambda j: (scores[j], -j))
    floor = cfg.extension_threshold * scores[best]
    left = right = best
    while left > 0 and scores[left - 1] >= floor:
        left -= 1
    while right + 1 < len(scores) and scores[right + 1] >= floor:
        right += 1
    start, end = tgt_toks[left][0], tgt_toks[right][1]
    if end <= start:
        raise AlignmentFailure("aligned subwords cover no characters")
    return CharSpan(start, end, src_span.slot, src_span.value)


# numbers, dates, times

_NUMERIC = re.compile(
    r"""(?<!\d)(?:
        (?P<iso>\d{4}-\d{1,2}-\d{1,2})
      | (?P<cjk>\d{1,2}\s*月\s*\d{1,2}\s*[日号])
      | (?P<time>\d{1,2}\s*:\s*\d{2})
      | (?P<range>\d+\s*[-–—~～至到]\s*\d+)
      | (?P<int>\d+)
    )(?!\d)""",
    re.VERBOSE,
)


def _normalize_numeric(m: re.Match) -> tuple[str, str]:
    kind = m.lastgroup
    nums = [int(x) for x in re.findall(r"\d+", m.group())]
    if kind == "iso":
        return kind, "{}-{}-{}".format(*nums)
    if kind == "cjk":
        return kind, "{}月{}日".format(*nums)
    if kind == "time":
        return kind, f"{nums[0]}:{nums[1]:02d}"
    if kind == "range":
        return kind, "{}-{}".format(*nums)
    return "int", str(nums[0])


def classify_numeric(value: str) -> tuple[str, str] | None:
    """(class, normalized form) for integers, ranges, clock times and dates."""
    value = normalize_value(value)
    m = _NUMERIC.fullmatch(value)
    return _normalize_numeric(m) if m else None


def numeric_span_recover(value: str, target_text: str, slot: SlotId | None = None) -> CharSpan | None:
    """Locate a numeric value in a translation without attention.

    Only an unambiguous hit counts: zero or several occurrences give ``None``.
    """
    wanted = classify_numeric(value)
    if wanted is None:
        return None
    hits = [m for m in _NUMERIC.finditer(target_text) if _normalize_numeric(m) == wanted]
    if len(hits) != 1:
        return None
    return CharSpan(hits[0].start(), hits[0].end(), slot, value)
