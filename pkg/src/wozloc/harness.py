"""Turn-recurrent evaluation of a state-tracking backend.

The backend sees only the previous state (as text), the agent utterance and
the user utterance, and returns the next state.  In ``predicted-state`` mode
its own previous answer is fed back (JGA); in ``gold-state`` mode the gold
previous state is fed instead (GJGA).  Both start every dialogue from the
empty state.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .ingest import Corpus, Dialogue
from .state import EMPTY_STATE, BeliefState, StateError, parse_state, serialize_state
from .wire import ProtocolError, TransportError, map_with_connections

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    PREDICTED = "predicted-state"
    GOLD = "gold-state"

    @classmethod
    def from_metric(cls, name: str) -> "Mode":
        return {"jga": cls.PREDICTED, "gjga": cls.GOLD}[name]


class UsageError(Exception):
    pass


class UndefinedMetricError(UsageError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    dialogue_id: str
    turn: int
    input_state: BeliefState
    gold_state: BeliefState
    predicted_state: BeliefState | None
    mode: Mode
    final: bool = False
    error: str | None = None

    @property
    def correct(self) -> bool:
        return self.predicted_state is not None and self.predicted_state == self.gold_state


def request_id(dialogue_id: str, turn: int) -> str:
    return f"{dialogue_id}#{turn}"


def split_request_id(rid: str) -> tuple[str, int]:
    did, _, turn = rid.rpartition("#")
    return did, int(turn)


def run_dialogue(dialogue: Dialogue, backend: Any, mode: Mode) -> tuple[list[PredictionRecord], bool]:
    """Evaluate one dialogue; the flag reports a lost connection."""
    records = []
    prev_pred = prev_gold = EMPTY_STATE
    last = len(dialogue.turns) - 1
    for turn in dialogue.turns:
        given = prev_gold if mode is Mode.GOLD else prev_pred
        req = {
            "id": request_id(dialogue.id, turn.index),
            "prev_state": serialize_state(given),
            "agent": turn.agent,
            "user": turn.user,
        }
        predicted, error = None, None
        try:
            reply = backend.request(req)
            predicted = parse_state(reply["next_state"])
        except TransportError as e:
            msg = f"transport lost: {e}"
            for t in dialogue.turns[turn.index:]:
                records.append(PredictionRecord(dialogue.id, t.index, given if t is turn else EMPTY_STATE,
                                                t.state, None, mode, t.index == last, msg))
            return records, True
        except (ProtocolError, StateError, KeyError, TypeError) as e:
            error = f"bad backend response: {e!r}"
            log.warning("%s turn %d: %s", dialogue.id, turn.index, error)
        records.append(PredictionRecord(dialogue.id, turn.index, given, turn.state, predicted, mode,
                                        turn.index == last, error))
        prev_pred = predicted if predicted is not None else given
        prev_gold = turn.state
    return records, False


def run_csp_loop(corpus: Corpus, connect: Callable[[], Any], mode: Mode, jobs: int = 1) -> list[PredictionRecord]:
    """Run every dialogue through the backend; ``connect()`` opens one backend per worker."""

    def work(conn: Any, dialogue: Dialogue):
        return run_dialogue(dialogue, conn, mode)

    def unreachable(dialogue: Dialogue, exc: Exception):
        return [PredictionRecord(dialogue.id, t.index, EMPTY_STATE, t.state, None, mode,
                                 t.index == len(dialogue.turns) - 1, f"backend unreachable: {exc}")
                for t in dialogue.turns]

    per_dialogue = map_with_connections(corpus.dialogues, connect, work, unreachable, jobs)
    return [r for recs in per_dialogue for r in recs]


def _accuracy(records: Sequence[PredictionRecord], mode: Mode, exclude_final: bool) -> float:
    wrong = [r for r in records if r.mode is not mode]
    if wrong:
        raise UsageError(f"{mode.value} metric given {wrong[0].mode.value} records")
    scored = [r for r in records if not (exclude_final and r.final)]
    if not scored:
        raise UndefinedMetricError("no turns to score; the metric is undefined")
    return sum(r.correct for r in scored) / len(scored)


def compute_jga(records: Sequence[PredictionRecord], exclude_final: bool = False) -> float:
    return _accuracy(records, Mode.PREDICTED, exclude_final)


def compute_gjga(records: Sequence[PredictionRecord], exclude_final: bool = False) -> float:
    return _accuracy(records, Mode.GOLD, exclude_final)


@dataclass
class MetricsReport:
    jga: float | None = None
    gjga: float | None = None
    turns: int = 0
    per_dialogue: dict[str, dict[str, float]] = field(default_factory=dict)
    per_turn: dict[str, dict[int, float]] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "jga": self.jga,
            "gjga": self.gjga,
            "turns": self.turns,
            "per_dialogue": self.per_dialogue,
            "per_turn": {k: {str(i): v for i, v in d.items()} for k, d in self.per_turn.items()},
            "errors": self.errors,
        }

    def summary(self) -> str:
        def fmt(x):
            return "-" if x is None else f"{100 * x:.2f}"
        lines = [f"{'metric':<8}{'value':>10}", f"{'JGA':<8}{fmt(self.jga):>10}", f"{'GJGA':<8}{fmt(self.gjga):>10}",
                 f"{'turns':<8}{self.turns:>10}"]
        if self.errors:
            lines.append(f"{'errors':<8}{len(self.errors):>10}")
        return "\n".join(lines)


def _breakdowns(records: Iterable[PredictionRecord], exclude_final: bool):
    by_dialogue: dict[str, list[bool]] = {}
    by_turn: dict[int, list[bool]] = {}
    for r in records:
        if exclude_final and r.final:
            continue
        by_dialogue.setdefault(r.dialogue_id, []).append(r.correct)
        by_turn.setdefault(r.turn, []).append(r.correct)
    mean = lambda xs: sum(xs) / len(xs)
    return ({k: mean(v) for k, v in by_dialogue.items()},
            {k: mean(v) for k, v in sorted(by_turn.items())})


def build_report(runs: dict[Mode, list[PredictionRecord]], exclude_final: bool = False) -> MetricsReport:
    report = MetricsReport()
    for mode, records in runs.items():
        name = "jga" if mode is Mode.PREDICTED else "gjga"
        value = compute_jga(records, exclude_final) if mode is Mode.PREDICTED else compute_gjga(records, exclude_final)
        setattr(report, name, value)
        report.turns = sum(1 for r in records if not (exclude_final and r.final))
        per_dialogue, per_turn = _breakdowns(records, exclude_final)
        for did, acc in per_dialogue.items():
            report.per_dialogue.setdefault(did, {})[name] = acc
        report.per_turn[name] = per_turn
        report.errors.extend({"mode": mode.value, "dialogue": r.dialogue_id, "turn": r.turn, "error": r.error}
                             for r in records if r.error)
    return report
