"""Reference parser backends used to check the harness.

``echo``      returns the state it was given.
``oracle``    applies the gold delta of the turn (needs the corpus).
``scripted``  like ``oracle``, but adds a bogus slot on every n-th turn.

Run as a worker::

    python -m wozloc.backends oracle --corpus data.json
"""
from __future__ import annotations

import argparse

from .harness import split_request_id
from .ingest import Corpus, load_canonical
from .state import EMPTY_STATE, BeliefState, SlotId, SlotValue, apply_delta, diff_states, parse_state, serialize_state
from .wire import PARSE_PROTOCOL, serve

BOGUS_SLOT = SlotId("zz_bogus", "slot")
BOGUS_VALUE = SlotValue.regular("injected")


class EchoBackend:
    def request(self, payload: dict) -> dict:
        return {"id": payload["id"], "next_state": serialize_state(parse_state(payload["prev_state"]))}

    def close(self) -> None:
        pass


class DeltaOracleBackend:
    def __init__(self, corpus: Corpus):
        self.deltas = {}
        for d in corpus.dialogues:
            prev = EMPTY_STATE
            for t in d.turns:
                self.deltas[(d.id, t.index)] = diff_states(prev, t.state)
                prev = t.state

    def next_state(self, dialogue_id: str, turn: int, prev: BeliefState) -> BeliefState:
        return apply_delta(prev, self.deltas[(dialogue_id, turn)])

    def request(self, payload: dict) -> dict:
        did, turn = split_request_id(payload["id"])
        prev = parse_state(payload["prev_state"])
        return {"id": payload["id"], "next_state": serialize_state(self.next_state(did, turn, prev))}

    def close(self) -> None:
        pass


class ScriptedErrorBackend(DeltaOracleBackend):
    """Oracle that injects a slot nobody annotated on turns every, 2*every, ... (1-based)."""

    def __init__(self, corpus: Corpus, every: int = 3):
        super().__init__(corpus)
        self.every = every

    def next_state(self, dialogue_id: str, turn: int, prev: BeliefState) -> BeliefState:
        state = super().next_state(dialogue_id, turn, prev)
        if (turn + 1) % self.every == 0:
            state = BeliefState({**state, BOGUS_SLOT: BOGUS_VALUE})
        return state


def make_backend(kind: str, corpus: Corpus | None = None, every: int = 3):
    if kind == "echo":
        return EchoBackend()
    if corpus is None:
        raise ValueError(f"the {kind} backend needs a corpus")
    if kind == "oracle":
        return DeltaOracleBackend(corpus)
    if kind == "scripted":
        return ScriptedErrorBackend(corpus, every)
    raise ValueError(f"unknown backend {kind!r}")


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="reference state-tracking backends (stdio worker)")
    parser.add_argument("kind", choices=("echo", "oracle", "scripted"))
    parser.add_argument("--corpus", help="canonical corpus with the gold states")
    parser.add_argument("--every", type=int, default=3)
    args = parser.parse_args(argv)
    corpus = load_canonical(args.corpus) if args.corpus else None
    backend = make_backend(args.kind, corpus, args.every)
    serve(PARSE_PROTOCOL, backend.request)


if __name__ == "__main__":
    main()
