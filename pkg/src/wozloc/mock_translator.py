"""Deterministic stand-in for a neural translator.

Each whitespace token is mapped through a word lexicon and the token order is
then permuted; the reported attention is the exact one-hot permutation, so the
correct alignment of any span is known.  In ``noisy`` mode tokens missing from
the lexicon (entity names, numbers) are corrupted the way an NMT system drifts
on names it has not seen.

Run as a worker::

    python -m wozloc.mock_translator --mode noisy
"""
from __future__ import annotations

import argparse
import hashlib
import json
import random
import re
from importlib import resources
from pathlib import Path

from .wire import TRANSLATE_PROTOCOL, char_to_byte_offsets, serve

DRIFT_WORDS = ("ocean", "museum", "harbour", "garden", "palace", "tower", "river", "market")
MODES = ("clean", "noisy")
PERMUTATIONS = ("reverse", "seeded", "identity")

_TOKEN = re.compile(r"\S+")


def load_lexicon(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        text = resources.files("wozloc.data").joinpath("mock_lexicon.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def corrupt(token: str) -> str:
    if any(ch.isdigit() for ch in token):
        return "".join(str((int(ch) + 1) % 10) if ch.isdigit() else ch for ch in token)
    return DRIFT_WORDS[_digest(token) % len(DRIFT_WORDS)]


class MockTranslator:
    def __init__(self, lexicon: dict[str, str] | None = None, mode: str = "clean", permutation: str = "reverse"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if permutation not in PERMUTATIONS:
            raise ValueError(f"unknown permutation {permutation!r}")
        self.lexicon = load_lexicon() if lexicon is None else lexicon
        self.mode = mode
        self.permutation = permutation
        self.calls = 0

    def map_token(self, token: str) -> str:
        if token in self.lexicon:
            return self.lexicon[token]
        return corrupt(token) if self.mode == "noisy" else token

    def order(self, text: str, n: int) -> list[int]:
        """order[j] = source index of target token j."""
        idx = list(range(n))
        if self.permutation == "reverse":
            idx.reverse()
        elif self.permutation == "seeded":
            random.Random(_digest(text)).shuffle(idx)
        return idx

    def translate(self, text: str) -> dict:
        src = [(m.start(), m.end()) for m in _TOKEN.finditer(text)]
        order = self.order(text, len(src))
        words = [self.map_token(text[src[s][0]:src[s][1]]) for s in order]
        tgt, pos = [], 0
        for w in words:
            tgt.append((pos, pos + len(w)))
            pos += len(w) + 1
        translation = " ".join(words)
        attention = [[1.0 if s == order[j] else 0.0 for s in range(len(src))] for j in range(len(words))]
        return {
            "translation": translation,
            "src_token_offsets": [list(p) for p in char_to_byte_offsets(text, src)],
            "tgt_token_offsets": [list(p) for p in char_to_byte_offsets(translation, tgt)],
            "attention": attention,
        }

    def request(self, payload: dict) -> dict:
        self.calls += 1
        return {"id": payload["id"], **self.translate(payload["text"])}

    def close(self) -> None:
        pass


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="deterministic mock translator worker")
    parser.add_argument("--mode", choices=MODES, default="clean")
    parser.add_argument("--permutation", choices=PERMUTATIONS, default="reverse")
    parser.add_argument("--lexicon", help="JSON word map (defaults to the bundled one)")
    args = parser.parse_args(argv)
    mock = MockTranslator(load_lexicon(args.lexicon), args.mode, args.permutation)
    serve(TRANSLATE_PROTOCOL, mock.request)


if __name__ == "__main__":
    main()
