"""Toolkit for dialogue-state corpora: state encoding, translation with
entity alignment, turn-recurrent evaluation and annotation linting."""

__version__ = "0.1.0"
