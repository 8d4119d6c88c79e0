"""Python access to the narrshift engine."""

import json

from ._narrshift import (
    NarrshiftError,
    chunk,
    corpus_hash,
    improvement,
    kl_divergence,
    tokenize,
)
from . import _narrshift

__all__ = [
    "NarrshiftError",
    "chunk",
    "corpus_hash",
    "deduce",
    "improvement",
    "kl_divergence",
    "mock_transform",
    "tokenize",
]


def deduce(program):
    """Least fixpoint of a program given as the dict form written by the CLI.

    Returns {"pred(a, b)": annotation}.
    """
    return json.loads(_narrshift._deduce(json.dumps(program)))


def mock_transform(train, stories, direction, seed=7):
    """Learn rules from `train`, then run the abduction loop on each story
    against the built-in mock provider. Returns one run dict per story."""
    return [json.loads(r) for r in _narrshift._mock_transform(train, stories, direction, seed)]
