"""Edit distance and diff primitives.

Distances are unit-cost Levenshtein (insert/delete/substitute), computed
either over characters or over whitespace-separated tokens. Diffs are
deterministic hunk sequences satisfying two reconstruction invariants:
concatenating equal+delete hunks yields the old text, equal+insert hunks
the new text.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from typing import Sequence

GRANULARITIES = ("chars", "words")


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace runs; punctuation stays attached."""
    return text.split()


def _levenshtein(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, item_b in enumerate(b, start=1):
            cost = 0 if item_a == item_b else 1
            current[j] = min(
                previous[j] + 1,       # delete
                current[j - 1] + 1,    # insert
                previous[j - 1] + cost,  # substitute / match
            )
        previous = current
    return previous[-1]


def edit_distance(a: str, b: str, granularity: str = "chars") -> int:
    if granularity == "chars":
        return _levenshtein(a, b)
    if granularity == "words":
        return _levenshtein(tokenize(a), tokenize(b))
    raise ValueError(f"unknown granularity: {granularity!r}")


@dataclass(frozen=True)
class DiffHunk:
    op: str  # "equal" | "insert" | "delete"
    text: str

    def to_dict(self) -> dict:
        return {"op": self.op, "text": self.text}


def compute_diff(a: str, b: str) -> list[DiffHunk]:
    """Hunk sequence from old text a to new text b.

    Deterministic for fixed inputs; hunk minimality is not guaranteed.
    """
    matcher = difflib.SequenceMatcher(None, a, b, autojunk=False)
    hunks: list[DiffHunk] = []
    for op, i1, i2, j1, j2 in matcher.get_opcodes():
        if op == "equal":
            hunks.append(DiffHunk("equal", a[i1:i2]))
        elif op == "delete":
            hunks.append(DiffHunk("delete", a[i1:i2]))
        elif op == "insert":
            hunks.append(DiffHunk("insert", b[j1:j2]))
        else:  # replace: emit the removal before the addition
            hunks.append(DiffHunk("delete", a[i1:i2]))
            hunks.append(DiffHunk("insert", b[j1:j2]))
    return hunks


def reconstruct_old(hunks: list[DiffHunk]) -> str:
    return "".join(h.text for h in hunks if h.op in ("equal", "delete"))


def reconstruct_new(hunks: list[DiffHunk]) -> str:
    return "".join(h.text for h in hunks if h.op in ("equal", "insert"))
