"""Dictionary of the IR dialect's vocabulary and nearest-token repair."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from ..errors import NoMatch
from ..ir import KINDS, PRECISION, IR_VERSION

TAGS = ("net", "layers", "layer", "data", "input", "output", "port", "dim",
        "edges", "edge", "cli_parameters")
ATTRIBUTES = ("name", "version", "id", "type", "precision", "from-layer", "from-port",
              "to-layer", "to-port", "out-size", "kernel", "strides", "pads", "output",
              "rate", "axis", "value")
VALUES = (PRECISION, IR_VERSION)


@dataclass(frozen=True)
class TokenDictionary:
    tags: tuple[str, ...] = TAGS
    attributes: tuple[str, ...] = ATTRIBUTES
    values: tuple[str, ...] = VALUES
    layer_types: tuple[str, ...] = KINDS

    def __post_init__(self):
        if not (self.tags or self.attributes or self.values or self.layer_types):
            raise ValueError("token dictionary is empty")
        for group in (self.tags, self.attributes):
            if any(t != t.lower() for t in group):
                raise ValueError("tag and attribute entries must be lowercase")

    def entries(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for group in (self.tags, self.attributes, self.values, self.layer_types):
            for t in group:
                seen.setdefault(t)
        return tuple(seen)

    def __iter__(self):
        return iter(self.entries())

    def __len__(self):
        return len(self.entries())


DEFAULT_DICTIONARY = TokenDictionary()


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def repair_token(corrupt: str, dictionary: TokenDictionary | Iterable[str] = DEFAULT_DICTIONARY,
                 max_distance: int = 2) -> str:
    """Closest dictionary entry to ``corrupt``.

    Entries written in lowercase match case-insensitively; the rest must
    match case and all.  Ties go to the longest entry, then the
    lexicographically smallest.
    """
    if max_distance < 1:
        raise ValueError("max_distance must be at least 1")
    best = None
    folded = corrupt.lower()
    for entry in dictionary:
        # lowercase entries (tags, attribute names) match case-insensitively
        d = edit_distance(folded if entry.islower() else corrupt, entry)
        if d > max_distance:
            continue
        key = (d, -len(entry), entry)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoMatch(f"no dictionary entry within {max_distance} edits of {corrupt!r}")
    return best[2]
