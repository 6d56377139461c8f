"""Bookkeeping for a carve: every repair and sanitization, one per line."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import SchemaError

SANITIZE_REASONS = ("AboveRange", "BelowMagnitude", "NonFinite")


@dataclass(frozen=True)
class XmlRepair:
    offset: int
    original: str
    repaired: str


@dataclass(frozen=True)
class Sanitization:
    index: int
    original: float
    corrected: float
    reason: str

    def __post_init__(self):
        if self.reason not in SANITIZE_REASONS:
            raise ValueError(f"unknown sanitization reason {self.reason!r}")


@dataclass
class CarveReport:
    xml_found: bool = False
    xml_repairs: list[XmlRepair] = field(default_factory=list)
    weights_found: int = 0
    weights_sanitized: list[Sanitization] = field(default_factory=list)
    scan_restarts: int = 0
    xml_offset: int | None = None
    blob_offset: int | None = None

    @property
    def n_edits(self) -> int:
        return len(self.xml_repairs) + len(self.weights_sanitized)

    def merge(self, other: "CarveReport") -> "CarveReport":
        return CarveReport(
            xml_found=self.xml_found or other.xml_found,
            xml_repairs=self.xml_repairs + other.xml_repairs,
            weights_found=self.weights_found or other.weights_found,
            weights_sanitized=self.weights_sanitized + other.weights_sanitized,
            scan_restarts=self.scan_restarts + other.scan_restarts,
            xml_offset=self.xml_offset if self.xml_offset is not None else other.xml_offset,
            blob_offset=self.blob_offset if self.blob_offset is not None else other.blob_offset,
        )

    def to_text(self) -> str:
        """Line-oriented dump: a summary header, then one edit per line.

        Each line is a tab-separated record whose fields are JSON scalars.
        """
        head = [
            ("xml_found", self.xml_found),
            ("xml_offset", self.xml_offset),
            ("blob_offset", self.blob_offset),
            ("weights_found", self.weights_found),
            ("scan_restarts", self.scan_restarts),
        ]
        lines = ["#\t" + k + "\t" + json.dumps(v) for k, v in head]
        for r in self.xml_repairs:
            lines.append("\t".join(["xml", str(r.offset), json.dumps(r.original),
                                    json.dumps(r.repaired)]))
        for s in self.weights_sanitized:
            lines.append("\t".join(["weight", str(s.index), _num(s.original),
                                    _num(s.corrected), s.reason]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CarveReport":
        rep = cls()
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            try:
                if parts[0] == "#":
                    setattr(rep, parts[1], json.loads(parts[2]))
                elif parts[0] == "xml":
                    rep.xml_repairs.append(
                        XmlRepair(int(parts[1]), json.loads(parts[2]), json.loads(parts[3])))
                elif parts[0] == "weight":
                    rep.weights_sanitized.append(Sanitization(
                        int(parts[1]), float(parts[2]), float(parts[3]), parts[4]))
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise SchemaError(f"line {n}: {exc}") from None
        return rep


def _num(v: float) -> str:
    return repr(float(v))
