"""Keyword recoding of inspector service notes into burrow-found outcomes.

Matching works on lowercase word tokens. A phrase matches a run of tokens
when every token but the last is equal and the last is a prefix, so
``"burrow"`` also catches ``"burrows"``. Negation markers must match a
whole token and only reach forward :data:`NEGATION_WINDOW` tokens inside
the same clause (clauses end at ``. ; ! ?`` and at ``but``).
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .core import FieldcheckError, ObservationRecord

NEGATION_WINDOW = 3

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?|[.;!?]")
_CLAUSE_BREAKS = {".", ";", "!", "?", "but"}


class UnmatchedNoteError(FieldcheckError, ValueError):
    def __init__(self, offenders: Sequence[ObservationRecord]):
        self.offenders = list(offenders)
        shown = "; ".join(f"block={r.block} period={r.period} note={r.note!r}" for r in self.offenders[:20])
        more = "" if len(self.offenders) <= 20 else f" (+{len(self.offenders) - 20} more)"
        super().__init__(f"{len(self.offenders)} note(s) matched no rule: {shown}{more}")


class UnmatchedPolicy(str, enum.Enum):
    DROP = "drop"
    ZERO = "zero"
    ERROR = "error"


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RuleTable:
    positive_phrases: tuple[str, ...]
    negative_phrases: tuple[str, ...]
    negation_markers: tuple[str, ...]
    version: int = 1

    def __post_init__(self) -> None:
        for name in ("positive_phrases", "negative_phrases", "negation_markers"):
            patterns = getattr(self, name)
            if not patterns:
                raise ValueError(f"{name} must not be empty")
            for p in patterns:
                if p != p.lower() or not p.strip():
                    raise ValueError(f"{name} entries must be non-empty lowercase text, got {p!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "RuleTable":
        return cls(
            positive_phrases=tuple(doc["positive"]),
            negative_phrases=tuple(doc["negative"]),
            negation_markers=tuple(doc["negation"]),
            version=int(doc.get("version", 1)),
        )

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "positive": list(self.positive_phrases),
            "negative": list(self.negative_phrases),
            "negation": list(self.negation_markers),
        }

    @classmethod
    def load(cls, path: str | Path) -> "RuleTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "RuleTable":
        text = resources.files("fieldcheck").joinpath("data/rules.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def with_positive(self, *phrases: str) -> "RuleTable":
        return RuleTable(self.positive_phrases + phrases, self.negative_phrases, self.negation_markers, self.version)


def _find_phrase(tokens: list[str], phrase: str) -> list[int]:
    parts = phrase.split()
    k = len(parts)
    hits = []
    for i in range(len(tokens) - k + 1):
        if tokens[i : i + k - 1] == parts[:-1] and tokens[i + k - 1].startswith(parts[-1]):
            hits.append(i)
    return hits


def _negated(tokens: list[str], start: int, markers: frozenset[str]) -> bool:
    for j in range(start - 1, max(start - NEGATION_WINDOW, 0) - 1, -1):
        if tokens[j] in _CLAUSE_BREAKS:
            return False
        if tokens[j] in markers:
            return True
    return False


def code_note(note: str | None, rules: RuleTable) -> int | None:
    """Code one note: 1 if any positive phrase is affirmed, 0 if only negative
    or negated evidence was found, ``None`` when nothing matched."""
    if not note:
        return None
    tokens = _tokens(note)
    markers = frozenset(rules.negation_markers)
    negative_evidence = False
    for phrase in rules.positive_phrases:
        for start in _find_phrase(tokens, phrase):
            if _negated(tokens, start, markers):
                negative_evidence = True
            else:
                return 1
    if not negative_evidence:
        negative_evidence = any(_find_phrase(tokens, phrase) for phrase in rules.negative_phrases)
    return 0 if negative_evidence else None


def code_all(
    records: Iterable[ObservationRecord],
    rules: RuleTable,
    unmatched_policy: UnmatchedPolicy | str = UnmatchedPolicy.DROP,
) -> list[ObservationRecord]:
    """Fill missing outcomes from notes; records that already carry one pass through."""
    policy = UnmatchedPolicy(unmatched_policy)
    out: list[ObservationRecord] = []
    unmatched: list[ObservationRecord] = []
    for rec in records:
        if rec.outcome is not None:
            out.append(rec)
            continue
        coded = code_note(rec.note, rules)
        if coded is None:
            unmatched.append(rec)
            if policy is UnmatchedPolicy.ZERO:
                out.append(rec.with_outcome(0))
            continue
        out.append(rec.with_outcome(coded))
    if unmatched and policy is UnmatchedPolicy.ERROR:
        raise UnmatchedNoteError(unmatched)
    return out
