"""Domain types, block-window aggregation and the shared seeding contract."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BlockId = int
PeriodIndex = int

DEFAULT_WINDOW_LEN = 3
RECORD_COLUMNS = ("block_id", "period", "source", "note", "outcome")


class FieldcheckError(Exception):
    """Base class for contract violations raised by this package."""


class MissingOutcomeError(FieldcheckError, ValueError):
    pass


class UnknownBlockError(FieldcheckError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0])


class Source(str, enum.Enum):
    REPORT = "report"
    FIELD = "field"


@dataclass(frozen=True)
class Block:
    id: BlockId
    ward: int
    features: tuple[float, ...]


@dataclass(frozen=True)
class ObservationRecord:
    block: BlockId
    period: PeriodIndex
    source: Source
    note: str | None = None
    outcome: int | None = None

    def with_outcome(self, outcome: int | None) -> "ObservationRecord":
        return ObservationRecord(self.block, self.period, self.source, self.note, outcome)


@dataclass(frozen=True)
class LabeledInstance:
    block: BlockId
    window_start: PeriodIndex
    window_len: int
    features: tuple[float, ...]
    label: int


@dataclass(frozen=True)
class PredictionSet:
    window_start: PeriodIndex
    entries: dict[BlockId, float]

    def __post_init__(self) -> None:
        for block, p in self.entries.items():
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability for block {block} outside [0, 1]: {p!r}")

    @classmethod
    def from_arrays(cls, window_start: int, blocks: Sequence[int], probs: Sequence[float]) -> "PredictionSet":
        return cls(window_start, {int(b): float(p) for b, p in zip(blocks, probs)})

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class City:
    """A set of blocks sharing one feature layout.

    ``config`` echoes whatever produced the city (a CityConfig for synthetic
    cities) and is carried through serialization untouched.
    """

    blocks: tuple[Block, ...]
    ward_propensity: dict[int, float]
    config: object = None
    _features: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.blocks:
            raise FieldcheckError("a city needs at least one block")
        width = len(self.blocks[0].features)
        for i, b in enumerate(self.blocks):
            if b.id != i:
                raise FieldcheckError(f"block ids must be dense 0..B-1; position {i} holds id {b.id}")
            if len(b.features) != width:
                raise FieldcheckError(f"block {b.id} has {len(b.features)} features, expected {width}")
        mat = np.array([b.features for b in self.blocks], dtype=np.float64).reshape(len(self.blocks), width)
        if not np.all(np.isfinite(mat)):
            raise FieldcheckError("block features must be finite")
        mat.setflags(write=False)
        object.__setattr__(self, "_features", mat)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_features(self) -> int:
        return self._features.shape[1]

    @property
    def features(self) -> np.ndarray:
        """Read-only (n_blocks, n_features) matrix, row i = block i."""
        return self._features

    @property
    def wards(self) -> np.ndarray:
        return np.array([b.ward for b in self.blocks], dtype=np.int64)

    def block(self, block_id: BlockId) -> Block:
        if not (0 <= block_id < len(self.blocks)):
            raise UnknownBlockError(f"unknown block id {block_id}")
        return self.blocks[block_id]

    def __contains__(self, block_id: object) -> bool:
        return isinstance(block_id, (int, np.integer)) and 0 <= int(block_id) < len(self.blocks)


# ---------------------------------------------------------------------------
# seeding


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a 64-bit child seed from a master seed and purpose labels.

    The derivation is a pure hash, so any stage can be rerun on its own and
    parallel workers get the same stream regardless of scheduling.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))


# ---------------------------------------------------------------------------
# aggregation


def aggregate_outcomes(
    records: Iterable[ObservationRecord],
    window_start: PeriodIndex,
    window_len: int = DEFAULT_WINDOW_LEN,
    city: City | None = None,
) -> list[LabeledInstance]:
    """Collapse report inspections into one labeled instance per block.

    A block is labeled 1 when any report-driven inspection in
    ``[window_start, window_start + window_len)`` found burrows. Field
    records are ignored. Features are filled from ``city`` when given.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    records = list(records)
    for rec in records:
        if rec.outcome is None:
            raise MissingOutcomeError(
                f"record has no coded outcome: block={rec.block} period={rec.period} "
                f"source={rec.source.value} note={rec.note!r}"
            )
    end = window_start + window_len
    labels: dict[int, int] = {}
    for rec in records:
        if rec.source is not Source.REPORT or not (window_start <= rec.period < end):
            continue
        labels[rec.block] = labels.get(rec.block, 0) | int(rec.outcome)
    out = []
    for block in sorted(labels):
        feats = tuple(city.block(block).features) if city is not None else ()
        out.append(LabeledInstance(block, window_start, window_len, feats, labels[block]))
    return out


def aggregate_windows(
    records: Sequence[ObservationRecord],
    starts: Iterable[PeriodIndex],
    window_len: int = DEFAULT_WINDOW_LEN,
    city: City | None = None,
) -> list[LabeledInstance]:
    """Instances for every window start in ``starts``, in canonical order."""
    by_period: dict[int, list[ObservationRecord]] = {}
    for rec in records:
        by_period.setdefault(rec.period, []).append(rec)
    out: list[LabeledInstance] = []
    for s in starts:
        window = [r for p in range(s, s + window_len) for r in by_period.get(p, ())]
        out.extend(aggregate_outcomes(window, s, window_len, city))
    out.sort(key=lambda inst: (inst.block, inst.window_start))
    return out


def build_training_matrix(instances: Sequence[LabeledInstance], city: City) -> tuple[np.ndarray, np.ndarray]:
    """Stack instances into ``(X, y)`` sorted by ``(block, window_start)``."""
    ordered = sorted(instances, key=lambda inst: (inst.block, inst.window_start))
    for inst in ordered:
        if inst.block not in city:
            raise UnknownBlockError(f"unknown block id {inst.block}")
    idx = np.fromiter((inst.block for inst in ordered), dtype=np.int64, count=len(ordered))
    X = city.features[idx].copy()
    y = np.fromiter((inst.label for inst in ordered), dtype=np.int64, count=len(ordered))
    return X, y


# ---------------------------------------------------------------------------
# files


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` next to ``path`` and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def records_to_csv(records: Iterable[ObservationRecord]) -> str:
    rows = (
        (
            r.block,
            r.period,
            r.source.value,
            r.note or "",
            "" if r.outcome is None else int(r.outcome),
        )
        for r in records
    )
    return csv_text(RECORD_COLUMNS, rows)


def write_records(path: str | os.PathLike, records: Iterable[ObservationRecord]) -> None:
    atomic_write_text(path, records_to_csv(records))


def parse_records(text: str) -> list[ObservationRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != RECORD_COLUMNS:
        raise FieldcheckError(f"record CSV header must be {','.join(RECORD_COLUMNS)}; got {reader.fieldnames}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            source = Source(row["source"].strip().lower())
            outcome_text = row["outcome"].strip()
            outcome = None if outcome_text == "" else int(outcome_text)
            if outcome not in (None, 0, 1):
                raise ValueError(f"outcome must be 0, 1 or empty, got {outcome_text!r}")
            out.append(
                ObservationRecord(
                    block=int(row["block_id"]),
                    period=int(row["period"]),
                    source=source,
                    note=row["note"] or None,
                    outcome=outcome,
                )
            )
        except ValueError as exc:
            raise FieldcheckError(f"line {lineno}: {exc}") from exc
    return out


def read_records(path: str | os.PathLike) -> list[ObservationRecord]:
    return parse_records(Path(path).read_text(encoding="utf-8"))


PREDICTION_COLUMNS = ("block_id", "window_start", "predicted_prob")


def predictions_to_csv(predictions: PredictionSet) -> str:
    rows = ((b, predictions.window_start, repr(float(p))) for b, p in sorted(predictions.entries.items()))
    return csv_text(PREDICTION_COLUMNS, rows)


def parse_predictions(text: str) -> PredictionSet:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != PREDICTION_COLUMNS:
        raise FieldcheckError(f"prediction CSV header must be {','.join(PREDICTION_COLUMNS)}; got {reader.fieldnames}")
    entries: dict[int, float] = {}
    starts = set()
    for lineno, row in enumerate(reader, start=2):
        try:
            block = int(row["block_id"])
            starts.add(int(row["window_start"]))
            p = float(row["predicted_prob"])
        except ValueError as exc:
            raise FieldcheckError(f"line {lineno}: {exc}") from exc
        if block in entries:
            raise FieldcheckError(f"line {lineno}: duplicate block {block}")
        entries[block] = p
    if len(starts) > 1:
        raise FieldcheckError(f"prediction file mixes window starts {sorted(starts)}")
    try:
        return PredictionSet(starts.pop() if starts else 0, entries)
    except ValueError as exc:
        raise FieldcheckError(str(exc)) from exc
