"""Ranking and calibration metrics and the temporal cross-validation harness."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import (
    DEFAULT_WINDOW_LEN,
    City,
    FieldcheckError,
    ObservationRecord,
    PredictionSet,
    aggregate_outcomes,
    aggregate_windows,
    build_training_matrix,
    csv_text,
    derive_seed,
)
from .models import ClassifierSpec, predict_proba, train

DECILE_EDGES = tuple(k / 10 for k in range(11))
ERROR_EDGES = tuple(k / 10 for k in range(-10, 11))


class InsufficientDataError(FieldcheckError, ValueError):
    pass


# ---------------------------------------------------------------------------
# ranking metrics


def _scored(predictions: PredictionSet, outcomes: Mapping[int, int]) -> list[tuple[int, float, int]]:
    return [(b, p, int(outcomes[b])) for b, p in predictions.entries.items() if b in outcomes]


def top_n(predictions: PredictionSet, outcomes: Mapping[int, int], n: int) -> list[tuple[int, float, int]]:
    """Highest-probability blocks that have outcomes; ties go to the lower block id."""
    ranked = sorted(_scored(predictions, outcomes), key=lambda t: (-t[1], t[0]))
    return ranked[:n]


def precision_at_n(
    predictions: PredictionSet,
    outcomes: Mapping[int, int],
    n: int,
    allow_short: bool = False,
) -> float:
    """Share of the ``n`` top-ranked blocks where burrows were found.

    With ``allow_short`` a shortfall uses every available block; the
    effective n is ``min(n, len(scored blocks))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    top = top_n(predictions, outcomes, n)
    if len(top) < n and not allow_short:
        raise InsufficientDataError(f"only {len(top)} scored blocks have outcomes; P@{n} needs {n}")
    if not top:
        raise InsufficientDataError("no scored block has an outcome")
    return sum(o for _, _, o in top) / len(top)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + P(tie) / 2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when only one class is present")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class DecileBin:
    lower: float
    upper: float
    count: int
    found: int

    @property
    def rate(self) -> float | None:
        return self.found / self.count if self.count else None

    @property
    def midpoint(self) -> float:
        return (self.lower + self.upper) / 2


@dataclass(frozen=True)
class DecileTable:
    """Found rates in fixed bins ``(k/10, (k+1)/10]``; 0.0 falls in the first bin."""

    bins: tuple[DecileBin, ...]

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)

    @property
    def empty_bins(self) -> list[int]:
        return [i for i, b in enumerate(self.bins) if b.count == 0]

    def bin(self, lower: float) -> DecileBin:
        for b in self.bins:
            if abs(b.lower - lower) < 1e-12:
                return b
        raise KeyError(lower)

    def to_dict(self) -> dict:
        return {
            "bins": [
                {
                    "lower": b.lower,
                    "upper": b.upper,
                    "count": b.count,
                    "found": b.found,
                    "rate": b.rate,
                    "empty": b.count == 0,
                }
                for b in self.bins
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DecileTable":
        return cls(tuple(DecileBin(b["lower"], b["upper"], b["count"], b["found"]) for b in doc["bins"]))

    def to_csv(self) -> str:
        rows = (
            (b.lower, b.upper, b.count, b.found, "" if b.rate is None else repr(b.rate)) for b in self.bins
        )
        return csv_text(("lower", "upper", "count", "found", "rate"), rows)


def decile_index(p: np.ndarray | float) -> np.ndarray:
    idx = np.searchsorted(DECILE_EDGES, p, side="left") - 1
    return np.clip(idx, 0, len(DECILE_EDGES) - 2)


def decile_table(predictions: PredictionSet, outcomes: Mapping[int, int]) -> DecileTable:
    scored = _scored(predictions, outcomes)
    counts = np.zeros(10, dtype=np.int64)
    found = np.zeros(10, dtype=np.int64)
    if scored:
        probs = np.array([p for _, p, _ in scored])
        outs = np.array([o for _, _, o in scored])
        idx = decile_index(probs)
        np.add.at(counts, idx, 1)
        np.add.at(found, idx, outs)
    bins = tuple(
        DecileBin(DECILE_EDGES[k], DECILE_EDGES[k + 1], int(counts[k]), int(found[k])) for k in range(10)
    )
    return DecileTable(bins)


def calibration_slope(table: DecileTable) -> float:
    """Count-weighted least-squares slope of found rate against bin midpoint."""
    used = [b for b in table.bins if b.count > 0]
    if len(used) < 2:
        raise InsufficientDataError(f"calibration slope needs two non-empty bins, have {len(used)}")
    x = np.array([b.midpoint for b in used])
    y = np.array([b.rate for b in used])
    w = np.array([b.count for b in used], dtype=np.float64)
    xm = np.dot(w, x) / w.sum()
    ym = np.dot(w, y) / w.sum()
    return float(np.dot(w, (x - xm) * (y - ym)) / np.dot(w, (x - xm) ** 2))


# ---------------------------------------------------------------------------
# temporal cross-validation


@dataclass(frozen=True)
class Fold:
    train_end: int
    p_at_n: float
    effective_n: int
    roc_auc: float | None
    decile: DecileTable
    n_train: int
    n_test: int
    train_last_window_end: int
    test_window: tuple[int, int]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "train_end": self.train_end,
            "p_at_n": self.p_at_n,
            "effective_n": self.effective_n,
            "roc_auc": self.roc_auc,
            "decile": self.decile.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_last_window_end": self.train_last_window_end,
            "test_window": list(self.test_window),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Fold":
        return cls(
            doc["train_end"],
            doc["p_at_n"],
            doc["effective_n"],
            doc["roc_auc"],
            DecileTable.from_dict(doc["decile"]),
            doc["n_train"],
            doc["n_test"],
            doc["train_last_window_end"],
            tuple(doc["test_window"]),
            tuple(doc["flags"]),
        )


@dataclass(frozen=True)
class CVReport:
    folds: tuple[Fold, ...]
    n: int
    horizon: int
    window_len: int
    spec: dict = field(default_factory=dict)

    @property
    def p_at_n(self) -> list[float]:
        return [f.p_at_n for f in self.folds]

    @property
    def mean_p_at_n(self) -> float:
        return float(np.mean(self.p_at_n))

    @property
    def min_p_at_n(self) -> float:
        return float(np.min(self.p_at_n))

    @property
    def max_p_at_n(self) -> float:
        return float(np.max(self.p_at_n))

    @property
    def mean_auc(self) -> float | None:
        aucs = [f.roc_auc for f in self.folds if f.roc_auc is not None]
        return float(np.mean(aucs)) if aucs else None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "horizon": self.horizon,
            "window_len": self.window_len,
            "spec": self.spec,
            "aggregate": {
                "mean_p_at_n": self.mean_p_at_n,
                "min_p_at_n": self.min_p_at_n,
                "max_p_at_n": self.max_p_at_n,
                "mean_roc_auc": self.mean_auc,
                "auc_folds": sum(f.roc_auc is not None for f in self.folds),
                "flagged_folds": [f.train_end for f in self.folds if f.flags],
            },
            "folds": [f.to_dict() for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "CVReport":
        folds = tuple(Fold.from_dict(f) for f in doc["folds"])
        return cls(folds, doc["n"], doc["horizon"], doc["window_len"], doc.get("spec", {}))

    @classmethod
    def from_json(cls, text: str) -> "CVReport":
        return cls.from_dict(json.loads(text))


def earliest_eval_start(records: Sequence[ObservationRecord], window_len: int = DEFAULT_WINDOW_LEN) -> int:
    first = min((r.period for r in records), default=0)
    return first + window_len


def predict_city(model, city: City, window_start: int) -> PredictionSet:
    probs = predict_proba(model, city.features)
    return PredictionSet.from_arrays(window_start, range(city.n_blocks), probs)


def temporal_cv(
    records: Sequence[ObservationRecord],
    city: City,
    spec: ClassifierSpec,
    eval_start: int,
    eval_end: int,
    horizon: int = 3,
    n: int = 100,
    window_len: int = DEFAULT_WINDOW_LEN,
) -> CVReport:
    """One fold per month ``m`` in ``[eval_start, eval_end]``.

    Each fold trains on every block-window that closes by ``m`` and scores
    the report outcomes in ``[m, m + horizon)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if eval_end < eval_start:
        raise ValueError("eval_end precedes eval_start")
    first = min((r.period for r in records), default=0)
    earliest = first + window_len
    if eval_start < earliest:
        raise InsufficientDataError(
            f"eval_start {eval_start} leaves no complete training window; earliest feasible eval_start is {earliest}"
        )
    instances = aggregate_windows(records, range(first, eval_end - window_len + 1), window_len)

    folds = []
    for m in range(eval_start, eval_end + 1):
        train_set = [inst for inst in instances if inst.window_start + window_len <= m]
        if not train_set:
            raise InsufficientDataError(f"fold {m} has no training instances")
        X, y = build_training_matrix(train_set, city)
        fold_spec = replace(spec, seed=derive_seed(spec.seed, "fold", m))
        model = train(fold_spec, X, y)
        preds = predict_city(model, city, m)
        test = aggregate_outcomes(records, m, horizon)
        outcomes = {inst.block: inst.label for inst in test}
        flags = []
        if not outcomes:
            raise InsufficientDataError(f"fold {m} has no report outcomes in [{m}, {m + horizon})")
        eff_n = min(n, len(outcomes))
        if eff_n < n:
            flags.append(f"short: only {eff_n} scored blocks with outcomes")
        pan = precision_at_n(preds, outcomes, n, allow_short=True)
        labels = [outcomes[b] for b in sorted(outcomes)]
        auc = None
        if len(set(labels)) == 2:
            auc = roc_auc([preds.entries[b] for b in sorted(outcomes)], labels)
        else:
            flags.append("auc undefined: single-class test outcomes")
        folds.append(
            Fold(
                train_end=m,
                p_at_n=pan,
                effective_n=eff_n,
                roc_auc=auc,
                decile=decile_table(preds, outcomes),
                n_train=len(train_set),
                n_test=len(outcomes),
                train_last_window_end=max(inst.window_start + inst.window_len for inst in train_set),
                test_window=(m, m + horizon),
                flags=tuple(flags),
            )
        )
    return CVReport(tuple(folds), n, horizon, window_len, spec.to_dict())


# ---------------------------------------------------------------------------
# error analysis


class ErrorClass(str, enum.Enum):
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


@dataclass(frozen=True)
class ErrorRecord:
    block: int
    ward: int
    error: float
    cls: ErrorClass


@dataclass(frozen=True)
class ErrorAnalysis:
    records: tuple[ErrorRecord, ...]
    histograms: dict[int, list[int]]
    skewness: dict[int, float | None]
    edges: tuple[float, ...] = ERROR_EDGES

    def to_dict(self) -> dict:
        return {
            "edges": list(self.edges),
            "histograms": {str(w): h for w, h in sorted(self.histograms.items())},
            "skewness": {str(w): s for w, s in sorted(self.skewness.items())},
            "records": [
                {"block": r.block, "ward": r.ward, "error": r.error, "class": r.cls.value} for r in self.records
            ],
        }


def classify(outcome: int, p: float) -> ErrorClass:
    """Confusion class at threshold 0.5 (predicted positive iff p > 0.5).

    In error terms (outcome - p): below -0.5 is FP, [-0.5, 0) is TN,
    [0, 0.5) is TP and from 0.5 up is FN.
    """
    if outcome:
        return ErrorClass.TP if p > 0.5 else ErrorClass.FN
    return ErrorClass.FP if p > 0.5 else ErrorClass.TN


def skewness(values: Sequence[float]) -> float | None:
    """Fisher-Pearson g1 = m3 / m2^1.5; ``None`` for fewer than two points or zero spread."""
    x = np.asarray(values, dtype=np.float64)
    if len(x) < 2:
        return None
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        return None
    return float(np.mean(d**3) / m2**1.5)


def error_analysis(predictions: PredictionSet, outcomes: Mapping[int, int], city: City) -> ErrorAnalysis:
    missing = sorted(b for b in outcomes if b not in predictions.entries)
    if missing:
        raise FieldcheckError(f"outcomes for unscored blocks: {missing[:20]}")
    records = []
    for b in sorted(outcomes):
        ward = city.block(b).ward
        p = predictions.entries[b]
        o = int(outcomes[b])
        records.append(ErrorRecord(b, ward, o - p, classify(o, p)))
    by_ward: dict[int, list[float]] = {}
    for r in records:
        by_ward.setdefault(r.ward, []).append(r.error)
    hists = {w: np.histogram(errs, bins=ERROR_EDGES)[0].astype(int).tolist() for w, errs in sorted(by_ward.items())}
    skews = {w: skewness(errs) for w, errs in sorted(by_ward.items())}
    return ErrorAnalysis(tuple(records), hists, skews)
