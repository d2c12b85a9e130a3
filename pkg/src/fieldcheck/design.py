"""Field assessment design: Beta-Bernoulli comparison, power and sample selection."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc, betaln

from .core import FieldcheckError, ObservationRecord, PredictionSet, Source, csv_text, make_rng
from .eval import DECILE_EDGES, DecileTable, InsufficientDataError, calibration_slope, decile_index, decile_table

POWER_CHUNK = 256


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def is_integer(self) -> bool:
        return float(self.alpha).is_integer() and float(self.beta).is_integer()

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


UNIFORM_PRIOR = BetaPosterior(1.0, 1.0)


def posterior_update(prior: BetaPosterior, successes: int, failures: int) -> BetaPosterior:
    if successes < 0 or failures < 0:
        raise ValueError(f"counts must be non-negative, got successes={successes} failures={failures}")
    return BetaPosterior(prior.alpha + successes, prior.beta + failures)


class Method(str, enum.Enum):
    EXACT = "exact"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "montecarlo"


@lru_cache(maxsize=65536)
def _exact(a1: int, b1: int, a2: int, b2: int) -> float:
    # Pr(p2 > p1) = sum_{i<a2} B(a1+i, b1+b2) / ((b2+i) B(1+i, b2) B(a1, b1))
    base = betaln(a1, b1)
    terms = [
        math.exp(betaln(a1 + i, b1 + b2) - math.log(b2 + i) - betaln(1 + i, b2) - base) for i in range(a2)
    ]
    return min(1.0, max(0.0, math.fsum(terms)))


def _quadrature(post1: BetaPosterior, post2: BetaPosterior) -> float:
    # adaptive Gauss-Kronrod; its extrapolation copes with the integrable
    # endpoint singularities of fractional parameters below one
    log_norm = betaln(post2.alpha, post2.beta)

    def integrand(y: float) -> float:
        if y <= 0.0 or y >= 1.0:
            return 0.0
        log_pdf = (post2.alpha - 1) * math.log(y) + (post2.beta - 1) * math.log1p(-y) - log_norm
        return float(betainc(post1.alpha, post1.beta, y)) * math.exp(log_pdf)

    val, _ = quad(integrand, 0.0, 1.0, points=[post2.mean], epsabs=1e-13, epsrel=1e-11, limit=500)
    return min(1.0, max(0.0, val))


def prob_less_mc(
    post1: BetaPosterior, post2: BetaPosterior, draws: int = 200_000, seed: int = 0
) -> tuple[float, float]:
    """Paired-draw estimate of Pr(p1 < p2) and its binomial standard error."""
    rng = make_rng(seed, "prob-less-mc")
    p1 = rng.beta(post1.alpha, post1.beta, draws)
    p2 = rng.beta(post2.alpha, post2.beta, draws)
    est = float(np.mean(p1 < p2))
    return est, math.sqrt(est * (1 - est) / draws)


def prob_less(
    post1: BetaPosterior,
    post2: BetaPosterior,
    method: Method | str = Method.EXACT,
    *,
    draws: int = 200_000,
    seed: int = 0,
) -> float:
    """Posterior probability that rate 1 is below rate 2 (independent posteriors)."""
    method = Method(method)
    if method is Method.EXACT:
        if not (post1.is_integer and post2.is_integer):
            raise ValueError("the exact sum needs integer Beta parameters; use method='quadrature'")
        return _exact(int(post1.alpha), int(post1.beta), int(post2.alpha), int(post2.beta))
    if method is Method.QUADRATURE:
        return _quadrature(post1, post2)
    return prob_less_mc(post1, post2, draws, seed)[0]


# ---------------------------------------------------------------------------
# power


@dataclass(frozen=True)
class PowerConfig:
    n_per_group: int = 25
    range1: tuple[float, float] = (0.5, 0.6)
    range2: tuple[float, float] = (0.8, 0.9)
    decision_threshold: float = 0.95
    outer_reps: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "range1", tuple(float(v) for v in self.range1))
        object.__setattr__(self, "range2", tuple(float(v) for v in self.range2))
        for name in ("range1", "range2"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
        if not (0.0 < self.decision_threshold < 1.0):
            raise ValueError("decision_threshold must lie in (0, 1)")
        if self.n_per_group < 1:
            raise ValueError("n_per_group must be >= 1")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["range1"] = list(self.range1)
        doc["range2"] = list(self.range2)
        return doc


@dataclass(frozen=True)
class PowerResult:
    power: float
    mc_stderr: float | None
    reps: int
    config: PowerConfig

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "mc_stderr": self.mc_stderr,
            "stderr_defined": self.mc_stderr is not None,
            "reps": self.reps,
            "config": self.config.to_dict(),
        }


def _power_chunk(config: PowerConfig, chunk: int, size: int) -> np.ndarray:
    rng = make_rng(config.seed, "power", chunk)
    n = config.n_per_group
    p1 = rng.uniform(*config.range1, size=(size, n))
    p2 = rng.uniform(*config.range2, size=(size, n))
    x1 = (rng.random((size, n)) < p1).sum(axis=1)
    x2 = (rng.random((size, n)) < p2).sum(axis=1)
    return np.array(
        [_exact(1 + int(s1), 1 + n - int(s1), 1 + int(s2), 1 + n - int(s2)) > config.decision_threshold
         for s1, s2 in zip(x1, x2)]
    )


def power_simulation(config: PowerConfig, workers: int = 1) -> PowerResult:
    """Monte Carlo power of the Pr(p1 < p2) > threshold decision.

    Each replicate draws a true rate per location from the two ranges,
    counts Bernoulli successes, updates Beta(1, 1) priors and records
    whether the posterior comparison clears the threshold.
    """
    if config.outer_reps < 1:
        raise ValueError("outer_reps must be >= 1")
    sizes = [min(POWER_CHUNK, config.outer_reps - start) for start in range(0, config.outer_reps, POWER_CHUNK)]
    jobs = list(enumerate(sizes))
    if workers <= 1:
        parts = [_power_chunk(config, c, s) for c, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _power_chunk(config, *job), jobs))
    hits = np.concatenate(parts)
    power = float(hits.mean())
    stderr = math.sqrt(power * (1 - power) / len(hits)) if len(hits) > 1 else None
    return PowerResult(power, stderr, len(hits), config)


# ---------------------------------------------------------------------------
# field sample


class EligibilityError(FieldcheckError, ValueError):
    pass


@dataclass(frozen=True)
class BinAllocation:
    lower: float
    upper: float
    eligible: int
    target: int
    selected: int


@dataclass(frozen=True)
class FieldSample:
    blocks: tuple[int, ...]
    probabilities: tuple[float, ...]
    bins: tuple[int, ...]
    allocation: tuple[BinAllocation, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.blocks)

    def to_csv(self) -> str:
        rows = ((b, repr(p), k) for b, p, k in zip(self.blocks, self.probabilities, self.bins))
        return csv_text(("block_id", "predicted_prob", "bin"), rows)


def _eligible_bins(lo: float, hi: float) -> list[int]:
    return [k for k in range(10) if DECILE_EDGES[k] < hi and DECILE_EDGES[k + 1] > lo]


def _allocate(eligible: list[int], n: int) -> tuple[list[int], list[int]]:
    k = len(eligible)
    targets = [n // k + (1 if i < n % k else 0) for i in range(k)]
    alloc = [min(t, e) for t, e in zip(targets, eligible)]
    deficit = n - sum(alloc)
    while deficit > 0:
        spare = [e - a for e, a in zip(eligible, alloc)]
        total = sum(spare)
        if total == 0:
            break
        if deficit >= total:
            alloc = list(eligible)
            break
        shares = [deficit * s / total for s in spare]
        add = [math.floor(s) for s in shares]
        leftover = deficit - sum(add)
        order = sorted(range(k), key=lambda i: (-(shares[i] - add[i]), i))
        for i in order:
            if leftover == 0:
                break
            if add[i] < spare[i]:
                add[i] += 1
                leftover -= 1
        alloc = [a + min(x, s) for a, x, s in zip(alloc, add, spare)]
        deficit = n - sum(alloc)
    return targets, alloc


def select_field_sample(
    predictions: PredictionSet,
    n: int,
    prob_range: tuple[float, float] = (0.5, 0.9),
    seed: int = 0,
    allow_short: bool = False,
) -> FieldSample:
    """Stratified draw of ``n`` blocks with predicted probability in ``(lo, hi]``.

    Each decile bin touching the range gets an equal share; bins that run
    short hand their remainder to the others in proportion to the eligible
    blocks they still have. Within a bin the draw is uniform without
    replacement.
    """
    lo, hi = prob_range
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError(f"range must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    if n < 1:
        raise ValueError("n must be >= 1")
    bins = _eligible_bins(lo, hi)
    members: dict[int, list[int]] = {k: [] for k in bins}
    for b in sorted(predictions.entries):
        p = predictions.entries[b]
        if lo < p <= hi:
            members[int(decile_index(p))].append(b)
    eligible = [len(members[k]) for k in bins]
    if sum(eligible) < n and not allow_short:
        detail = ", ".join(
            f"({DECILE_EDGES[k]:.1f}, {DECILE_EDGES[k + 1]:.1f}]: {e}" for k, e in zip(bins, eligible)
        )
        raise EligibilityError(f"only {sum(eligible)} eligible blocks for a sample of {n}; per bin {detail}")
    targets, alloc = _allocate(eligible, min(n, sum(eligible)))

    blocks, probs, bin_ids, record = [], [], [], []
    for k, e, t, a in zip(bins, eligible, targets, alloc):
        pool = members[k]
        rng = make_rng(seed, "field-sample", k)
        picked = sorted(pool[i] for i in rng.choice(len(pool), size=a, replace=False)) if a else []
        blocks.extend(picked)
        probs.extend(predictions.entries[b] for b in picked)
        bin_ids.extend([k] * len(picked))
        record.append(BinAllocation(DECILE_EDGES[k], DECILE_EDGES[k + 1], e, t, a))
    return FieldSample(tuple(blocks), tuple(probs), tuple(bin_ids), tuple(record))


def parse_field_sample(text: str) -> FieldSample:
    rows = list(csv.DictReader(io.StringIO(text)))
    return FieldSample(
        tuple(int(r["block_id"]) for r in rows),
        tuple(float(r["predicted_prob"]) for r in rows),
        tuple(int(r["bin"]) for r in rows),
    )


# ---------------------------------------------------------------------------
# field comparison


@dataclass(frozen=True)
class FieldComparison:
    decile: DecileTable
    overall_rate: float
    slope: float | None
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "overall_rate": self.overall_rate,
            "slope": self.slope,
            "slope_defined": self.slope is not None,
            "decile": self.decile.to_dict(),
        }


def outcomes_by_block(records: Sequence[ObservationRecord]) -> dict[int, int]:
    out: dict[int, int] = {}
    for r in records:
        out[r.block] = out.get(r.block, 0) | int(r.outcome)
    return out


def compare_field(predictions: PredictionSet, field_records: Sequence[ObservationRecord]) -> FieldComparison:
    if not field_records:
        raise FieldcheckError("no field records to compare")
    wrong_source = [r for r in field_records if r.source is not Source.FIELD]
    if wrong_source:
        raise FieldcheckError(f"{len(wrong_source)} record(s) are not field inspections, e.g. block {wrong_source[0].block}")
    missing = sorted({r.block for r in field_records if r.outcome is None})
    if missing:
        raise FieldcheckError(f"field records without outcomes for blocks {missing}")
    unknown = sorted({r.block for r in field_records if r.block not in predictions.entries})
    if unknown:
        raise FieldcheckError(f"field records for blocks without predictions: {unknown}")
    outcomes = outcomes_by_block(field_records)
    table = decile_table(predictions, outcomes)
    try:
        slope = calibration_slope(table)
    except InsufficientDataError:
        slope = None
    return FieldComparison(table, sum(outcomes.values()) / len(outcomes), slope, len(outcomes))
