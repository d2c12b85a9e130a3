"""Synthetic city with known infestation risk and a biased report process.

Report arrival
--------------
Each period every block is infested with probability ``true_risk``. An
infested block is reported with its ward's propensity; a clean block
produces a nuisance report with probability
``false_request_rate * mean(ward_propensity)``. Nuisance calls therefore
arrive at the same rate everywhere, while genuine sightings are reported
more often in high-propensity wards. With ``bias_strength == 0`` every
ward has propensity ``report_base_rate`` and the two rules coincide.

Because propensity enters only the infested branch, the find rate among
reports depends on the ward, and the ward is visible to a model only
through the ward-level share of the block features. That is the lever
that makes report-trained models look calibrated on new reports while
drifting away from the field truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Block,
    City,
    FieldcheckError,
    ObservationRecord,
    Source,
    csv_text,
    make_rng,
)

POSITIVE_NOTES = (
    "Found {n} active burrows along fence line, baited",
    "Rat burrows observed in rear alley; treated with rodenticide and closed",
    "Multiple burrows under shed. Baited {n} holes",
    "Active burrows next to trash cans, baited and packed with dirt",
    "{n} rat holes found in tree box, treated",
)
NEGATIVE_NOTES = (
    "No burrows found on property",
    "Inspected alley and yard, no rodent activity observed",
    "No evidence of rats. Advised resident on trash storage",
    "Did not find any burrows; left door hanger",
    "Property clean, no sign of rodents",
)


@dataclass(frozen=True)
class CityConfig:
    n_blocks: int = 2000
    n_wards: int = 8
    n_features: int = 6
    risk_weights: tuple[float, ...] = (0.0,) * 6
    risk_intercept: float = 0.0
    report_base_rate: float = 0.05
    bias_strength: float = 0.0
    detection_prob: float = 1.0
    false_request_rate: float = 0.0
    # share of feature 0's variance common to the whole ward (0: i.i.d.
    # standard normal features); feature 0 is the one that drives propensity
    ward_feature_share: float = 0.0
    # extra risk terms (i, j, weight) adding weight * x_i * x_j to the logit
    risk_interactions: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "risk_weights", tuple(float(w) for w in self.risk_weights))
        object.__setattr__(
            self, "risk_interactions", tuple((int(i), int(j), float(w)) for i, j, w in self.risk_interactions)
        )
        if self.n_blocks < 1:
            raise FieldcheckError("n_blocks must be at least 1")
        if not (1 <= self.n_wards <= self.n_blocks):
            raise FieldcheckError("need 1 <= n_wards <= n_blocks")
        if self.n_features < 1:
            raise FieldcheckError("n_features must be at least 1")
        if len(self.risk_weights) != self.n_features:
            raise FieldcheckError(f"risk_weights has length {len(self.risk_weights)}, expected {self.n_features}")
        for name in ("report_base_rate", "false_request_rate", "ward_feature_share"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise FieldcheckError(f"{name} must lie in [0, 1], got {v}")
        if not (0.0 < self.detection_prob <= 1.0):
            raise FieldcheckError(f"detection_prob must lie in (0, 1], got {self.detection_prob}")
        if self.bias_strength < 0:
            raise FieldcheckError("bias_strength must be non-negative")
        for i, j, _ in self.risk_interactions:
            if not (0 <= i < self.n_features and 0 <= j < self.n_features):
                raise FieldcheckError(f"interaction ({i}, {j}) references a missing feature")

    def replace(self, **changes) -> "CityConfig":
        doc = asdict(self)
        doc.update(changes)
        return CityConfig(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["risk_weights"] = list(self.risk_weights)
        doc["risk_interactions"] = [list(t) for t in self.risk_interactions]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CityConfig":
        doc = dict(doc)
        if "risk_interactions" in doc:
            doc["risk_interactions"] = tuple(tuple(t) for t in doc["risk_interactions"])
        return cls(**doc)


def demo_config(bias_strength: float = 1.0) -> CityConfig:
    """The frozen demonstration city used by the acceptance experiments.

    Feature 0 carries most of the ward signal and lowers risk, so wards that
    report a lot are not the wards with the most rats.
    """
    return CityConfig(
        n_blocks=3000,
        n_wards=20,
        n_features=6,
        risk_weights=(-0.9, 0.3, -0.3, 0.3, 0.0, 0.0),
        risk_intercept=0.0,
        report_base_rate=0.3,
        bias_strength=bias_strength,
        detection_prob=0.9,
        false_request_rate=1.0,
        ward_feature_share=0.9,
    )


def nonlinear_config() -> CityConfig:
    """Demo city whose risk surface carries interaction terms a linear model cannot fit."""
    return demo_config(bias_strength=0.0).replace(
        risk_weights=(0.3, 0.4, 0.0, 0.0, 0.0, 0.0),
        risk_interactions=((2, 3, 1.6), (4, 4, -0.9), (5, 5, 0.9)),
        ward_feature_share=0.0,
    )


@dataclass(frozen=True)
class PeriodTruth:
    period: int
    infested: dict[int, int]
    records: list[ObservationRecord] = field(default_factory=list)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate_city(config: CityConfig, seed: int) -> City:
    rng = make_rng(seed, "city")
    n, k = config.n_blocks, config.n_features
    wards = rng.permutation(np.arange(n) % config.n_wards)
    ward_latent = rng.standard_normal(config.n_wards)
    feats = rng.standard_normal((n, k))
    s = config.ward_feature_share
    feats[:, 0] = math.sqrt(s) * ward_latent[wards] + math.sqrt(1.0 - s) * feats[:, 0]

    ward_mean = np.array([feats[wards == w, 0].mean() for w in range(config.n_wards)])
    spread = ward_mean.std()
    z = (ward_mean - ward_mean.mean()) / spread if spread > 0 else np.zeros_like(ward_mean)
    prop = config.report_base_rate * np.exp(config.bias_strength * z)
    if prop.max() > 1.0:
        prop = prop / prop.max()

    blocks = tuple(Block(i, int(wards[i]), tuple(float(v) for v in feats[i])) for i in range(n))
    return City(blocks, {w: float(prop[w]) for w in range(config.n_wards)}, config)


def risk_logits(city: City) -> np.ndarray:
    cfg: CityConfig = city.config
    X = city.features
    logit = cfg.risk_intercept + X @ np.asarray(cfg.risk_weights)
    for i, j, w in cfg.risk_interactions:
        logit = logit + w * X[:, i] * X[:, j]
    return logit


def true_risk_all(city: City) -> np.ndarray:
    return _sigmoid(risk_logits(city))


def true_risk(city: City, block: int) -> float:
    cfg: CityConfig = city.config
    x = city.block(block).features
    logit = cfg.risk_intercept + sum(w * v for w, v in zip(cfg.risk_weights, x))
    for i, j, w in cfg.risk_interactions:
        logit += w * x[i] * x[j]
    return float(_sigmoid(logit))


def _infested(city: City, period: int, seed: int) -> np.ndarray:
    u = make_rng(seed, "infest", period).random(city.n_blocks)
    return u < true_risk_all(city)


def _detected(city: City, period: int, seed: int, purpose: str) -> np.ndarray:
    return make_rng(seed, purpose, period).random(city.n_blocks) < city.config.detection_prob


def _note(rng: np.random.Generator, positive: bool) -> str:
    pool = POSITIVE_NOTES if positive else NEGATIVE_NOTES
    template = pool[int(rng.integers(len(pool)))]
    return template.format(n=int(rng.integers(2, 9)))


def report_probabilities(city: City, infested: np.ndarray) -> np.ndarray:
    prop = np.array([city.ward_propensity[w] for w in range(len(city.ward_propensity))])
    ward_prop = prop[city.wards]
    nuisance = city.config.false_request_rate * prop.mean()
    return np.where(infested, ward_prop, nuisance)


def simulate_period(city: City, period: int, seed: int) -> PeriodTruth:
    infested = _infested(city, period, seed)
    arrive = make_rng(seed, "report", period).random(city.n_blocks) < report_probabilities(city, infested)
    found = infested & _detected(city, period, seed, "detect")
    note_rng = make_rng(seed, "notes", period)
    records = []
    for b in np.flatnonzero(arrive):
        outcome = int(found[b])
        records.append(ObservationRecord(int(b), period, Source.REPORT, _note(note_rng, bool(outcome)), outcome))
    return PeriodTruth(period, {i: int(v) for i, v in enumerate(infested)}, records)


def simulate(city: City, n_periods: int, seed: int, start: int = 0) -> list[PeriodTruth]:
    return [simulate_period(city, p, seed) for p in range(start, start + n_periods)]


def field_inspect(city: City, blocks: Sequence[int], period: int, seed: int) -> list[ObservationRecord]:
    """Inspect the given blocks regardless of whether anyone reported them."""
    blocks = [int(b) for b in blocks]
    if len(set(blocks)) != len(blocks):
        seen, dupes = set(), set()
        for b in blocks:
            (dupes if b in seen else seen).add(b)
        raise FieldcheckError(f"duplicate block ids in field inspection list: {sorted(dupes)}")
    for b in blocks:
        city.block(b)
    if not blocks:
        return []
    infested = _infested(city, period, seed)
    found = infested & _detected(city, period, seed, "field-detect")
    note_rng = make_rng(seed, "field-notes", period)
    out = []
    for b in blocks:
        outcome = int(found[b])
        out.append(ObservationRecord(b, period, Source.FIELD, _note(note_rng, bool(outcome)), outcome))
    return out


# ---------------------------------------------------------------------------
# serialization


def city_to_json(city: City) -> str:
    cfg = city.config
    doc = {
        "format": "fieldcheck.city",
        "version": 1,
        "config": cfg.to_dict() if isinstance(cfg, CityConfig) else cfg,
        "ward_propensity": {str(w): p for w, p in sorted(city.ward_propensity.items())},
        "blocks": [{"id": b.id, "ward": b.ward, "features": list(b.features)} for b in city.blocks],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def city_from_json(text: str) -> City:
    doc = json.loads(text)
    cfg = doc.get("config")
    if isinstance(cfg, dict) and "n_blocks" in cfg:
        cfg = CityConfig.from_dict(cfg)
    blocks = tuple(Block(int(b["id"]), int(b["ward"]), tuple(float(v) for v in b["features"])) for b in doc["blocks"])
    prop = {int(w): float(p) for w, p in doc["ward_propensity"].items()}
    return City(blocks, prop, cfg)


def truth_to_csv(truths: Sequence[PeriodTruth]) -> str:
    rows = ((b, t.period, v) for t in truths for b, v in sorted(t.infested.items()))
    return csv_text(("block_id", "period", "infested"), rows)
