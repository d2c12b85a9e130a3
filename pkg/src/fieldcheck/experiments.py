"""End-to-end runs on the synthetic city: report holdout versus field assessment."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DEFAULT_WINDOW_LEN, City, ObservationRecord, aggregate_outcomes, aggregate_windows, build_training_matrix, derive_seed
from .design import FieldComparison, FieldSample, compare_field, select_field_sample
from .eval import CVReport, DecileTable, calibration_slope, decile_table, predict_city, temporal_cv
from .models import ClassifierSpec, Family, ForestParams, TrainedModel, train
from .synthcity import CityConfig, field_inspect, generate_city, simulate

DEMO_PERIODS = 24


@dataclass(frozen=True)
class SyntheticRun:
    city: City
    records: list[ObservationRecord]
    n_periods: int


def synthesize(config: CityConfig, seed: int, n_periods: int) -> SyntheticRun:
    city = generate_city(config, seed)
    records = [r for t in simulate(city, n_periods, seed) for r in t.records]
    return SyntheticRun(city, records, n_periods)


def fit_final(
    records: list[ObservationRecord], city: City, spec: ClassifierSpec, train_end: int, window_len: int = DEFAULT_WINDOW_LEN
) -> TrainedModel:
    """Train on every block-window that closes by ``train_end``."""
    first = min(r.period for r in records)
    instances = aggregate_windows(records, range(first, train_end - window_len + 1), window_len)
    X, y = build_training_matrix(instances, city)
    return train(spec, X, y)


@dataclass(frozen=True)
class GapResult:
    cv: CVReport | None
    holdout: DecileTable
    holdout_slope: float
    holdout_n: int
    field: FieldComparison
    sample: FieldSample


# smoother than the library default; leaves of 50 keep the 100-block field
# sample from chasing single-window noise
DEMO_FOREST = ForestParams(n_trees=100, max_depth=8, min_leaf=50)


def default_forest(seed: int, workers: int = 1, params: ForestParams = DEMO_FOREST) -> ClassifierSpec:
    return ClassifierSpec(Family.RANDOM_FOREST, params, seed, workers)


def calibration_gap(
    config: CityConfig,
    seed: int,
    spec: ClassifierSpec | None = None,
    n_periods: int = DEMO_PERIODS,
    horizon: int = 3,
    cv_folds: int = 4,
    field_n: int = 100,
    field_range: tuple[float, float] = (0.5, 0.9),
    window_len: int = DEFAULT_WINDOW_LEN,
) -> GapResult:
    """Train on report data, then score new reports and a designed field sample.

    Periods ``[0, n_periods)`` are history. A temporal CV runs over the last
    ``cv_folds`` feasible months, the final model is trained on all history
    and evaluated on reports in ``[n_periods, n_periods + horizon)`` and on
    ``field_n`` blocks inspected at ``n_periods``.
    """
    spec = spec or default_forest(seed)
    run = synthesize(config, seed, n_periods + horizon)
    history = [r for r in run.records if r.period < n_periods]
    cv = None
    if cv_folds > 0:
        last = n_periods - horizon
        cv = temporal_cv(history, run.city, spec, last - cv_folds + 1, last, horizon, window_len=window_len)
    model = fit_final(history, run.city, spec, n_periods, window_len)
    preds = predict_city(model, run.city, n_periods)

    holdout = {inst.block: inst.label for inst in aggregate_outcomes(run.records, n_periods, horizon)}
    table = decile_table(preds, holdout)
    sample = select_field_sample(preds, field_n, field_range, derive_seed(seed, "field-sample"))
    field_records = field_inspect(run.city, sample.blocks, n_periods, seed)
    return GapResult(cv, table, calibration_slope(table), len(holdout), compare_field(preds, field_records), sample)
