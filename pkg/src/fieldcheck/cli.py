"""Command-line entry point.

Every stage reads a JSON run config (``--config``) whose values can be
overridden by flags, writes its outputs atomically under ``--out`` and
exits nonzero with a one-line message when an input contract fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .core import (
    DEFAULT_WINDOW_LEN,
    FieldcheckError,
    Source,
    aggregate_outcomes,
    atomic_write_text,
    derive_seed,
    parse_predictions,
    predictions_to_csv,
    read_records,
    records_to_csv,
)
from .design import (
    PowerConfig,
    compare_field,
    parse_field_sample,
    power_simulation,
    select_field_sample,
)
from .eval import (
    calibration_slope,
    decile_table,
    earliest_eval_start,
    error_analysis,
    InsufficientDataError,
    predict_city,
    temporal_cv,
)
from .experiments import fit_final
from .models import ClassifierSpec, Family, model_from_json, model_to_json
from .notes import RuleTable, UnmatchedPolicy, code_all
from .svg import decile_svg
from .synthcity import CityConfig, city_from_json, city_to_json, demo_config, field_inspect, generate_city, simulate, truth_to_csv


@dataclass
class RunConfig:
    """Settings shared by all subcommands; loaded from JSON, overridden by flags."""

    seed: int = 0
    out: str = "."
    workers: int = 1
    city: CityConfig = field(default_factory=demo_config)
    n_periods: int = 24
    model: ClassifierSpec = field(default_factory=lambda: ClassifierSpec(Family.RANDOM_FOREST))
    window_len: int = DEFAULT_WINDOW_LEN
    horizon: int = 3
    top_n: int = 100
    eval_start: int | None = None
    eval_end: int | None = None
    power: PowerConfig = field(default_factory=PowerConfig)
    field_n: int = 100
    field_range: tuple[float, float] = (0.5, 0.9)
    rules: str | None = None
    unmatched: str = UnmatchedPolicy.DROP.value
    paths: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise FieldcheckError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls()
        for key, value in doc.items():
            if key == "city":
                value = demo_config() if value == "demo" else CityConfig.from_dict(value)
            elif key == "model":
                value = ClassifierSpec.from_dict(value)
            elif key == "power":
                value = PowerConfig(**value)
            elif key == "field_range":
                value = tuple(float(v) for v in value)
            setattr(cfg, key, value)
        return cfg

    def path(self, key: str, flag: str | None = None) -> Path:
        value = flag if flag is not None else self.paths.get(key)
        if value is None:
            raise FieldcheckError(f"no path given for {key}; pass --{key.replace('_', '-')} or set paths.{key} in the config")
        return Path(value)

    def spec(self) -> ClassifierSpec:
        return ClassifierSpec(self.model.family, self.model.params, self.seed, self.workers)


def _dump(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_input(path: Path, what: str) -> str:
    if not path.is_file():
        raise FieldcheckError(f"{what} file not found: {path}")
    return path.read_text(encoding="utf-8")


def _load_city(cfg: RunConfig, flag: str | None):
    return city_from_json(_read_input(cfg.path("city", flag), "city"))


def _load_records(cfg: RunConfig, flag: str | None, key: str = "records"):
    path = cfg.path(key, flag)
    _read_input(path, key)
    return read_records(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig, args) -> dict:
    periods = cfg.n_periods if args.periods is None else args.periods
    if periods < 0:
        raise FieldcheckError("periods must be non-negative")
    city = generate_city(cfg.city, cfg.seed)
    truths = simulate(city, periods, cfg.seed)
    records = [r for t in truths for r in t.records]
    if args.strip_outcomes:
        records = [r.with_outcome(None) for r in records]
    out = Path(cfg.out)
    atomic_write_text(out / "city.json", city_to_json(city))
    atomic_write_text(out / "records.csv", records_to_csv(records))
    atomic_write_text(out / "truth.csv", truth_to_csv(truths))
    return {"periods": periods, "records": len(records), "blocks": city.n_blocks}


def cmd_code_notes(cfg: RunConfig, args) -> dict:
    records = _load_records(cfg, args.records)
    rules_path = args.rules or cfg.rules
    rules = RuleTable.load(rules_path) if rules_path else RuleTable.default()
    policy = UnmatchedPolicy(args.unmatched or cfg.unmatched)
    coded = code_all(records, rules, policy)
    pending = sum(r.outcome is None for r in records)
    atomic_write_text(Path(cfg.out) / "records_coded.csv", records_to_csv(coded))
    return {"records_in": len(records), "coded": pending, "records_out": len(coded), "policy": policy.value}


def cmd_train(cfg: RunConfig, args) -> dict:
    city = _load_city(cfg, args.city)
    records = _load_records(cfg, args.records)
    if not records:
        raise FieldcheckError("no records to train on")
    train_end = args.train_end if args.train_end is not None else max(r.period for r in records) + 1
    model = fit_final(records, city, cfg.spec(), train_end, cfg.window_len)
    atomic_write_text(Path(cfg.out) / "model.json", model_to_json(model))
    return {"train_end": train_end, "family": model.family.value}


def cmd_cv(cfg: RunConfig, args) -> dict:
    city = _load_city(cfg, args.city)
    records = _load_records(cfg, args.records)
    earliest = earliest_eval_start(records, cfg.window_len)
    last_period = max((r.period for r in records), default=-1)
    eval_start = args.eval_start if args.eval_start is not None else cfg.eval_start
    eval_end = args.eval_end if args.eval_end is not None else cfg.eval_end
    if eval_end is None:
        eval_end = last_period - cfg.horizon + 1
    if eval_start is None:
        eval_start = eval_end
    if eval_end < earliest or eval_start < earliest:
        raise InsufficientDataError(
            f"not enough periods for a fold at {min(eval_start, eval_end)}; earliest feasible eval_start is {earliest}"
        )
    report = temporal_cv(records, city, cfg.spec(), eval_start, eval_end, cfg.horizon, cfg.top_n, cfg.window_len)
    out = Path(cfg.out)
    wanted = set(args.svg_folds) if args.svg_folds else {f.train_end for f in report.folds}
    for fold in report.folds:
        if fold.train_end in wanted:
            svg = decile_svg(fold.decile, f"fold {fold.train_end}: reports [{fold.test_window[0]}, {fold.test_window[1]})")
            atomic_write_text(out / f"cv_fold_{fold.train_end:03d}.svg", svg)
    atomic_write_text(out / "cv_report.json", report.to_json())
    agg = report.to_dict()["aggregate"]
    return {"folds": len(report.folds), **agg}


def cmd_predict(cfg: RunConfig, args) -> dict:
    city = _load_city(cfg, args.city)
    model = model_from_json(_read_input(cfg.path("model", args.model), "model"))
    if args.window_start is None:
        raise FieldcheckError("predict needs --window-start")
    preds = predict_city(model, city, args.window_start)
    atomic_write_text(Path(cfg.out) / "predictions.csv", predictions_to_csv(preds))
    return {"blocks": len(preds), "window_start": preds.window_start}


def cmd_design(cfg: RunConfig, args) -> dict:
    doc = cfg.power.to_dict()
    overrides = {
        "n_per_group": args.n,
        "range1": args.range1,
        "range2": args.range2,
        "decision_threshold": args.threshold,
        "outer_reps": args.reps,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    doc["seed"] = derive_seed(cfg.seed, "design")
    result = power_simulation(PowerConfig(**doc), cfg.workers)
    atomic_write_text(Path(cfg.out) / "power.json", _dump(result.to_dict()))
    if result.mc_stderr is None:
        print(f"power = {result.power:.4f} (stderr undefined: {result.reps} replicate)")
    else:
        print(f"power = {result.power:.4f} +/- {result.mc_stderr:.4f} ({result.reps} replicates)")
    return result.to_dict()


def cmd_select(cfg: RunConfig, args) -> dict:
    preds = parse_predictions(_read_input(cfg.path("predictions", args.predictions), "predictions"))
    n = args.n if args.n is not None else cfg.field_n
    prob_range = tuple(args.range) if args.range else cfg.field_range
    sample = select_field_sample(preds, n, prob_range, derive_seed(cfg.seed, "field-sample"), allow_short=args.allow_short)
    out = Path(cfg.out)
    atomic_write_text(out / "field_sample.csv", sample.to_csv())
    alloc = [
        {"lower": a.lower, "upper": a.upper, "eligible": a.eligible, "target": a.target, "selected": a.selected}
        for a in sample.allocation
    ]
    atomic_write_text(out / "field_sample.json", _dump({"n": len(sample), "range": list(prob_range), "allocation": alloc}))
    return {"selected": len(sample), "requested": n}


def cmd_inspect(cfg: RunConfig, args) -> dict:
    city = _load_city(cfg, args.city)
    sample = parse_field_sample(_read_input(cfg.path("sample", args.sample), "field sample"))
    period = args.period if args.period is not None else cfg.n_periods
    records = field_inspect(city, sample.blocks, period, cfg.seed)
    atomic_write_text(Path(cfg.out) / "field_records.csv", records_to_csv(records))
    return {"inspected": len(records), "period": period}


def cmd_assess(cfg: RunConfig, args) -> dict:
    preds = parse_predictions(_read_input(cfg.path("predictions", args.predictions), "predictions"))
    field_records = _load_records(cfg, args.field_records, "field_records")
    field_records = [r for r in field_records if r.source is Source.FIELD]
    missing = sorted({r.block for r in field_records if r.outcome is None})
    if missing:
        raise FieldcheckError(f"field records without outcomes for blocks {missing}")
    field = compare_field(preds, field_records)
    out = Path(cfg.out)
    doc: dict[str, Any] = {"window_start": preds.window_start, "field": field.to_dict()}
    atomic_write_text(out / "field_decile.csv", field.decile.to_csv())
    atomic_write_text(out / "field_decile.svg", decile_svg(field.decile, "field assessment"))

    holdout_path = args.holdout_records or cfg.paths.get("holdout_records")
    if holdout_path:
        holdout_records = read_records(Path(holdout_path))
        instances = aggregate_outcomes(holdout_records, preds.window_start, cfg.horizon)
        outcomes = {inst.block: inst.label for inst in instances if inst.block in preds.entries}
        table = decile_table(preds, outcomes)
        try:
            slope = calibration_slope(table)
        except InsufficientDataError:
            slope = None
        rate = sum(outcomes.values()) / len(outcomes) if outcomes else None
        doc["holdout"] = {
            "n": len(outcomes),
            "overall_rate": rate,
            "slope": slope,
            "slope_defined": slope is not None,
            "decile": table.to_dict(),
        }
        atomic_write_text(out / "holdout_decile.csv", table.to_csv())
        atomic_write_text(out / "holdout_decile.svg", decile_svg(table, "new reports"))
        city_path = args.city or cfg.paths.get("city")
        if city_path and outcomes:
            city = city_from_json(_read_input(Path(city_path), "city"))
            doc["holdout_errors"] = error_analysis(preds, outcomes, city).to_dict()
    atomic_write_text(out / "assess.json", _dump(doc))
    summary = {"field_n": field.n, "field_rate": field.overall_rate, "field_slope": field.slope}
    if "holdout" in doc:
        summary.update(holdout_n=doc["holdout"]["n"], holdout_rate=doc["holdout"]["overall_rate"], holdout_slope=doc["holdout"]["slope"])
    return summary


# ---------------------------------------------------------------------------
# parser


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _global_flags(default: Any) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="JSON run config")
    common.add_argument("--seed", type=int, default=default, help="master seed (u64)")
    common.add_argument("--out", default=default, help="output directory")
    common.add_argument("--workers", type=int, default=default, help="worker threads for forests and power simulation")
    return common


def build_parser() -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults so a value
    # given before the subcommand is not reset to None
    parser = argparse.ArgumentParser(prog="fieldcheck", description=__doc__.splitlines()[0], parents=[_global_flags(None)])
    common = _global_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic city and its report history")
    p.add_argument("--periods", type=int)
    p.add_argument("--bias", type=float, help="override bias_strength")
    p.add_argument("--strip-outcomes", action="store_true", help="leave outcomes blank so notes must be coded")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("code-notes", parents=[common], help="fill missing outcomes from inspector notes")
    p.add_argument("--records")
    p.add_argument("--rules", help="rule table JSON (default: packaged rules)")
    p.add_argument("--unmatched", choices=[m.value for m in UnmatchedPolicy])
    p.set_defaults(func=cmd_code_notes)

    p = sub.add_parser("train", parents=[common], help="train on every window that closes by --train-end")
    p.add_argument("--city")
    p.add_argument("--records")
    p.add_argument("--train-end", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", parents=[common], help="monthly temporal cross-validation")
    p.add_argument("--city")
    p.add_argument("--records")
    p.add_argument("--eval-start", type=int)
    p.add_argument("--eval-end", type=int)
    p.add_argument("--svg-folds", type=int, nargs="*", help="folds to plot (default: all)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", parents=[common], help="score every block for one window")
    p.add_argument("--city")
    p.add_argument("--model")
    p.add_argument("--window-start", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("design", parents=[common], help="power of the Bayesian two-group comparison")
    p.add_argument("--n", type=int, help="locations per group")
    p.add_argument("--range1", type=_range)
    p.add_argument("--range2", type=_range)
    p.add_argument("--threshold", type=float)
    p.add_argument("--reps", type=int)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("select", parents=[common], help="draw the stratified field sample")
    p.add_argument("--predictions")
    p.add_argument("--n", type=int)
    p.add_argument("--range", type=_range)
    p.add_argument("--allow-short", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("inspect", parents=[common], help="simulate field inspections of a sample (synthetic cities only)")
    p.add_argument("--city")
    p.add_argument("--sample")
    p.add_argument("--period", type=int)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("assess", parents=[common], help="compare field outcomes and new reports with predictions")
    p.add_argument("--predictions")
    p.add_argument("--field-records")
    p.add_argument("--holdout-records")
    p.add_argument("--city", help="enables the per-ward error analysis")
    p.set_defaults(func=cmd_assess)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FieldcheckError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FieldcheckError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = RunConfig.from_dict(doc)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if getattr(args, "bias", None) is not None:
        cfg.city = cfg.city.replace(bias_strength=args.bias)
    if not (0 <= cfg.seed < 2**64):
        raise FieldcheckError("seed must be an unsigned 64-bit integer")
    if cfg.workers < 1:
        raise FieldcheckError("workers must be >= 1")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        summary = args.func(cfg, args)
    except (FieldcheckError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"fieldcheck {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.command != "design":
        print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
