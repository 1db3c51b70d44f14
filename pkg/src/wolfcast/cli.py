"""Command-line front end.

Every command reads an optional ``--config`` file, honours ``--seed`` and
writes its outputs under ``--out`` (default ``out``). Exit codes: 0 success,
1 runtime failure, 2 usage or input-schema error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as config_mod
from . import evaluation, gwo, hybrid, preprocess, synth
from .preprocess import SchemaError, TimeSeries, format_value

log = logging.getLogger("wolfcast")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MODEL_DIR = "model"
META_FILE = "meta.json"


class UsageError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _run_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    overrides = {a: getattr(args, a) for a in ("seed", "time_col", "value_col", "mode")
                 if getattr(args, a, None) is not None}
    return config_mod.validate(replace(cfg, **overrides)) if overrides else cfg


def _read_series(path, cfg: config_mod.RunConfig) -> TimeSeries:
    return preprocess.read_csv(path, cfg.m, cfg.time_col, cfg.value_col)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _atomic_dir(target: Path, writer) -> None:
    """Run ``writer(tmpdir)`` then move its files into ``target``; on failure
    ``target`` is left untouched."""
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=target.parent))
    try:
        writer(tmp)
        target.mkdir(exist_ok=True)
        names = {p.name for p in tmp.iterdir()}
        for old in target.iterdir():
            if old.is_file() and old.name not in names:
                old.unlink()
        for p in sorted(tmp.iterdir()):
            os.replace(p, target / p.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _meta(series: TimeSeries, cfg: config_mod.RunConfig) -> dict:
    return {"start": series.start.isoformat(), "step_seconds": series.step.total_seconds(),
            "period": series.period, "n": len(series), "config": cfg.as_dict()}


def _timeline(meta: dict):
    return datetime.fromisoformat(meta["start"]), timedelta(seconds=meta["step_seconds"])


def _load(model_dir: Path):
    try:
        meta = json.loads((model_dir / META_FILE).read_text())
        model = hybrid.load_model(model_dir)
    except FileNotFoundError as exc:
        raise RuntimeError(f"missing model file {exc.filename}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise RuntimeError(f"corrupt model in {model_dir}: {exc}") from None
    return model, meta


def _model_dir(args) -> Path:
    return Path(args.model) if args.model else Path(args.out) / MODEL_DIR


def _write_forecast(path: Path, timestamps, forecast, actual=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "forecast"] + (["actual"] if actual is not None else []))
        for i, ts in enumerate(timestamps):
            row = [ts.isoformat(), format_value(forecast[i])]
            if actual is not None:
                row.append(format_value(actual[i]))
            w.writerow(row)


# -- commands ----------------------------------------------------------------------

def cmd_preprocess(args, cfg) -> None:
    series = _read_series(args.input, cfg)
    tf = preprocess.OutlierImputer(cfg.sigma_k, cfg.iqr_k, cfg.knn_threshold, cfg.knn_k)
    cleaned = tf.fit(series).transform(series)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preprocess.write_csv(cleaned, out / "cleaned.csv")
    report = dict(tf.report_, n=len(series),
                  outlier_indices=[int(i) for i in np.flatnonzero(tf.mask_.flags)])
    _write_json(out / "preprocess_report.json", report)
    log.info("cleaned %d points: %d outliers, %d missing", len(series),
             report["outlier_count"], report["missing_before"])


def cmd_fit(args, cfg) -> None:
    series = _read_series(args.input, cfg)
    if not series.is_complete:
        raise SchemaError(f"{series.n_missing} missing values; run preprocess first")
    model = hybrid.train_hybrid(series, cfg.hybrid())
    out = Path(args.out)

    def write(tmp: Path) -> None:
        hybrid.save_model(model, tmp)
        _write_json(tmp / META_FILE, _meta(series, cfg))

    _atomic_dir(_model_dir(args), write)
    out.mkdir(parents=True, exist_ok=True)
    h = model.history
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, tr in enumerate(h.train_loss, start=1):
            val = h.val_loss[i - 1] if i - 1 < len(h.val_loss) else float("nan")
            w.writerow([i, format_value(tr), format_value(val)])
    log.info("fitted %s model; %d epochs", model.mode, len(h.train_loss))


def cmd_forecast(args, cfg) -> None:
    model, meta = _load(_model_dir(args))
    pred = hybrid.forecast_hybrid(model, args.horizon)
    start, step = _timeline(meta)
    stamps = [start + (model.n_obs + i) * step for i in range(args.horizon)]
    actual = None
    if args.actual:
        series = _read_series(args.actual, cfg)
        offset = round((stamps[0] - series.start) / series.step)
        if series.step != step or offset < 0:
            raise SchemaError("actuals file does not share the model's timeline")
        actual = np.full(args.horizon, np.nan)
        avail = series.values[offset: offset + args.horizon]
        actual[: avail.size] = avail
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_forecast(out / "forecast.csv", stamps, pred, actual)


def cmd_evaluate(args, cfg) -> None:
    model, _ = _load(_model_dir(args))
    series = _read_series(args.input, cfg)
    strategy = args.strategy or cfg.strategy
    pred = evaluation.predict_segment(model, series, args.segment, strategy)
    seg = getattr(model.split, args.segment)
    metrics = evaluation.MetricsReport.score(series.values[seg.start:seg.stop], pred)
    report = evaluation.evaluation_report(metrics, evaluation.footprint(model))
    report.update(segment=args.segment, strategy=strategy, mode=model.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(out / "eval_report.json", report)
    _write_forecast(out / "eval_predictions.csv", series.timestamps(seg.start, len(seg)), pred,
                    series.values[seg.start:seg.stop])


def cmd_cv(args, cfg) -> None:
    series = _read_series(args.input, cfg)
    if not series.is_complete:
        raise SchemaError(f"{series.n_missing} missing values; run preprocess first")
    k = args.k or cfg.k
    if args.compare:
        modes = args.compare
        for m in modes:
            if m not in hybrid.MODES:
                raise UsageError(f"unknown mode {m!r}; choose from {', '.join(hybrid.MODES)}")
    else:
        modes = [cfg.mode]
    report = evaluation.rolling_cv(series, cfg.hybrid(), k, modes, args.strategy or cfg.strategy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(out / "cv_report.json", report.to_dict())


def cmd_synth(args, cfg) -> None:
    try:
        spec = cfg.synth()
    except ValueError as exc:
        raise config_mod.ConfigError(str(exc)) from None
    frame = synth.generate(spec)
    series = TimeSeries(frame["value"].to_numpy(), spec.period)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preprocess.write_csv(series, out / "series.csv")
    components = {c: frame[c].to_numpy() for c in synth.COMPONENTS}
    preprocess.write_csv(series, out / "components.csv", components)
    _write_json(out / "synth_spec.json", synth.spec_dict(spec))


def cmd_gwo_bench(args, cfg) -> None:
    if args.objective not in OBJECTIVES:
        raise UsageError(f"unknown objective {args.objective!r}")
    if not args.lb < args.ub:
        raise UsageError("--lb must be below --ub")
    seed = cfg.seed
    gcfg = gwo.GwoConfig(pack_size=args.pack, max_iter=args.iters, seed=seed,
                         epsilon=cfg.epsilon, patience=args.patience)
    result = gwo.run(OBJECTIVES[args.objective], gwo.SearchSpace.uniform(args.lb, args.ub, args.dim), gcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gwo_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "best_fitness"])
        for i, f in enumerate(result.history):
            w.writerow([i, format_value(f)])
    evaluation.write_report(out / "gwo_report.json", {
        "objective": args.objective, "dim": args.dim, "seed": seed, "best_fitness": result.best_fitness,
        "n_iter": result.n_iter, "converged": result.converged,
        "best_position": ",".join(format_value(v) for v in result.best_position)})


OBJECTIVES = {"sphere": gwo.sphere}


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="key = value settings file")
    common.add_argument("--seed", metavar="N", type=int, default=argparse.SUPPRESS,
                        help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="wolfcast", parents=[common],
                                     description="Grey-wolf SARIMA + LSTM residual forecasting.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def columns(p):
        p.add_argument("--time-col", dest="time_col", help="timestamp column name")
        p.add_argument("--value-col", dest="value_col", help="value column name")

    p = sub.add_parser("preprocess", parents=[common], help="flag outliers and impute gaps")
    p.add_argument("input", help="timestamp,value CSV")
    columns(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", parents=[common], help="train a model")
    p.add_argument("input", help="cleaned CSV")
    p.add_argument("--mode", choices=hybrid.MODES, help="ablation mode (overrides config)")
    p.add_argument("--model", help="model directory (default: OUT/model)")
    columns(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", parents=[common], help="forecast from a fitted model")
    p.add_argument("--horizon", "-H", type=_positive_int, required=True)
    p.add_argument("--model", help="model directory (default: OUT/model)")
    p.add_argument("--actual", help="CSV with observed values to place alongside")
    columns(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", parents=[common], help="score a fitted model")
    p.add_argument("input", help="the CSV the model was fitted on")
    p.add_argument("--model", help="model directory (default: OUT/model)")
    p.add_argument("--segment", choices=("val", "test"), default="test")
    p.add_argument("--strategy", choices=evaluation.STRATEGIES)
    columns(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", parents=[common], help="rolling-origin cross-validation")
    p.add_argument("input", help="cleaned CSV")
    p.add_argument("--k", type=_positive_int, help="fold count (overrides config)")
    p.add_argument("--mode", choices=hybrid.MODES, help="mode when not comparing")
    p.add_argument("--compare", nargs=2, metavar="MODE", help="compare two modes with a paired t-test")
    p.add_argument("--strategy", choices=evaluation.STRATEGIES)
    columns(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic series")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gwo-bench", parents=[common], help="run GWO on a benchmark function")
    p.add_argument("--objective", default="sphere", choices=sorted(OBJECTIVES))
    p.add_argument("--dim", type=_positive_int, default=10)
    p.add_argument("--pack", type=_positive_int, default=30)
    p.add_argument("--iters", type=_positive_int, default=50)
    p.add_argument("--lb", type=float, default=-100.0)
    p.add_argument("--ub", type=float, default=100.0)
    p.add_argument("--patience", type=_positive_int, default=10,
                   help="stalled iterations tolerated before stopping")
    p.set_defaults(func=cmd_gwo_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("config", None), ("seed", None), ("out", "out"), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _run_config(args)
        args.func(args, cfg)
    except (SchemaError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any failure as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
