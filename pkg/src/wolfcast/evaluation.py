"""Held-out scoring, rolling-origin cross-validation, significance tests and
model footprint accounting."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import lstm as lstm_mod
from ._validation import as_float_1d, check_positive_int
from .hybrid import HybridConfig, HybridModel, forecast_hybrid, train_hybrid
from .metrics import MetricsReport
from .preprocess import TimeSeries

STRATEGIES = ("recursive", "one_step")


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else as_float_1d(series, "series")


def _segment(model: HybridModel, segment: str) -> range:
    if segment not in ("val", "test"):
        raise ValueError(f"segment must be 'val' or 'test', got {segment!r}")
    return getattr(model.split, segment)


def predict_segment(model: HybridModel, series, segment: str = "test",
                    strategy: str = "recursive", base_only: bool = False) -> np.ndarray:
    """Predictions for every index of ``segment``.

    ``recursive`` forecasts from the end of the training data over the whole
    horizon up to the segment end. ``one_step`` predicts each point from the
    actual observations before it (no refitting).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    y = _values(series)
    seg = _segment(model, segment)
    if len(seg) == 0:
        raise ValueError(f"{segment} segment is empty")
    if y.size != model.split.n:
        raise ValueError(f"series length {y.size} does not match the model's split ({model.split.n})")
    start = model.n_obs
    if strategy == "recursive":
        h = seg.stop - start
        pred = model.base_forecast(h) if base_only else forecast_hybrid(model, h)
    else:
        hybrid, base = model.one_step_predictions(y[start:seg.stop])
        pred = base if base_only else hybrid
    return pred[seg.start - start:]


def evaluate(model: HybridModel, series, segment: str = "test",
             strategy: str = "recursive") -> MetricsReport:
    """Score the model on ``segment`` on the original scale."""
    y = _values(series)
    pred = predict_segment(model, y, segment, strategy)
    seg = _segment(model, segment)
    return MetricsReport.score(y[seg.start:seg.stop], pred)


# -- cross-validation -------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    train: range
    test: range


def cv_folds(n: int, k: int = 5) -> List[Fold]:
    """Expanding-window folds: fold ``j`` trains on ``floor(n * (0.5 + 0.4 j / k))``
    points and tests on the following ``floor(0.1 n)``."""
    k = check_positive_int(k, "k")
    test_len = n // 10
    folds = []
    for j in range(1, k + 1):
        end = n * (5 * k + 4 * j) // (10 * k)
        folds.append(Fold(range(0, end), range(end, end + test_len)))
    return folds


@dataclass
class CvReport:
    folds: List[Fold]
    fold_metrics: Dict[str, List[MetricsReport]]
    errors: Dict[str, List[float]]
    p_values: Dict[tuple, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Flat report. The first model's keys are ``fold_<j>_<metric>``; any
        further model's keys carry a ``<mode>.`` prefix."""
        modes = list(self.fold_metrics)
        out = {"k": len(self.folds), "modes": ",".join(modes)}
        for i, (mode, reports) in enumerate(self.fold_metrics.items()):
            prefix = "" if i == 0 else f"{mode}."
            for j, rep in enumerate(reports, start=1):
                for key, v in rep.to_dict().items():
                    out[f"{prefix}fold_{j}_{key}"] = v
        for j, fold in enumerate(self.folds, start=1):
            out[f"fold_{j}_train_stop"] = fold.train.stop
            out[f"fold_{j}_test_stop"] = fold.test.stop
        for (a, b), p in self.p_values.items():
            out[f"pvalue_{a}_vs_{b}"] = p
        return out


def _labels(modes: Sequence[str]) -> List[str]:
    """Report names; a repeated mode gets a ``_2``, ``_3`` ... suffix."""
    seen: Dict[str, int] = {}
    out = []
    for m in modes:
        seen[m] = seen.get(m, 0) + 1
        out.append(m if seen[m] == 1 else f"{m}_{seen[m]}")
    return out


def _fold_config(config: HybridConfig, mode: str) -> HybridConfig:
    # hold out the last ninth of the fold's training range for early stopping
    return replace(config, mode=mode, ratios=(8 / 9, 1 / 9, 0.0))


def rolling_cv(series, config: HybridConfig, k: int = 5, modes: Sequence[str] = ("hybrid",),
               strategy: str = "recursive") -> CvReport:
    """Retrain on each expanding window and score the following block.

    Each fold holds out the last ninth of its training range for early
    stopping, then conditions the model on the whole range before
    forecasting. A mode listed twice is trained once and scored twice.
    """
    if not modes:
        raise ValueError("need at least one mode")
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    y = _values(series)
    folds = cv_folds(y.size, k)
    min_train = max(config.effective_order.min_length(), config.lookback + 2, 10)
    if folds[0].train.stop * 8 // 9 < min_train or len(folds[0].test) == 0:
        raise ValueError(f"series of length {y.size} too short for {k} folds")
    labels = _labels(modes)
    fold_metrics: Dict[str, List[MetricsReport]] = {lab: [] for lab in labels}
    for fold in folds:
        prefix = y[: fold.train.stop]
        test = y[fold.test.start: fold.test.stop]
        done: Dict[str, MetricsReport] = {}
        for mode, label in zip(modes, labels):
            if mode not in done:
                model = train_hybrid(prefix, _fold_config(config, mode))
                model = model.append(prefix[model.n_obs:])
                if strategy == "recursive":
                    pred = forecast_hybrid(model, test.size)
                else:
                    pred = model.one_step_predictions(test)[0]
                done[mode] = MetricsReport.score(test, pred)
            fold_metrics[label].append(done[mode])
    errors = {m: [r.rmse for r in reps] for m, reps in fold_metrics.items()}
    p_values = {}
    if k >= 2:
        for a, b in itertools.combinations(labels, 2):
            p_values[(a, b)] = compare_models(errors[a], errors[b])
    return CvReport(folds, fold_metrics, errors, p_values)


def compare_models(errors_a, errors_b) -> float:
    """Two-sided paired t-test p-value on per-fold errors.

    Identical inputs give 1.0; a constant non-zero difference gives the
    smallest positive double.
    """
    a = as_float_1d(errors_a, "errors_a")
    b = as_float_1d(errors_b, "errors_b")
    if a.shape != b.shape:
        raise ValueError(f"fold counts differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least 2 folds for a paired test")
    d = a - b
    if np.all(d == 0):
        return 1.0
    sd = d.std(ddof=1)
    if sd == 0:
        return float(np.finfo(float).tiny)
    t = d.mean() / (sd / np.sqrt(d.size))
    p = 2.0 * stats.t.sf(abs(t), d.size - 1)
    return float(min(1.0, max(p, np.finfo(float).tiny)))


# -- footprint ---------------------------------------------------------------------

@dataclass(frozen=True)
class FootprintReport:
    parameter_count: int
    flops_per_forecast: int

    def to_dict(self) -> dict:
        return {"parameter_count": self.parameter_count,
                "flops_per_forecast": self.flops_per_forecast}


def layer_parameter_count(hidden: int, input_size: int, cell: str = "lstm") -> int:
    gates = 4 if cell == "lstm" else 1
    return gates * (hidden * (hidden + input_size) + hidden)


def network_flops(net: lstm_mod.LstmNetwork, window: int) -> int:
    """Flops of one forward pass; a multiply-add is 2, an activation or add is 1."""
    total = 0
    for layer in net.layers:
        H, I = layer.hidden, layer.input_size
        if layer.cell == "lstm":
            # gate affine maps + biases, 5 activations, cell and hidden updates
            per_step = 4 * (2 * H * (H + I) + H) + 5 * H + 4 * H
        else:
            per_step = 2 * H * (H + I) + H + H
        total += window * per_step
    top = net.hidden_size
    if net.dense_W is not None:
        D = net.dense_W.shape[0]
        total += 2 * D * top + D + D
        top = D
    return total + 2 * top + 1


def sarima_flops(order) -> int:
    lags = order.p + order.q + order.P + order.Q
    return 2 * lags + 1 + 1 + order.d + order.D


def footprint(model: HybridModel) -> FootprintReport:
    params = 0
    flops = 0
    if model.sarima_fit is not None:
        params += model.sarima_fit.order.n_params
        flops += sarima_flops(model.sarima_fit.order)
    if model.lstm is not None:
        params += model.lstm.n_parameters()
        flops += network_flops(model.lstm, model.window)
    return FootprintReport(params, flops)


# -- report files --------------------------------------------------------------------

def write_report(path, data: dict) -> None:
    """Flat JSON object, keys sorted, floats in shortest round-trip form."""
    clean = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in data.items()}
    Path(path).write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def evaluation_report(metrics: MetricsReport, fp: Optional[FootprintReport] = None) -> dict:
    out = metrics.to_dict()
    if fp is not None:
        out.update(fp.to_dict())
    return out
