"""SARIMA + residual LSTM hybrid forecaster.

SARIMA is fitted on the training segment. Its one-step residuals are
z-scored with training statistics and an LSTM learns to predict the next
residual from the previous ``window`` residuals, with early stopping on the
validation segment. Forecasts add the two parts:
``forecast = sarima_forecast + residual_forecast``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from . import lstm, sarima
from ._validation import as_float_1d, check_complete
from .gwo import GwoConfig, SearchSpace
from .gwo import run as gwo_run
from .lstm import LstmNetwork, TrainConfig, TrainHistory
from .preprocess import NormParams, Split, TimeSeries, make_windows, split
from .sarima import SarimaFit, SarimaOrder

MODES = ("hybrid", "sarima_only", "arima", "lstm_only", "rnn_cell")
# smallest residual scale used for z-scoring; keeps noiseless fits finite
MIN_RESIDUAL_SIGMA = 1e-12


class InsufficientResidualsError(ValueError):
    pass


@dataclass(frozen=True)
class HybridConfig:
    order: SarimaOrder = SarimaOrder()
    gwo: GwoConfig = GwoConfig(patience=10)
    train: TrainConfig = TrainConfig()
    window: Optional[int] = None
    hidden_size: int = 128
    n_layers: int = 3
    dense_size: Optional[int] = None
    mode: str = "hybrid"
    ratios: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def lookback(self) -> int:
        return self.window if self.window is not None else 2 * self.order.m

    @property
    def effective_order(self) -> SarimaOrder:
        return self.order.without_seasonal() if self.mode == "arima" else self.order

    @property
    def uses_sarima(self) -> bool:
        return self.mode != "lstm_only"

    @property
    def uses_lstm(self) -> bool:
        return self.mode != "sarima_only"


@dataclass
class HybridModel:
    """Fitted hybrid, conditioned on the first ``n_obs`` observations.

    ``residual_tail`` holds the last ``window`` raw residuals (for ``lstm_only``
    the raw observations) that seed the recursive residual forecast.
    """

    sarima_fit: Optional[SarimaFit]
    lstm: Optional[LstmNetwork]
    residual_norm: NormParams
    window: int
    split: Split
    residual_tail: np.ndarray
    n_obs: int
    mode: str = "hybrid"
    history: TrainHistory = field(default_factory=TrainHistory, repr=False)

    def base_forecast(self, h: int) -> np.ndarray:
        if self.sarima_fit is None:
            return np.zeros(h)
        return sarima.forecast(self.sarima_fit, h)

    def residual_forecast(self, h: int) -> np.ndarray:
        """Recursive residual predictions on the original scale."""
        if self.lstm is None:
            return np.zeros(h)
        z = list(self.residual_norm.transform(self.residual_tail))
        out = np.empty(h)
        for k in range(h):
            p, _ = lstm.forward(self.lstm, np.asarray(z[-self.window:]))
            z.append(p)
            out[k] = p
        return self.residual_norm.inverse(out)

    def one_step_errors(self, values) -> np.ndarray:
        """Base-model one-step errors over observations following ``n_obs``."""
        values = as_float_1d(values, "values")
        if self.sarima_fit is None:
            return values.copy()
        return sarima.one_step_errors(self.sarima_fit, values)

    def one_step_predictions(self, values):
        """Rolling one-step predictions over ``values`` using actuals as they arrive.

        Returns ``(hybrid, base)``.
        """
        values = as_float_1d(values, "values")
        e = self.one_step_errors(values)
        base = values - e
        if self.lstm is None:
            return base.copy(), base
        r = np.concatenate([self.residual_tail, e])
        z = self.residual_norm.transform(r)
        X = np.lib.stride_tricks.sliding_window_view(z, self.window)[:values.size]
        resid = self.residual_norm.inverse(lstm.predict(self.lstm, X))
        return base + resid, base

    def append(self, values) -> "HybridModel":
        """Condition on further observations without retraining."""
        values = as_float_1d(values, "values")
        if values.size == 0:
            return self
        e = self.one_step_errors(values)
        tail = np.concatenate([self.residual_tail, e])[-self.window:]
        fit_ = None if self.sarima_fit is None else self.sarima_fit.append(values)
        return replace(self, sarima_fit=fit_, residual_tail=tail, n_obs=self.n_obs + values.size)


def _residual_norm(r: np.ndarray) -> NormParams:
    return NormParams(float(r.mean()), max(float(r.std()), MIN_RESIDUAL_SIGMA))


def _base_stage(series, config: HybridConfig):
    """Split, fit SARIMA on train and collect train/val residuals."""
    y = series.values if isinstance(series, TimeSeries) else as_float_1d(series, "series")
    check_complete(y)
    sp = split(y.size, config.ratios)
    train_y = y[sp.train]
    val_y = y[sp.val]
    if config.uses_sarima:
        fit_ = sarima.fit(train_y, config.effective_order, config.gwo)
        r_train = fit_.residuals
        r_val = sarima.one_step_errors(fit_, val_y) if val_y.size else np.empty(0)
    else:
        fit_ = None
        r_train, r_val = train_y.copy(), val_y.copy()
    return sp, fit_, r_train, r_val


def _residual_stage(sp, fit_, r_train, r_val, config: HybridConfig) -> HybridModel:
    L = config.lookback
    n_train = len(sp.train)
    if not config.uses_lstm:
        tail = r_train[-L:] if r_train.size >= L else r_train.copy()
        return HybridModel(fit_, None, NormParams(0.0, 1.0), L, sp, tail, n_train, config.mode)

    if r_train.size <= L:
        raise InsufficientResidualsError(
            f"{r_train.size} training residuals cannot fill a window of {L}; "
            "use a longer series or a shorter window")
    norm = _residual_norm(r_train)
    z_train = norm.transform(r_train)
    X, t = make_windows(z_train, L)
    val = None
    if r_val.size:
        z_all = np.concatenate([z_train, norm.transform(r_val)])
        Xv = np.lib.stride_tricks.sliding_window_view(z_all, L)[z_train.size - L:-1]
        val = (Xv, z_all[z_train.size:])
    cell = "rnn" if config.mode == "rnn_cell" else "lstm"
    net = lstm.build_network(1, config.hidden_size, config.n_layers, config.dense_size, cell,
                             seed=config.train.seed)
    net, history = lstm.train(net, (X, t), val, config.train)
    return HybridModel(fit_, net, norm, L, sp, r_train[-L:].copy(), n_train,
                       config.mode, history)


def train_hybrid(series, config: HybridConfig = HybridConfig()) -> HybridModel:
    """Fit the pipeline on the train/val segments of ``series``.

    The returned model is conditioned on the training segment, so its
    forecasts start right after it.
    """
    return _residual_stage(*_base_stage(series, config), config)


def tune_lstm(series, config: HybridConfig = HybridConfig(),
              lr_range=(1e-4, 1e-2), window_range=None,
              gwo_config: GwoConfig = GwoConfig(pack_size=5, max_iter=4, patience=2)):
    """GWO search over the LSTM learning rate (log scale) and window length.

    Each candidate is scored by its best validation loss. SARIMA is fitted once
    and shared. ``window_range`` defaults to ``(m, 4m)``. Returns
    ``(tuned_config, best_val_loss)``.
    """
    if not config.uses_lstm:
        raise ValueError(f"mode {config.mode!r} has no network to tune")
    lo, hi = lr_range
    if not 0 < lo <= hi:
        raise ValueError("lr_range must satisfy 0 < low <= high")
    m = config.order.m
    w_lo, w_hi = window_range if window_range is not None else (m, 4 * m)
    if not 1 <= w_lo <= w_hi:
        raise ValueError("window_range must satisfy 1 <= low <= high")
    sp, fit_, r_train, r_val = _base_stage(series, config)
    if r_val.size == 0:
        raise ValueError("tuning needs a non-empty validation segment")
    cache = {}

    def candidate(vec):
        lr = float(10.0 ** vec[0])
        window = int(round(vec[1]))
        return replace(config, window=window, train=replace(config.train, learning_rate=lr))

    def objective(vec):
        cfg = candidate(vec)
        key = (cfg.train.learning_rate, cfg.window)
        if key not in cache:
            try:
                model = _residual_stage(sp, fit_, r_train, r_val, cfg)
                cache[key] = min(model.history.val_loss)
            except (InsufficientResidualsError, lstm.DivergenceError):
                cache[key] = np.inf
        return cache[key]

    space = SearchSpace([np.log10(lo), w_lo], [np.log10(hi), w_hi])
    result = gwo_run(objective, space, gwo_config)
    return candidate(result.best_position), float(result.best_fitness)


def forecast_components(model: HybridModel, h: int):
    """``(base, residual)`` parts of an ``h``-step forecast."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    return model.base_forecast(h), model.residual_forecast(h)


def forecast_hybrid(model: HybridModel, h: int) -> np.ndarray:
    base, resid = forecast_components(model, h)
    return base + resid


# -- serialization -------------------------------------------------------------

def state_dict(model: HybridModel) -> dict:
    """Everything except the component models themselves."""
    sp = model.split
    return {
        "format": "wolfcast.hybrid",
        "version": 1,
        "mode": model.mode,
        "window": model.window,
        "n_obs": model.n_obs,
        "split": {"train": [sp.train.start, sp.train.stop], "val": [sp.val.start, sp.val.stop],
                  "test": [sp.test.start, sp.test.stop]},
        "residual_norm": {"mu": model.residual_norm.mu, "sigma": model.residual_norm.sigma},
        "residual_tail": model.residual_tail.tolist(),
    }


def from_state(state: dict, sarima_fit: Optional[SarimaFit], network: Optional[LstmNetwork]) -> HybridModel:
    if state.get("format") != "wolfcast.hybrid":
        raise ValueError("not a hybrid state file")
    s = state["split"]
    sp = Split(range(*s["train"]), range(*s["val"]), range(*s["test"]))
    rn = state["residual_norm"]
    model = HybridModel(sarima_fit, network, NormParams(rn["mu"], rn["sigma"]), int(state["window"]),
                        sp, np.asarray(state["residual_tail"], dtype=float), int(state["n_obs"]),
                        state["mode"])
    if model.mode in ("sarima_only",) and network is not None:
        raise ValueError("sarima_only model must not carry a network")
    return model


def save_model(model: HybridModel, directory) -> list:
    """Write ``state.json`` plus ``sarima.json`` and/or ``lstm.json``; returns paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    payload = {"state.json": json.dumps(state_dict(model), indent=2) + "\n"}
    if model.sarima_fit is not None:
        payload["sarima.json"] = json.dumps(sarima.to_dict(model.sarima_fit), indent=2) + "\n"
    if model.lstm is not None:
        payload["lstm.json"] = json.dumps(lstm.to_dict(model.lstm)) + "\n"
    for stale in ("sarima.json", "lstm.json"):
        if stale not in payload and (d / stale).exists():
            (d / stale).unlink()
    paths = []
    for name, text in payload.items():
        (d / name).write_text(text)
        paths.append(d / name)
    return paths


def load_model(directory) -> HybridModel:
    d = Path(directory)
    try:
        state = json.loads((d / "state.json").read_text())
    except FileNotFoundError:
        raise ValueError(f"no state.json in {d}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt state.json: {exc}") from None
    fit_ = sarima.load(d / "sarima.json") if (d / "sarima.json").exists() else None
    net = lstm.load(d / "lstm.json") if (d / "lstm.json").exists() else None
    if state.get("mode") != "lstm_only" and fit_ is None:
        raise ValueError(f"missing sarima.json in {d}")
    if state.get("mode") not in ("sarima_only",) and net is None:
        raise ValueError(f"missing lstm.json in {d}")
    return from_state(state, fit_, net)


# -- estimator ---------------------------------------------------------------------

class HybridForecaster(BaseEstimator):
    """Grey-wolf-fitted SARIMA with an LSTM on its residuals.

    Parameters mirror :class:`HybridConfig`; ``order`` is ``(p, d, q)`` and
    ``seasonal_order`` is ``(P, D, Q, m)``.

    Examples
    --------
    >>> import numpy as np
    >>> t = np.arange(240)
    >>> y = 10 + np.sin(2 * np.pi * t / 12) + 0.1 * np.random.default_rng(0).normal(size=240)
    >>> model = HybridForecaster(seasonal_order=(1, 1, 0, 12), hidden_size=4, n_layers=1,
    ...                          max_epochs=5).fit(y)
    >>> model.predict(3).shape
    (3,)
    """

    def __init__(self, order=(1, 0, 1), seasonal_order=(1, 1, 1, 24), mode="hybrid",
                 window=None, hidden_size=128, n_layers=3, dense_size=None,
                 learning_rate=0.001, batch_size=64, max_epochs=200, patience=20,
                 pack_size=30, max_iter=50, gwo_patience=10, seed=0):
        self.order = order
        self.seasonal_order = seasonal_order
        self.mode = mode
        self.window = window
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.dense_size = dense_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.pack_size = pack_size
        self.max_iter = max_iter
        self.gwo_patience = gwo_patience
        self.seed = seed

    def config(self) -> HybridConfig:
        p, d, q = self.order
        P, D, Q, m = self.seasonal_order
        return HybridConfig(
            order=SarimaOrder(p, d, q, P, D, Q, m),
            gwo=GwoConfig(pack_size=self.pack_size, max_iter=self.max_iter, seed=self.seed,
                          patience=self.gwo_patience),
            train=TrainConfig(self.learning_rate, self.batch_size, self.max_epochs,
                              self.patience, self.seed),
            window=self.window, hidden_size=self.hidden_size, n_layers=self.n_layers,
            dense_size=self.dense_size, mode=self.mode, ratios=(0.9, 0.1, 0.0))

    def fit(self, y, X=None):
        """Fit on all of ``y``: 90% trains, the last 10% drives early stopping.

        The model is then conditioned on the whole of ``y``.
        """
        y = as_float_1d(y, "y")
        model = train_hybrid(y, self.config())
        self.model_ = model.append(y[model.n_obs:])
        return self

    def predict(self, h: int = 1) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise AttributeError("HybridForecaster is not fitted yet; call fit first")
        return forecast_hybrid(self.model_, h)

    def update(self, y_new):
        self.model_ = self.model_.append(y_new)
        return self
