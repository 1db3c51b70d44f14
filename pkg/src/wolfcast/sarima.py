"""Seasonal ARIMA with conditional-sum-of-squares estimation.

The model is the additive SARIMA recursion on the differenced series ``w``::

    w_t = c + sum_i phi_i w_{t-i} + sum_j Phi_j w_{t-jm}
            + sum_i theta_i e_{t-i} + sum_j Theta_j e_{t-jm} + e_t

Pre-sample errors are zero and the first ``max(p, q, P*m, Q*m)`` points of
``w`` are a burn-in that only seeds the recursion. Coefficients are found by
minimising the sum of squared errors with the grey wolf optimizer.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator

from . import gwo
from ._validation import as_float_1d, check_complete

COEF_BOUND = 0.99
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SarimaOrder:
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 1
    D: int = 1
    Q: int = 1
    m: int = 24

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"order field {name} must be a non-negative integer, got {v!r}")
        if self.m < 1:
            raise ValueError("seasonal period m must be >= 1")
        if self.m < 2 and (self.P or self.D or self.Q):
            raise ValueError("seasonal terms need m >= 2")

    @property
    def burn_in(self) -> int:
        return max(self.p, self.q, self.P * self.m, self.Q * self.m)

    @property
    def n_diff(self) -> int:
        """Head values consumed by differencing."""
        return self.d + self.D * self.m

    @property
    def n_params(self) -> int:
        return 1 + self.p + self.q + self.P + self.Q

    def min_length(self) -> int:
        return self.n_diff + self.burn_in + 1

    def validate_length(self, n: int) -> None:
        if n < self.min_length():
            raise ValueError(f"series of length {n} too short for order {self}; "
                             f"need at least {self.min_length()}")

    def without_seasonal(self) -> "SarimaOrder":
        return replace(self, P=0, D=0, Q=0)


@dataclass(frozen=True)
class SarimaParams:
    c: float
    phi: np.ndarray
    theta: np.ndarray
    Phi: np.ndarray
    Theta: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.c], self.phi, self.theta, self.Phi, self.Theta])

    @classmethod
    def from_vector(cls, vec, order: SarimaOrder) -> "SarimaParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (order.n_params,):
            raise ValueError(f"expected {order.n_params} parameters, got {vec.shape}")
        cuts = np.cumsum([1, order.p, order.q, order.P])
        c, phi, theta, Phi, Theta = np.split(vec, cuts)
        return cls(float(c[0]), phi.copy(), theta.copy(), Phi.copy(), Theta.copy())

    def check(self, order: SarimaOrder) -> None:
        got = (len(self.phi), len(self.theta), len(self.Phi), len(self.Theta))
        want = (order.p, order.q, order.P, order.Q)
        if got != want:
            raise ValueError(f"coefficient lengths {got} do not match order {want}")


@dataclass(frozen=True)
class SarimaFit:
    """Fitted model plus the state needed to continue the recursion.

    ``y_tail`` holds the last ``d + D*m`` observations (for integration);
    ``w_tail``/``e_tail`` the last ``burn_in`` differenced values and errors.
    """

    order: SarimaOrder
    params: SarimaParams
    sigma2: float
    css: float
    n_obs: int
    y_tail: np.ndarray
    w_tail: np.ndarray
    e_tail: np.ndarray
    residuals: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def residual_offset(self) -> int:
        """Index into the original series of the first residual."""
        return self.order.n_diff + self.order.burn_in

    def append(self, values) -> "SarimaFit":
        """Condition on further observations without refitting."""
        values = as_float_1d(values, "values")
        if values.size == 0:
            return self
        state = _advance(self, values)
        return replace(self, n_obs=self.n_obs + values.size, residuals=None, **state)


# -- differencing ------------------------------------------------------------

def difference(values, d: int, D: int, m: int) -> np.ndarray:
    """Seasonal difference ``D`` times at lag ``m``, then regular ``d`` times."""
    x = as_float_1d(values, "values")
    if x.size <= d + D * m:
        raise ValueError(f"series of length {x.size} too short for d={d}, D={D}, m={m}")
    for _ in range(D):
        x = x[m:] - x[:-m]
    for _ in range(d):
        x = np.diff(x)
    return x


def integrate(diffed, initials, d: int, D: int, m: int) -> np.ndarray:
    """Invert :func:`difference`.

    ``initials`` are the ``d + D*m`` head values that differencing consumed;
    the result is ``initials`` followed by the reconstructed continuation.
    """
    w = as_float_1d(diffed, "diffed")
    head = as_float_1d(initials, "initials")
    k = d + D * m
    if head.size != k:
        raise ValueError(f"need exactly {k} initial values, got {head.size}")
    # heads of every intermediate stage, in the order difference() built them
    stages = [head]
    for _ in range(D):
        stages.append(stages[-1][m:] - stages[-1][:-m])
    for _ in range(d):
        stages.append(np.diff(stages[-1]))
    x = w
    for _ in range(d):
        stages.pop()
        x = np.concatenate([stages[-1][:1], stages[-1][0] + np.cumsum(x)])
    for _ in range(D):
        stages.pop()
        out = np.concatenate([stages[-1][:m], np.empty(x.size)])
        for t in range(m, out.size):
            out[t] = out[t - m] + x[t - m]
        x = out
    return x


# -- recursion kernel ---------------------------------------------------------

@njit(cache=True)
def _recursion(w, e, start, c, phi, theta, Phi, Theta, m, forecast):  # pragma: no cover
    # fills e[start:] (filter) or w[start:] (forecast, future errors zero)
    for t in range(start, w.shape[0]):
        pred = c
        for i in range(phi.shape[0]):
            pred += phi[i] * w[t - i - 1]
        for j in range(Phi.shape[0]):
            pred += Phi[j] * w[t - (j + 1) * m]
        for i in range(theta.shape[0]):
            pred += theta[i] * e[t - i - 1]
        for j in range(Theta.shape[0]):
            pred += Theta[j] * e[t - (j + 1) * m]
        if forecast:
            w[t] = pred
            e[t] = 0.0
        else:
            e[t] = w[t] - pred


def _filter(params: SarimaParams, w: np.ndarray, e: np.ndarray, start: int, m: int,
            forecast: bool = False) -> None:
    _recursion(w, e, start, params.c, params.phi, params.theta, params.Phi, params.Theta,
               m, forecast)


def _errors(params: SarimaParams, diffed: np.ndarray, order: SarimaOrder) -> np.ndarray:
    w = np.ascontiguousarray(diffed, dtype=float)
    e = np.zeros_like(w)
    with np.errstate(over="ignore", invalid="ignore"):
        _filter(params, w, e, order.burn_in, order.m)
    return e


def css_objective(params: SarimaParams, diffed, order: SarimaOrder) -> float:
    """Sum of squared one-step errors past the burn-in; ``inf`` if divergent."""
    w = as_float_1d(diffed, "diffed")
    if w.size <= order.burn_in:
        raise ValueError(f"differenced length {w.size} must exceed max lag {order.burn_in}")
    e = _errors(params, w, order)[order.burn_in:]
    with np.errstate(over="ignore", invalid="ignore"):
        s = float(np.dot(e, e))
    return s if np.isfinite(s) else np.inf


# -- fitting -------------------------------------------------------------------

def search_space(diffed: np.ndarray, order: SarimaOrder) -> gwo.SearchSpace:
    """Box for (c, phi, theta, Phi, Theta): coefficients in +-0.99, c scaled to the data."""
    scale = abs(float(np.mean(diffed))) + 3.0 * float(np.std(diffed))
    k = order.n_params - 1
    lb = np.concatenate([[-scale], np.full(k, -COEF_BOUND)])
    ub = np.concatenate([[scale], np.full(k, COEF_BOUND)])
    return gwo.SearchSpace(lb, ub)


def _build_fit(y: np.ndarray, order: SarimaOrder, params: SarimaParams) -> SarimaFit:
    w = difference(y, order.d, order.D, order.m)
    e = _errors(params, w, order)
    b = order.burn_in
    resid = e[b:].copy()
    css = float(np.dot(resid, resid))
    return SarimaFit(
        order=order, params=params,
        sigma2=css / resid.size, css=css, n_obs=y.size,
        y_tail=y[y.size - order.n_diff:].copy(),
        w_tail=w[w.size - b:].copy(), e_tail=e[e.size - b:].copy(),
        residuals=resid,
    )


def fit(series, order: SarimaOrder, gwo_config: gwo.GwoConfig = gwo.GwoConfig()) -> SarimaFit:
    """Estimate coefficients by minimising the conditional sum of squares."""
    y = check_complete(as_float_1d(series, "series"))
    order.validate_length(y.size)
    w = difference(y, order.d, order.D, order.m)
    space = search_space(w, order)

    def objective(vec):
        return css_objective(SarimaParams.from_vector(vec, order), w, order)

    result = gwo.run(objective, space, gwo_config)
    params = SarimaParams.from_vector(result.best_position, order)
    return _build_fit(y, order, params)


def from_params(series, order: SarimaOrder, params: SarimaParams) -> SarimaFit:
    """Build a fit with fixed, known coefficients."""
    params.check(order)
    y = check_complete(as_float_1d(series, "series"))
    order.validate_length(y.size)
    return _build_fit(y, order, params)


def _run_on(fit_: SarimaFit, values: np.ndarray):
    order = fit_.order
    y_ext = np.concatenate([fit_.y_tail, values])
    w_new = difference(y_ext, order.d, order.D, order.m)
    w = np.concatenate([fit_.w_tail, w_new])
    e = np.concatenate([fit_.e_tail, np.zeros(w_new.size)])
    _filter(fit_.params, w, e, order.burn_in, order.m)
    return y_ext, w, e


def _advance(fit_: SarimaFit, values: np.ndarray) -> dict:
    b, k = fit_.order.burn_in, fit_.order.n_diff
    y_ext, w, e = _run_on(fit_, values)
    return dict(y_tail=y_ext[y_ext.size - k:].copy(), w_tail=w[w.size - b:].copy(),
                e_tail=e[e.size - b:].copy())


def one_step_errors(fit_: SarimaFit, values) -> np.ndarray:
    """Errors of rolling one-step predictions over observations following the fit."""
    values = as_float_1d(values, "values")
    _, _, e = _run_on(fit_, values)
    return e[fit_.order.burn_in:]


def forecast(fit_: SarimaFit, h: int) -> np.ndarray:
    """Recursive ``h``-step forecast on the original scale."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    order = fit_.order
    b = order.burn_in
    w = np.concatenate([fit_.w_tail, np.zeros(h)])
    e = np.concatenate([fit_.e_tail, np.zeros(h)])
    _filter(fit_.params, w, e, b, order.m, forecast=True)
    future = w[b:]
    if order.n_diff == 0:
        return future
    return integrate(future, fit_.y_tail, order.d, order.D, order.m)[order.n_diff:]


def residuals(fit_: SarimaFit, series) -> np.ndarray:
    """One-step in-sample errors on the original scale.

    Element ``j`` belongs to original index ``fit_.residual_offset + j``.
    """
    y = check_complete(as_float_1d(series, "series"))
    if y.size != fit_.n_obs or not np.array_equal(y[y.size - fit_.order.n_diff:], fit_.y_tail):
        raise ValueError("series does not match the data this model was fitted on")
    w = difference(y, fit_.order.d, fit_.order.D, fit_.order.m)
    return _errors(fit_.params, w, fit_.order)[fit_.order.burn_in:]


def grid_search_order(train, val, m: int, d: int = 0, D: int = 1, values=(0, 1, 2),
                      gwo_config: gwo.GwoConfig = gwo.GwoConfig()):
    """Pick (p, q, P, Q) from a small grid by validation RMSE of a recursive forecast.

    Returns ``(best_order, table)`` where ``table`` maps each tried order to its RMSE.
    """
    train = as_float_1d(train, "train")
    val = as_float_1d(val, "val")
    table = {}
    seasonal = values if m >= 2 else (0,)
    for p, q, P, Q in itertools.product(values, values, seasonal, seasonal):
        try:
            order = SarimaOrder(p, d, q, P, D if m >= 2 else 0, Q, m)
            order.validate_length(train.size)
        except ValueError:
            continue
        f = fit(train, order, gwo_config)
        pred = forecast(f, val.size)
        table[order] = float(np.sqrt(np.mean((val - pred) ** 2)))
    if not table:
        raise ValueError("no order in the grid fits the training length")
    best = min(table, key=lambda o: (table[o], o.n_params))
    return best, table


# -- serialization -------------------------------------------------------------

def _order_dict(order: SarimaOrder) -> dict:
    return {k: int(getattr(order, k)) for k in ("p", "d", "q", "P", "D", "Q", "m")}


def to_dict(fit_: SarimaFit) -> dict:
    p = fit_.params
    return {
        "format": "wolfcast.sarima",
        "version": FORMAT_VERSION,
        "order": _order_dict(fit_.order),
        "params": {"c": p.c, "phi": p.phi.tolist(), "theta": p.theta.tolist(),
                   "Phi": p.Phi.tolist(), "Theta": p.Theta.tolist()},
        "sigma2": fit_.sigma2,
        "css": fit_.css,
        "n_obs": fit_.n_obs,
        "tail_state": {"y": fit_.y_tail.tolist(), "w": fit_.w_tail.tolist(),
                       "e": fit_.e_tail.tolist()},
    }


def from_dict(data: dict) -> SarimaFit:
    if data.get("format") != "wolfcast.sarima":
        raise ValueError("not a SARIMA model file")
    order = SarimaOrder(**data["order"])
    pr = data["params"]
    params = SarimaParams(float(pr["c"]), *(np.asarray(pr[k], dtype=float)
                                             for k in ("phi", "theta", "Phi", "Theta")))
    params.check(order)
    ts = data["tail_state"]
    y_tail, w_tail, e_tail = (np.asarray(ts[k], dtype=float) for k in ("y", "w", "e"))
    if y_tail.size != order.n_diff or w_tail.size != order.burn_in or e_tail.size != order.burn_in:
        raise ValueError("tail_state lengths do not match the order")
    return SarimaFit(order=order, params=params, sigma2=float(data["sigma2"]),
                     css=float(data["css"]), n_obs=int(data["n_obs"]),
                     y_tail=y_tail, w_tail=w_tail, e_tail=e_tail)


def save(fit_: SarimaFit, path) -> None:
    Path(path).write_text(json.dumps(to_dict(fit_), indent=2) + "\n")


def load(path) -> SarimaFit:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt model file {path}: {exc}") from None
    return from_dict(data)


# -- estimator -------------------------------------------------------------------

class SARIMAForecaster(BaseEstimator):
    """SARIMA forecaster fitted by grey wolf search over the CSS objective.

    Parameters
    ----------
    order : tuple of int
        Non-seasonal ``(p, d, q)``.
    seasonal_order : tuple of int
        ``(P, D, Q, m)``.
    pack_size, max_iter, epsilon, patience, seed
        Grey wolf optimizer settings.

    Attributes
    ----------
    fit_ : SarimaFit
    residuals_ : ndarray
        In-sample one-step errors past the burn-in.
    """

    def __init__(self, order=(1, 0, 1), seasonal_order=(1, 1, 1, 24), pack_size=30,
                 max_iter=50, epsilon=1e-8, patience=10, seed=0):
        self.order = order
        self.seasonal_order = seasonal_order
        self.pack_size = pack_size
        self.max_iter = max_iter
        self.epsilon = epsilon
        self.patience = patience
        self.seed = seed

    def sarima_order(self) -> SarimaOrder:
        p, d, q = self.order
        P, D, Q, m = self.seasonal_order
        return SarimaOrder(p, d, q, P, D, Q, m)

    def gwo_config(self) -> gwo.GwoConfig:
        return gwo.GwoConfig(pack_size=self.pack_size, max_iter=self.max_iter,
                             epsilon=self.epsilon, seed=self.seed, patience=self.patience)

    def fit(self, y, X=None):
        self.fit_ = fit(y, self.sarima_order(), self.gwo_config())
        self.params_ = self.fit_.params
        self.residuals_ = self.fit_.residuals
        return self

    def predict(self, h: int = 1) -> np.ndarray:
        if not hasattr(self, "fit_"):
            raise AttributeError("SARIMAForecaster is not fitted yet; call fit first")
        return forecast(self.fit_, h)

    def update(self, y_new):
        """Condition on new observations, keeping the coefficients."""
        self.fit_ = self.fit_.append(y_new)
        return self
