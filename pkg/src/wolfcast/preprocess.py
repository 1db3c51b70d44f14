"""Cleaning, normalisation, splitting and windowing of univariate series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_float_1d, check_positive_int

DEFAULT_START = datetime(2000, 1, 1)
DEFAULT_STEP = timedelta(hours=1)


class SchemaError(ValueError):
    """Raised for malformed input files; carries the offending line number."""

    def __init__(self, message, line=None, row=None):
        where = [] if line is None else [f"line {line}"]
        if row is not None:
            where.append(f"row {row}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.row = row


@dataclass
class TimeSeries:
    """Uniformly spaced observations.

    Missing observations are tracked by the boolean ``missing`` mask; the
    corresponding entries of ``values`` hold NaN so they never pass for data.
    """

    values: np.ndarray
    period: int = 1
    start: datetime = DEFAULT_START
    step: timedelta = DEFAULT_STEP
    missing: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = as_float_1d(self.values, "values").copy()
        if self.values.size < 1:
            raise ValueError("a time series needs at least one observation")
        if self.missing is None:
            self.missing = ~np.isfinite(self.values)
        else:
            self.missing = np.asarray(self.missing, dtype=bool).copy()
            if self.missing.shape != self.values.shape:
                raise ValueError("missing mask must match values in length")
        self.values[self.missing] = np.nan
        if np.any(~np.isfinite(self.values[~self.missing])):
            raise ValueError("non-finite values must be marked missing")
        self.period = check_positive_int(self.period, "period")
        if self.step <= timedelta(0):
            raise ValueError("step must be a positive duration")

    def __len__(self):
        return self.values.size

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    @property
    def is_complete(self) -> bool:
        return not self.missing.any()

    def timestamps(self, start_index=0, count=None) -> list:
        count = len(self) - start_index if count is None else count
        return [self.start + self.step * (start_index + i) for i in range(count)]

    def with_values(self, values, missing=None) -> "TimeSeries":
        return TimeSeries(values, self.period, self.start, self.step, missing)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.values[start:stop], self.period, self.start + self.step * start,
                          self.step, self.missing[start:stop])


@dataclass(frozen=True)
class OutlierMask:
    flags: np.ndarray
    sigma_flags: np.ndarray
    iqr_flags: np.ndarray

    @property
    def count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class NormParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.sigma + self.mu


@dataclass(frozen=True)
class Split:
    train: range
    val: range
    test: range

    @property
    def n(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


def _observed(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, TimeSeries):
        return series.values, series.missing
    x = as_float_1d(series)
    return x, ~np.isfinite(x)


# -- outliers ------------------------------------------------------------------

@dataclass(frozen=True)
class OutlierRule:
    """Thresholds learned from data: mean/std for the sigma rule, Tukey fences."""

    mean: float
    std: float
    q1: float
    q3: float
    sigma_k: float = 3.0
    iqr_k: float = 1.5

    @classmethod
    def learn(cls, x: np.ndarray, sigma_k=3.0, iqr_k=1.5) -> "OutlierRule":
        obs = x[np.isfinite(x)]
        if obs.size < 4:
            raise ValueError(f"outlier detection needs at least 4 observed values, got {obs.size}")
        q1, q3 = np.percentile(obs, [25, 75])
        return cls(float(obs.mean()), float(obs.std()), float(q1), float(q3), sigma_k, iqr_k)

    def apply(self, x: np.ndarray, missing: np.ndarray) -> OutlierMask:
        obs = ~missing
        with np.errstate(invalid="ignore"):
            sigma_flags = obs & (np.abs(x - self.mean) > self.sigma_k * self.std)
            iqr = self.q3 - self.q1
            iqr_flags = obs & ((x < self.q1 - self.iqr_k * iqr) | (x > self.q3 + self.iqr_k * iqr))
        return OutlierMask(sigma_flags & iqr_flags, sigma_flags, iqr_flags)


def detect_outliers(series, sigma_k: float = 3.0, iqr_k: float = 1.5) -> OutlierMask:
    """Flag points outside both the ``sigma_k``-sigma band and the Tukey fences."""
    x, missing = _observed(series)
    return OutlierRule.learn(x, sigma_k, iqr_k).apply(x, missing)


# -- imputation ------------------------------------------------------------------

def _fill_ends(x: np.ndarray, missing: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(~missing)
    x = x.copy()
    x[: idx[0]] = x[idx[0]]
    x[idx[-1] + 1:] = x[idx[-1]]
    return x


def knn_features(x: np.ndarray, missing: np.ndarray, half_width: int, period: int):
    """Lag/lead neighbourhood of every point plus its seasonal index.

    Returns ``(features, usable)``; ``usable`` is False where a neighbour is
    missing or falls outside the series.
    """
    n = x.size
    offsets = [o for o in range(-half_width, half_width + 1) if o != 0]
    feats = np.zeros((n, len(offsets) + 1))
    usable = np.zeros_like(feats, dtype=bool)
    t = np.arange(n)
    for col, o in enumerate(offsets):
        src = t + o
        inside = (src >= 0) & (src < n)
        ok = inside.copy()
        ok[inside] &= ~missing[src[inside]]
        feats[ok, col] = x[src[ok]]
        usable[:, col] = ok
    feats[:, -1] = t % period
    usable[:, -1] = True
    return feats, usable


def _knn_fill(x: np.ndarray, missing: np.ndarray, k: int, period: int) -> np.ndarray:
    feats, usable = knn_features(x, missing, k, period)
    donors = np.flatnonzero(~missing)
    out = x.copy()
    n_coords = feats.shape[1]
    for t in np.flatnonzero(missing):
        shared = usable[t][None, :] & usable[donors]
        diff = np.where(shared, feats[donors] - feats[t][None, :], 0.0)
        present = shared.sum(axis=1)
        dist = np.sqrt(n_coords / present * (diff ** 2).sum(axis=1))
        nearest = donors[np.argsort(dist, kind="stable")[:k]]
        out[t] = x[nearest].mean()
    return out


def impute(series, knn_threshold: float = 0.03, k: int = 5, period: Optional[int] = None,
           return_method: bool = False):
    """Fill missing values.

    Up to ``knn_threshold`` missing fraction, gaps are linearly interpolated;
    above it each gap takes the mean of its ``k`` nearest complete points,
    compared on their ``k`` lags, ``k`` leads and seasonal index (NaN-aware
    Euclidean distance). Leading and trailing gaps are first filled with the
    nearest observation.
    """
    k = check_positive_int(k, "k")
    x, missing = _observed(series)
    if period is None:
        period = series.period if isinstance(series, TimeSeries) else 1
    if missing.all():
        raise ValueError("cannot impute an all-missing series")
    frac = missing.mean()
    method = "none"
    if missing.any():
        x = _fill_ends(x, missing)
        obs = np.flatnonzero(~missing)
        inner = missing.copy()
        inner[: obs[0]] = False
        inner[obs[-1] + 1:] = False
        if frac <= knn_threshold:
            method = "linear"
            t = np.arange(x.size)
            x[inner] = np.interp(t[inner], t[~inner], x[~inner])
        else:
            method = "knn"
            x = _knn_fill(x, inner, k, period)
    out = series.with_values(x, np.zeros(x.size, bool)) if isinstance(series, TimeSeries) else x
    return (out, method) if return_method else out


# -- normalisation, splitting, features -------------------------------------------

def zscore(series, params: Optional[NormParams] = None):
    """Return ``((x - mu) / sigma, params)``; params default to the population moments."""
    x, missing = _observed(series)
    if missing.any():
        raise ValueError("zscore needs a complete series")
    if params is None:
        sigma = float(x.std())
        if sigma == 0:
            raise ValueError("zero variance: cannot normalise a constant series")
        params = NormParams(float(x.mean()), sigma)
    z = params.transform(x)
    out = series.with_values(z) if isinstance(series, TimeSeries) else z
    return out, params


def split(series, ratios: Sequence[float] = (0.8, 0.1, 0.1)) -> Split:
    """Chronological split with ``floor`` sizes for train/val; test takes the rest."""
    n = series if isinstance(series, (int, np.integer)) else len(series)
    if n < 10:
        raise ValueError(f"series of length {n} is too short to split (need >= 10)")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    return Split(range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n))


def engineer_features(series, lags: Sequence[int] = (1,), windows: Sequence[int] = ()) -> pd.DataFrame:
    """Lagged values, trailing moving averages and seasonal index per time step.

    Rows whose lags or windows reach before the start of the series are dropped.
    """
    x, missing = _observed(series)
    period = series.period if isinstance(series, TimeSeries) else 1
    reach = list(lags) + list(windows)
    if any(v < 1 for v in reach):
        raise ValueError("lags and windows must be positive")
    if reach and max(reach) >= x.size:
        raise ValueError(f"lag/window {max(reach)} exceeds series length {x.size}")
    s = pd.Series(x)
    table = {"t": np.arange(x.size), "value": x}
    for lag in lags:
        table[f"lag_{lag}"] = s.shift(lag).to_numpy()
    for w in windows:
        table[f"ma_{w}"] = s.rolling(w).mean().to_numpy()
    table["season"] = np.arange(x.size) % period
    first = max([max(lags, default=0), max(windows, default=1) - 1])
    return pd.DataFrame(table).iloc[first:].reset_index(drop=True)


def make_windows(values, lookback: int):
    """Supervised pairs: ``X[j] = values[j:j+L]``, ``y[j] = values[j+L]``."""
    x = as_float_1d(values)
    L = check_positive_int(lookback, "lookback")
    if x.size <= L:
        raise ValueError(f"need more than {L} values to build windows, got {x.size}")
    X = np.lib.stride_tricks.sliding_window_view(x, L)[:-1].copy()
    return X, x[L:].copy()


# -- transformers ----------------------------------------------------------------

class OutlierImputer(BaseEstimator, TransformerMixin):
    """Null out jointly flagged outliers and impute the gaps.

    ``fit`` learns the sigma band and Tukey fences; ``transform`` applies them.
    """

    def __init__(self, sigma_k=3.0, iqr_k=1.5, knn_threshold=0.03, k=5):
        self.sigma_k = sigma_k
        self.iqr_k = iqr_k
        self.knn_threshold = knn_threshold
        self.k = k

    def fit(self, X, y=None):
        x, _ = _observed(X)
        self.rule_ = OutlierRule.learn(x, self.sigma_k, self.iqr_k)
        return self

    def transform(self, X):
        x, missing = _observed(X)
        mask = self.rule_.apply(x, missing)
        self.mask_ = mask
        self.report_ = {"outlier_count": mask.count, "missing_before": int(missing.sum()),
                        "missing_after_nulling": int((missing | mask.flags).sum())}
        x = x.copy()
        x[mask.flags] = np.nan
        nulled = X.with_values(x) if isinstance(X, TimeSeries) else x
        out, method = impute(nulled, self.knn_threshold, self.k, return_method=True)
        self.report_["missing_after"] = 0
        self.report_["imputation_method"] = method
        return out


class ZScoreScaler(BaseEstimator, TransformerMixin):
    def fit(self, X, y=None):
        _, self.params_ = zscore(X)
        return self

    def transform(self, X):
        return zscore(X, self.params_)[0]

    def inverse_transform(self, X):
        return self.params_.inverse(X)


# -- CSV ingestion -----------------------------------------------------------------

def _parse_time(text: str, line: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise SchemaError(f"malformed timestamp {text!r}", line, line - 1) from None


def read_csv(path, period: int = 1, time_col: str = "timestamp", value_col: str = "value") -> TimeSeries:
    """Read a ``timestamp,value`` CSV; empty values mark missing observations.

    Errors name both the file line (header is line 1) and the data row
    (first data row is row 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("file is empty", 1) from None
        try:
            ti, vi = header.index(time_col), header.index(value_col)
        except ValueError:
            raise SchemaError(f"header must contain {time_col!r} and {value_col!r}, got {header}", 1) from None
        times, values = [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(ti, vi):
                raise SchemaError(f"expected at least {max(ti, vi) + 1} columns", line, line - 1)
            times.append((_parse_time(row[ti], line), line))
            cell = row[vi].strip()
            if cell == "":
                values.append(np.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"malformed value {cell!r}", line, line - 1) from None
            if not math.isfinite(v):
                raise SchemaError(f"non-finite value {cell!r}; leave the cell empty for missing", line, line - 1)
            values.append(v)
    if not times:
        raise SchemaError("no data rows", 2)
    step = timedelta(hours=1)
    if len(times) > 1:
        step = times[1][0] - times[0][0]
        if step <= timedelta(0):
            raise SchemaError("timestamps must increase", times[1][1], times[1][1] - 1)
        for (prev, _), (cur, line) in zip(times, times[1:]):
            if cur - prev != step:
                raise SchemaError(f"irregular spacing: expected step {step}, got {cur - prev}", line, line - 1)
    return TimeSeries(np.array(values), period=period, start=times[0][0], step=step)


def format_value(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def write_csv(series: TimeSeries, path, extra: Optional[dict] = None) -> None:
    """Write ``timestamp,value[,extra...]``; values use shortest round-trip repr."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value", *extra])
        for i, ts in enumerate(series.timestamps()):
            w.writerow([ts.isoformat(), format_value(series.values[i]),
                        *(format_value(col[i]) for col in extra.values())])
