"""Synthetic seasonal series with a known decomposition.

``series = trend + seasonal + ar_noise + nonlinear`` where

* ``trend_t = level + trend_slope * t``
* ``seasonal_t = amplitude * sin(2 pi t / period)``
* ``u_t = ar_noise_t + nonlinear_t`` is the stochastic deviation
* ``ar_noise_t = ar_coef * u_{t-1} + noise_sigma * e_t``, ``e_t ~ N(0, 1)``
* ``nonlinear_t = coupling * (1 - 1.8 * x**2)``, ``x = clip(u_{t-1} / coupling, -1, 1)``

The nonlinear term is a noisy, clipped logistic map: nearly deterministic given
the previous deviation, yet close to uncorrelated with it, so a linear model
leaves most of it in the residuals. Clipping keeps the recursion bounded.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from .preprocess import DEFAULT_START, DEFAULT_STEP, TimeSeries

COMPONENTS = ("trend", "seasonal", "ar_noise", "nonlinear")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    period: int = 24
    amplitude: float = 10.0
    trend_slope: float = 0.01
    level: float = 100.0
    noise_sigma: float = 0.5
    ar_coef: float = 0.0
    coupling: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.n <= 3 * self.period:
            raise ValueError(f"n must exceed 3 * period ({3 * self.period}), got {self.n}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not -1 < self.ar_coef < 1:
            raise ValueError("ar_coef must lie in (-1, 1)")
        if self.coupling < 0:
            raise ValueError("coupling must be non-negative")


def generate(spec: SyntheticSpec) -> pd.DataFrame:
    """Components as columns plus their sum in ``value``."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.n, dtype=float)
    shocks = rng.standard_normal(spec.n)
    ar = np.zeros(spec.n)
    nl = np.zeros(spec.n)
    prev = 0.0
    for i in range(spec.n):
        if spec.coupling > 0:
            x = min(1.0, max(-1.0, prev / spec.coupling))
            nl[i] = spec.coupling * (1.0 - 1.8 * x * x)
        ar[i] = spec.ar_coef * prev + spec.noise_sigma * shocks[i]
        prev = ar[i] + nl[i]
    frame = pd.DataFrame({
        "trend": spec.level + spec.trend_slope * t,
        "seasonal": spec.amplitude * np.sin(2.0 * np.pi * t / spec.period),
        "ar_noise": ar,
        "nonlinear": nl,
    })
    frame["value"] = frame[list(COMPONENTS)].sum(axis=1)
    return frame


def generate_series(spec: SyntheticSpec, start: datetime = DEFAULT_START,
                    step: timedelta = DEFAULT_STEP) -> TimeSeries:
    return TimeSeries(generate(spec)["value"].to_numpy(), spec.period, start, step)


def spec_dict(spec: SyntheticSpec) -> dict:
    return asdict(spec)
