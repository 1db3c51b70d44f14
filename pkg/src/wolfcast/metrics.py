"""Point-forecast accuracy metrics."""

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_same_length


def mae(y, y_hat) -> float:
    y, y_hat = check_same_length(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = check_same_length(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def smape(y, y_hat) -> float:
    """Symmetric MAPE in percent, range [0, 200]. Terms with y = y_hat = 0 count as 0."""
    y, y_hat = check_same_length(y, y_hat)
    num = np.abs(y - y_hat)
    den = (np.abs(y) + np.abs(y_hat)) / 2.0
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(100.0 * np.mean(terms))


def r2(y, y_hat) -> float:
    y, y_hat = check_same_length(y, y_hat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("r2 is undefined for a constant target")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    smape_percent: float
    r2: float
    n: int

    @classmethod
    def score(cls, y, y_hat) -> "MetricsReport":
        y, y_hat = check_same_length(y, y_hat)
        try:
            r = r2(y, y_hat)
        except ValueError:
            r = float("nan")
        return cls(mae(y, y_hat), rmse(y, y_hat), smape(y, y_hat), r, int(y.size))

    def to_dict(self) -> dict:
        return asdict(self)
