"""Grey-wolf-fitted SARIMA with an LSTM residual corrector."""

from .gwo import GreyWolfOptimizer, GwoConfig, SearchSpace
from .hybrid import (HybridConfig, HybridForecaster, HybridModel, forecast_hybrid, train_hybrid,
                     tune_lstm)
from .lstm import LSTMRegressor, TrainConfig
from .metrics import MetricsReport, mae, r2, rmse, smape
from .preprocess import OutlierImputer, TimeSeries, ZScoreScaler
from .sarima import SARIMAForecaster, SarimaOrder

__version__ = "0.1.0"

__all__ = [
    "GreyWolfOptimizer", "GwoConfig", "SearchSpace",
    "HybridConfig", "HybridForecaster", "HybridModel", "forecast_hybrid", "train_hybrid",
    "tune_lstm",
    "LSTMRegressor", "TrainConfig",
    "MetricsReport", "mae", "r2", "rmse", "smape",
    "OutlierImputer", "TimeSeries", "ZScoreScaler",
    "SARIMAForecaster", "SarimaOrder",
]
