import numpy as np
import pytest

from wolfcast.gwo import GwoConfig
from wolfcast.hybrid import HybridConfig
from wolfcast.lstm import TrainConfig
from wolfcast.sarima import SarimaOrder

ORDER12 = SarimaOrder(1, 0, 0, 1, 1, 0, 12)


def small_config(mode="hybrid", seed=0, **kw):
    """A hybrid small enough to train in well under a second."""
    return HybridConfig(order=ORDER12, gwo=GwoConfig(pack_size=10, max_iter=15, seed=seed),
                        train=TrainConfig(learning_rate=0.01, batch_size=32, max_epochs=8,
                                          patience=3, seed=seed),
                        window=kw.pop("window", 12), hidden_size=kw.pop("hidden_size", 3),
                        n_layers=kw.pop("n_layers", 1), mode=mode, **kw)


def noisy_seasonal(n=240, seed=0, sigma=0.3):
    t = np.arange(n)
    rng = np.random.default_rng(seed)
    return 20 + 5 * np.sin(2 * np.pi * t / 12) + 0.01 * t + sigma * rng.standard_normal(n)


@pytest.fixture
def series():
    return noisy_seasonal()
