import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wolfcast.metrics import MetricsReport, mae, r2, rmse, smape


def _oracle(y, p):
    n = len(y)
    abs_err = [abs(a - b) for a, b in zip(y, p)]
    mae_ = math.fsum(abs_err) / n
    rmse_ = math.sqrt(math.fsum(e * e for e in abs_err) / n)
    terms = []
    for a, b in zip(y, p):
        den = (abs(a) + abs(b)) / 2
        terms.append(0.0 if den == 0 else abs(a - b) / den)
    smape_ = 100 * math.fsum(terms) / n
    mean = math.fsum(y) / n
    ss_tot = math.fsum((a - mean) ** 2 for a in y)
    ss_res = math.fsum((a - b) ** 2 for a, b in zip(y, p))
    return mae_, rmse_, smape_, 1 - ss_res / ss_tot


def test_worked_example():
    y, p = [1.0, 2.0, 3.0], [2.0, 3.0, 4.0]
    assert mae(y, p) == 1.0
    assert rmse(y, p) == 1.0
    assert smape(y, p) == pytest.approx(100 * (1 / 1.5 + 1 / 2.5 + 1 / 3.5) / 3, abs=1e-12)
    assert smape(y, p) == pytest.approx(45.079, abs=5e-4)
    assert r2(y, p) == -0.5


def test_against_direct_arithmetic():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        y = rng.normal(0, rng.uniform(0.1, 10), n)
        p = y + rng.normal(0, rng.uniform(0.01, 5), n)
        got = (mae(y, p), rmse(y, p), smape(y, p), r2(y, p))
        for g, e in zip(got, _oracle(y.tolist(), p.tolist())):
            assert abs(g - e) <= 1e-12 * max(1.0, abs(e))
        assert got[0] <= got[1] + 1e-15


def test_perfect_prediction():
    y = np.array([3.0, -1.0, 2.0])
    rep = MetricsReport.score(y, y)
    assert (rep.mae, rep.rmse, rep.smape_percent, rep.r2, rep.n) == (0.0, 0.0, 0.0, 1.0, 3)


def test_smape_zero_pairs_and_range():
    assert smape([0.0, 0.0], [0.0, 0.0]) == 0.0
    assert smape([1.0], [-1.0]) == 200.0
    assert smape([0.0, 2.0], [0.0, 2.0]) == 0.0


def test_r2_constant_target():
    with pytest.raises(ValueError):
        r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert math.isnan(MetricsReport.score([2.0, 2.0], [1.0, 2.0]).r2)


def test_shape_errors():
    with pytest.raises(ValueError):
        mae([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        rmse([], [])


@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=50))
@settings(max_examples=80, deadline=None)
def test_mae_bounded_by_rmse(pairs):
    y, p = map(np.array, zip(*pairs))
    assert mae(y, p) <= rmse(y, p) * (1 + 1e-12) + 1e-12
    assert 0.0 <= smape(y, p) <= 200.0 + 1e-9


def test_report_dict_keys():
    d = MetricsReport.score([1.0, 2.0, 4.0], [1.5, 2.0, 3.0]).to_dict()
    assert set(d) == {"mae", "rmse", "smape_percent", "r2", "n"}
