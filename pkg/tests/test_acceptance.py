"""Acceptance checks. Each test prints one PASS/FAIL line and then asserts."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from test_cli import SMALL, _pipeline, _snapshot
from test_metrics import _oracle
from test_sarima import simulate
from wolfcast import evaluation as E
from wolfcast import gwo, lstm, sarima, synth
from wolfcast.gwo import GwoConfig
from wolfcast.hybrid import HybridConfig, train_hybrid
from wolfcast.lstm import TrainConfig
from wolfcast.metrics import mae, r2, rmse, smape
from wolfcast.sarima import SarimaOrder


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_gwo_sphere(verdict):
    space = gwo.SearchSpace.uniform(-100, 100, 10)
    t0 = time.perf_counter()
    runs = [gwo.run(gwo.sphere, space, GwoConfig(pack_size=30, max_iter=50, seed=s))
            for s in range(20)]
    elapsed = time.perf_counter() - t0
    median = float(np.median([r.best_fitness for r in runs]))
    monotone = all(np.all(np.diff(r.history) <= 0) for r in runs)
    verdict(1, median < 1.0 and monotone and elapsed < 5.0,
            f"median best {median:.3g} (< 1.0), histories non-increasing {monotone}, "
            f"{elapsed:.2f} s (< 5 s)")


def test_criterion_2_sarima_recovery(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(3):
        w = simulate(588, phi=[0.5], Phi=[0.3], m=12, seed=100 + seed)
        y = sarima.integrate(w, 50 + 5 * np.sin(2 * np.pi * np.arange(12) / 12), 0, 1, 12)
        f = sarima.fit(y, SarimaOrder(1, 0, 0, 1, 1, 0, 12), GwoConfig(seed=seed, patience=10))
        worst = max(worst, abs(f.params.phi[0] - 0.5), abs(f.params.Phi[0] - 0.3))
    elapsed = time.perf_counter() - t0
    rng = np.random.default_rng(0)
    x = rng.normal(size=600).cumsum() + 100
    trip = float(np.max(np.abs(sarima.integrate(sarima.difference(x, 1, 1, 12), x[:13], 1, 1, 12) - x)))
    verdict(2, worst <= 0.15 and trip <= 1e-10 and elapsed < 60,
            f"worst coefficient error {worst:.3f} (<= 0.15), round trip {trip:.1e} (<= 1e-10), "
            f"{elapsed:.1f} s (< 60 s)")


def _bias_noise(net, seed):
    rng = np.random.default_rng(seed)
    for name, a in net.parameters():
        if ".b" in name or name.endswith("_b"):
            a[...] = 0.1 * rng.standard_normal(a.shape)
    return net


def test_criterion_3_lstm(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for layers in (1, 2, 3):
        for units in (1, 4, 8):
            net = _bias_noise(lstm.build_network(1, units, layers, seed=layers * 10 + units), units)
            worst = max(worst, lstm.gradient_check(net, (rng.standard_normal(6), 0.5)))

    gates_ok = True
    for step in range(10_000):
        if step % 100 == 0:
            layer = lstm.LstmLayerWeights.zeros(4, 3)
            for name in layer.names:
                setattr(layer, name, rng.uniform(0.1, 1.0) * rng.standard_normal(getattr(layer, name).shape))
            state = lstm.LstmState(np.zeros(4), np.zeros(4))
        prev_c = state.C
        state, g = lstm.cell_forward(layer, rng.standard_normal(3), state)
        gates_ok &= all(np.all((g[k] > 0) & (g[k] < 1)) for k in ("f", "i", "o"))
        gates_ok &= bool(np.all(np.abs(g["c_tilde"]) < 1))
        gates_ok &= bool(np.all(np.abs(state.C) <= np.abs(prev_c) + 1))

    net = lstm.build_network(1, 8, 3, seed=0)
    X = np.linspace(-1, 1, 48)[None, :]
    _, hist = lstm.train(net, (X, np.array([0.8])), None, TrainConfig(max_epochs=200, seed=0))
    final = min(hist.train_loss)
    elapsed = time.perf_counter() - t0
    verdict(3, worst < 1e-4 and gates_ok and final < 1e-4 and elapsed < 30,
            f"max gradient rel err {worst:.1e} (< 1e-4), gate ranges on 10^4 cells {gates_ok}, "
            f"overfit loss {final:.1e} (< 1e-4), {elapsed:.1f} s (< 30 s)")


@pytest.mark.slow
def test_criterion_4_hybrid_beats_sarima(verdict):
    t0 = time.perf_counter()
    ratios = []
    for seed in range(5):
        y = synth.generate(synth.SyntheticSpec(n=1000, period=24, seed=seed))["value"].to_numpy()
        cfg = HybridConfig(order=SarimaOrder(1, 0, 1, 1, 1, 1, 24),
                           gwo=GwoConfig(seed=seed, patience=10), train=TrainConfig(seed=seed),
                           window=48, hidden_size=8, n_layers=3)
        model = train_hybrid(y, cfg)
        test = y[model.split.test.start:model.split.test.stop]
        hyb = rmse(test, E.predict_segment(model, y, "test", "one_step"))
        base = rmse(test, E.predict_segment(model, y, "test", "one_step", base_only=True))
        ratios.append(hyb / base)
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(ratios))
    verdict(4, mean <= 0.9 and elapsed < 300,
            f"mean hybrid/SARIMA test RMSE {mean:.3f} (<= 0.9) over seeds 0-4 "
            f"[{', '.join(f'{r:.3f}' for r in ratios)}], {elapsed:.0f} s (< 300 s)")


def test_criterion_5_metrics(verdict):
    rng = np.random.default_rng(1)
    worst, ordered = 0.0, True
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        y = rng.normal(0, 5, n)
        p = y + rng.normal(0, 2, n)
        got = (mae(y, p), rmse(y, p), smape(y, p), r2(y, p))
        for g, e in zip(got, _oracle(y.tolist(), p.tolist())):
            worst = max(worst, abs(g - e) / max(1.0, abs(e)))
        ordered &= got[0] <= got[1]
    ex = (mae([1, 2, 3], [2, 3, 4]), rmse([1, 2, 3], [2, 3, 4]), smape([1, 2, 3], [2, 3, 4]),
          r2([1, 2, 3], [2, 3, 4]))
    ex_ok = ex[0] == 1 and ex[1] == 1 and abs(ex[2] - 45.079) < 5e-4 and ex[3] == -0.5
    verdict(5, worst <= 1e-12 and ordered and ex_ok,
            f"max deviation from oracle {worst:.1e} (<= 1e-12), mae <= rmse {ordered}, "
            f"worked example ({ex[0]:g}, {ex[1]:g}, {ex[2]:.3f}%, {ex[3]:g})")


def test_criterion_6_cv_and_significance(verdict):
    exact = True
    for n in (100, 999, 1000, 1234):
        for j, fold in enumerate(E.cv_folds(n, 5), start=1):
            end = math.floor(n * (Fraction(1, 2) + Fraction(4 * j, 50)))
            exact &= fold.train == range(0, end) and fold.test == range(end, end + n // 10)
    e = np.random.default_rng(2).uniform(1, 2, 5)
    p_same = E.compare_models(e, e)
    jitter = np.random.default_rng(3).normal(0, 0.01, 5)
    p_double = E.compare_models(e, 2 * e + jitter)
    verdict(6, exact and p_same == 1.0 and p_double < 0.05,
            f"fold boundaries exact {exact}, p identical {p_same}, p doubled {p_double:.1e} (< 0.05)")


def test_criterion_7_cli_reproducible(verdict, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL)
    _pipeline(str(cfg), tmp_path / "a")
    _pipeline(str(cfg), tmp_path / "b")
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    diff = sorted(k for k in a if a[k] != b.get(k))
    verdict(7, a.keys() == b.keys() and not diff,
            f"{len(a)} output files across every command, differing: {diff or 'none'}")


def test_criterion_8_parameter_count(verdict):
    tiny = lstm.build_network(1, 1, 1, dense_size=0).n_parameters()
    scaling = all(lstm.build_network(i, h, 1, dense_size=0).n_parameters() - (h + 1)
                  == 4 * (h * (h + i) + h) for h in range(1, 17) for i in range(1, 9))
    verdict(8, tiny == 14 and scaling,
            f"1-unit network with scalar head has {tiny} parameters (14), "
            f"per-layer 4(h(h+i)+h) holds {scaling}")
