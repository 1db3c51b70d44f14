import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wolfcast import lstm as M
from wolfcast.lstm import LstmLayerWeights, LstmState, TrainConfig


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def random_layer(rng, hidden, input_size, scale=1.0):
    layer = LstmLayerWeights.zeros(hidden, input_size)
    for name in layer.names:
        setattr(layer, name, scale * rng.standard_normal(getattr(layer, name).shape))
    return layer


# -- cell ---------------------------------------------------------------------------

def test_zero_cell():
    layer = LstmLayerWeights.zeros(3, 2)
    state, gates = M.cell_forward(layer, np.zeros(2), LstmState(np.zeros(3), np.zeros(3)))
    for g in ("f", "i", "o"):
        assert np.all(gates[g] == 0.5)
    assert np.all(gates["c_tilde"] == 0) and np.all(state.C == 0) and np.all(state.h == 0)


def test_one_unit_cell_hand_evaluation():
    layer = LstmLayerWeights.zeros(1, 1)
    # columns are [h_prev, x]
    layer.W_f[:] = [[0.5, -0.3]]
    layer.b_f[:] = [0.1]
    layer.W_i[:] = [[-0.2, 0.8]]
    layer.b_i[:] = [0.0]
    layer.W_c[:] = [[0.7, 0.4]]
    layer.b_c[:] = [-0.1]
    layer.W_o[:] = [[0.3, 0.6]]
    layer.b_o[:] = [0.2]
    h0, c0, x = 0.25, -0.5, 1.5
    f = _sig(0.5 * h0 - 0.3 * x + 0.1)
    i = _sig(-0.2 * h0 + 0.8 * x)
    ct = math.tanh(0.7 * h0 + 0.4 * x - 0.1)
    c1 = f * c0 + i * ct
    o = _sig(0.3 * h0 + 0.6 * x + 0.2)
    h1 = o * math.tanh(c1)
    state, gates = M.cell_forward(layer, [x], LstmState(np.array([h0]), np.array([c0])))
    assert gates["f"][0] == pytest.approx(f, abs=1e-15)
    assert gates["i"][0] == pytest.approx(i, abs=1e-15)
    assert gates["c_tilde"][0] == pytest.approx(ct, abs=1e-15)
    assert state.C[0] == pytest.approx(c1, abs=1e-15)
    assert state.h[0] == pytest.approx(h1, abs=1e-15)


def test_cell_dimension_mismatch():
    layer = LstmLayerWeights.zeros(2, 1)
    with pytest.raises(ValueError):
        M.cell_forward(layer, np.zeros(2), LstmState(np.zeros(2), np.zeros(2)))


def test_gate_ranges_on_random_cells():
    rng = np.random.default_rng(0)
    layer = random_layer(rng, 4, 3)
    state = LstmState(np.zeros(4), np.zeros(4))
    # moderate scales: in double precision tanh rounds to +-1 beyond |x| ~ 19
    for step in range(10_000):
        if step % 100 == 0:
            layer = random_layer(rng, 4, 3, scale=rng.uniform(0.1, 1.0))
            state = LstmState(np.zeros(4), np.zeros(4))
        state, g = M.cell_forward(layer, rng.standard_normal(3), state)
        for name in ("f", "i", "o"):
            assert np.all((g[name] > 0) & (g[name] < 1))
        assert np.all((g["c_tilde"] > -1) & (g["c_tilde"] < 1))
        # cell state grows by less than one per step
        assert np.all(np.abs(state.C) < step % 100 + 1)


def test_sigmoid_is_stable_at_extremes():
    out = M.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(out))
    assert out[1] == 0.5


# -- network forward -------------------------------------------------------------------

def test_zero_network_outputs_head_bias():
    net = M.build_network(1, 4, 2, zero=True)
    net.head_b[:] = 0.37
    pred, _ = M.forward(net, np.arange(5.0))
    assert pred == 0.37


def test_window_of_one_is_single_cell():
    rng = np.random.default_rng(1)
    net = M.build_network(1, 3, 1, dense_size=0, seed=4)
    net.head_b[:] = rng.standard_normal(1)
    x = 0.8
    state, _ = M.cell_forward(net.layers[0], [x], LstmState(np.zeros(3), np.zeros(3)))
    expected = float(net.head_w @ state.h + net.head_b[0])
    assert M.forward(net, [x])[0] == pytest.approx(expected, abs=1e-15)


def test_stacked_forward_matches_cell_loop():
    rng = np.random.default_rng(2)
    net = M.build_network(1, 4, 3, dense_size=5, seed=9)
    for _, a in net.parameters():
        a[...] = rng.standard_normal(a.shape) * 0.5
    window = rng.standard_normal(7)
    seq = [np.array([v]) for v in window]
    for layer in net.layers:
        state = LstmState(np.zeros(4), np.zeros(4))
        outs = []
        for x in seq:
            state, _ = M.cell_forward(layer, x, state)
            outs.append(state.h)
        seq = outs
    dense = np.maximum(net.dense_W @ seq[-1] + net.dense_b, 0.0)
    expected = float(net.head_w @ dense + net.head_b[0])
    assert M.forward(net, window)[0] == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_order_sensitivity():
    net = M.build_network(1, 4, 2, seed=3)
    w = np.array([0.5, -1.0, 2.0, 0.1])
    swapped = w[[1, 0, 2, 3]]
    assert M.forward(net, w)[0] != M.forward(net, swapped)[0]


def test_forward_is_bit_reproducible():
    net = M.build_network(1, 6, 3, seed=5)
    w = np.linspace(-1, 1, 12)
    assert M.forward(net, w)[0] == M.forward(net, w)[0]
    # batching changes the BLAS reduction order, so only ulp-level agreement
    batch = np.stack([w, w[::-1]])
    np.testing.assert_allclose(M.predict(net, batch)[:1], [M.forward(net, w)[0]], rtol=1e-12)


def test_initialisation_bounds():
    net = M.build_network(1, 8, 2, seed=0)
    for layer in net.layers:
        bound = 1 / math.sqrt(layer.hidden + layer.input_size)
        for name in ("W_f", "W_i", "W_c", "W_o"):
            assert np.all(np.abs(getattr(layer, name)) <= bound)
        for name in ("b_f", "b_i", "b_c", "b_o"):
            assert np.all(getattr(layer, name) == 0)


# -- loss -----------------------------------------------------------------------------

def test_loss_examples():
    assert M.loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert M.loss([0.0, 0.0], [1.0, 3.0]) == 5.0
    with pytest.raises(ValueError):
        M.loss([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        M.loss([], [])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30),
       st.randoms())
def test_loss_permutation_invariant(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    p, t = zip(*pairs)
    ps, ts = zip(*shuffled)
    assert M.loss(p, t) == pytest.approx(M.loss(ps, ts), rel=1e-12, abs=1e-12)


# -- backward -------------------------------------------------------------------------

def test_zero_error_gives_zero_gradients():
    net = M.build_network(1, 4, 2, seed=1)
    pred, tape = M.forward(net, np.arange(4.0))
    for g in M.backward(net, tape, pred):
        assert np.all(g == 0)


def test_head_bias_gradient_by_hand():
    net = M.build_network(1, 4, 2, seed=1)
    pred, tape = M.forward(net, np.array([0.3, -0.2, 0.9]))
    grads = dict(zip([n for n, _ in net.parameters()], M.backward(net, tape, 1.25)))
    assert grads["head.b"][0] == pytest.approx(2 * (pred - 1.25), abs=1e-15)


def test_stale_tape_is_rejected():
    net = M.build_network(1, 3, 1, seed=0)
    _, tape = M.forward(net, np.arange(3.0))
    other = M.build_network(1, 3, 1, seed=1)
    with pytest.raises(ValueError):
        M.backward(other, tape, 0.0)
    with pytest.raises(ValueError):
        M.backward(net, tape, [0.0, 1.0])


def _random_net(seed, layers, hidden, cell="lstm"):
    net = M.build_network(1, hidden, layers, cell=cell, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for name, a in net.parameters():
        if name.endswith(("b_f", "b_i", "b_c", "b_o", "b", "dense.b", "head.b")):
            a[...] = 0.1 * rng.standard_normal(a.shape)
    return net


def test_gradient_check_two_layer_four_unit():
    net = _random_net(0, 2, 4)
    rng = np.random.default_rng(7)
    err = M.gradient_check(net, (rng.standard_normal(6), 0.7))
    assert 0 <= err < 1e-4


def test_gradient_check_batch_and_rnn_cell():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((3, 5))
    y = rng.standard_normal(3)
    assert M.gradient_check(_random_net(1, 2, 3), (X, y)) < 1e-4
    assert M.gradient_check(_random_net(2, 2, 3, cell="rnn"), (X, y)) < 1e-4


def test_gradient_check_without_dense_layer():
    net = M.build_network(1, 3, 2, dense_size=0, seed=4)
    assert M.gradient_check(net, (np.array([0.2, -0.4, 1.1]), -0.3)) < 1e-4


def test_finite_difference_truncation_scales_quadratically():
    net = _random_net(3, 2, 3)
    X = M._as_batch(np.array([0.9, -0.7, 1.3, 0.2]), 1)
    y = np.array([0.5])
    _, grads = M.gradients(net, X, y)
    W = net.layers[0].W_c
    exact = grads[[n for n, _ in net.parameters()].index("layer0.W_c")][0, 1]

    def fd_gap(h):
        orig = W[0, 1]
        W[0, 1] = orig + h
        up = M.loss(M.forward_batch(net, X)[0], y)
        W[0, 1] = orig - h
        down = M.loss(M.forward_batch(net, X)[0], y)
        W[0, 1] = orig
        return abs((up - down) / (2 * h) - exact)

    ratio = fd_gap(0.02) / fd_gap(0.01)
    assert 3.5 < ratio < 4.5


# -- training ---------------------------------------------------------------------------

def test_overfit_single_sample():
    net = M.build_network(1, 8, 3, seed=0)
    X = np.linspace(-1, 1, 48)[None, :]
    y = np.array([0.8])
    _, hist = M.train(net, (X, y), None, TrainConfig(max_epochs=200, seed=0))
    assert min(hist.train_loss) < 1e-4
    assert len(hist) <= 200


def test_zero_learning_rate_keeps_weights():
    net = M.build_network(1, 4, 2, seed=2)
    before = [a.copy() for _, a in net.parameters()]
    rng = np.random.default_rng(3)
    M.train(net, (rng.standard_normal((20, 6)), rng.standard_normal(20)), None,
            TrainConfig(learning_rate=0.0, max_epochs=5))
    for b, (_, a) in zip(before, net.parameters()):
        assert np.array_equal(a, b)


def test_training_is_deterministic_and_keeps_best_val():
    rng = np.random.default_rng(4)
    X, y = rng.standard_normal((40, 6)), rng.standard_normal(40)
    Xv, yv = rng.standard_normal((10, 6)), rng.standard_normal(10)
    cfg = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=30, patience=5, seed=1)
    a, ha = M.train(M.build_network(1, 4, 2, seed=0), (X, y), (Xv, yv), cfg)
    b, hb = M.train(M.build_network(1, 4, 2, seed=0), (X, y), (Xv, yv), cfg)
    assert ha.train_loss == hb.train_loss and ha.val_loss == hb.val_loss
    assert M.loss(M.predict(a, Xv), yv) == pytest.approx(min(ha.val_loss), rel=1e-12)
    assert len(ha) <= 30


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_epoch():
    rng = np.random.default_rng(5)
    X, y = rng.standard_normal((8, 4)), 1e200 * np.ones(8)
    with pytest.raises(M.DivergenceError, match="epoch 1"):
        M.train(M.build_network(1, 2, 1, seed=0), (X, y), None, TrainConfig(max_epochs=3))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


# -- serialization and estimator -----------------------------------------------------------

@pytest.mark.parametrize("cell, dense", [("lstm", None), ("lstm", 0), ("rnn", 3)])
def test_save_load_reproduces_outputs(tmp_path, cell, dense):
    net = M.build_network(1, 5, 2, dense_size=dense, cell=cell, seed=6)
    path = tmp_path / "net.json"
    M.save(net, path)
    back = M.load(path)
    X = np.random.default_rng(0).standard_normal((4, 9))
    assert np.array_equal(M.predict(net, X), M.predict(back, X))
    assert back.n_parameters() == net.n_parameters()


def test_load_rejects_bad_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("not json")
    with pytest.raises(ValueError):
        M.load(p)


def test_regressor_api():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((30, 5))
    y = X.sum(axis=1)
    reg = M.LSTMRegressor(hidden_size=4, n_layers=1, max_epochs=3).fit(X, y)
    assert reg.predict(X).shape == (30,)
    assert reg.get_params()["hidden_size"] == 4
    with pytest.raises(AttributeError):
        M.LSTMRegressor().predict(X)
