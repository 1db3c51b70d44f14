"""Stacked LSTM regressor in plain numpy.

Architecture: ``n_layers`` recurrent layers run over the input window, the
last hidden state of the top layer feeds a ReLU dense layer and then a linear
scalar head. Gradients are exact backpropagation through time; training uses
Adam on mini-batches. A vanilla ``tanh`` recurrent cell shares the same
machinery for ablation runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_positive_int

FORMAT_VERSION = 1
LSTM_GATES = ("f", "i", "c", "o")


class DivergenceError(RuntimeError):
    pass


def sigmoid(x):
    # split on sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmLayerWeights:
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    cell = "lstm"
    names = ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.hidden

    def stacked(self):
        W = np.concatenate([self.W_f, self.W_i, self.W_c, self.W_o], axis=0)
        b = np.concatenate([self.b_f, self.b_i, self.b_c, self.b_o])
        return W, b

    @classmethod
    def zeros(cls, hidden, input_size):
        return cls(*[np.zeros((hidden, hidden + input_size)) for _ in range(4)],
                   *[np.zeros(hidden) for _ in range(4)])


@dataclass
class RnnLayerWeights:
    W: np.ndarray
    b: np.ndarray

    cell = "rnn"
    names = ("W", "b")

    @property
    def hidden(self) -> int:
        return self.W.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden

    @classmethod
    def zeros(cls, hidden, input_size):
        return cls(np.zeros((hidden, hidden + input_size)), np.zeros(hidden))


LAYER_TYPES = {"lstm": LstmLayerWeights, "rnn": RnnLayerWeights}


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray


@dataclass
class LstmNetwork:
    """Recurrent stack, optional ReLU dense layer, scalar linear head.

    ``dense_W`` is ``None`` when the network has no dense layer; the head then
    reads the top hidden state directly.
    """

    layers: list
    dense_W: Optional[np.ndarray]
    dense_b: Optional[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def cell(self) -> str:
        return self.layers[0].cell

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def hidden_size(self) -> int:
        return self.layers[0].hidden

    def parameters(self):
        """``(name, array)`` pairs in a fixed order; arrays are live references."""
        out = []
        for k, layer in enumerate(self.layers):
            out += [(f"layer{k}.{n}", getattr(layer, n)) for n in layer.names]
        if self.dense_W is not None:
            out += [("dense.W", self.dense_W), ("dense.b", self.dense_b)]
        out += [("head.w", self.head_w), ("head.b", self.head_b)]
        return out

    def n_parameters(self) -> int:
        return int(sum(a.size for _, a in self.parameters()))

    def copy(self) -> "LstmNetwork":
        return LstmNetwork(
            [type(l)(*[getattr(l, n).copy() for n in l.names]) for l in self.layers],
            None if self.dense_W is None else self.dense_W.copy(),
            None if self.dense_b is None else self.dense_b.copy(),
            self.head_w.copy(), self.head_b.copy())

    def load_vector(self, arrays) -> None:
        for (_, dst), src in zip(self.parameters(), arrays):
            dst[...] = src


def build_network(input_size=1, hidden_size=128, n_layers=3, dense_size=None, cell="lstm",
                  seed=0, zero=False) -> LstmNetwork:
    """Create a network with weights uniform in +-1/sqrt(fan_in) and zero biases.

    ``dense_size=None`` uses ``hidden_size``; ``dense_size=0`` omits the dense layer.
    """
    check_positive_int(input_size, "input_size")
    check_positive_int(hidden_size, "hidden_size")
    check_positive_int(n_layers, "n_layers")
    if cell not in LAYER_TYPES:
        raise ValueError(f"cell must be one of {sorted(LAYER_TYPES)}, got {cell!r}")
    dense_size = hidden_size if dense_size is None else dense_size
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        if zero:
            return np.zeros(shape)
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    layers = []
    n_in = input_size
    kind = LAYER_TYPES[cell]
    for _ in range(n_layers):
        layer = kind.zeros(hidden_size, n_in)
        for name in layer.names:
            if name.startswith("W"):
                setattr(layer, name, uniform(getattr(layer, name).shape, hidden_size + n_in))
        layers.append(layer)
        n_in = hidden_size
    if dense_size:
        dense_W, dense_b = uniform((dense_size, hidden_size), hidden_size), np.zeros(dense_size)
        top = dense_size
    else:
        dense_W = dense_b = None
        top = hidden_size
    return LstmNetwork(layers, dense_W, dense_b, uniform((top,), top), np.zeros(1))


# -- forward -------------------------------------------------------------------

def cell_forward(weights: LstmLayerWeights, x, state: LstmState):
    """One LSTM step; returns ``(new_state, gates)`` with gate dict ``f, i, o, c_tilde``."""
    x = np.asarray(x, dtype=float)
    H = weights.hidden
    if x.shape != (weights.input_size,) or state.h.shape != (H,) or state.C.shape != (H,):
        raise ValueError("dimension mismatch between weights, input and state")
    z = np.concatenate([state.h, x])
    f = sigmoid(weights.W_f @ z + weights.b_f)
    i = sigmoid(weights.W_i @ z + weights.b_i)
    c_tilde = np.tanh(weights.W_c @ z + weights.b_c)
    C = f * state.C + i * c_tilde
    o = sigmoid(weights.W_o @ z + weights.b_o)
    h = o * np.tanh(C)
    return LstmState(h, C), {"f": f, "i": i, "o": o, "c_tilde": c_tilde}


@dataclass
class Tape:
    """Activations cached by :func:`forward` for :func:`backward`."""

    X: np.ndarray
    layer_caches: list
    top_h: np.ndarray
    dense_pre: Optional[np.ndarray]
    dense_out: np.ndarray
    prediction: np.ndarray
    network_id: int = field(default=0, repr=False)


def _as_batch(X, input_size) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :, None]
    elif X.ndim == 2:
        X = X[:, :, None] if input_size == 1 else X[None]
    if X.ndim != 3 or X.shape[2] != input_size or X.shape[1] < 1:
        raise ValueError(f"windows must have shape (batch, L, {input_size}), got {X.shape}")
    return X


def _layer_forward(layer, seq: np.ndarray):
    B, L, _ = seq.shape
    H = layer.hidden
    h = np.zeros((B, H))
    outs = np.empty((B, L, H))
    if layer.cell == "lstm":
        W, b = layer.stacked()
        c = np.zeros((B, H))
        cache = {"z": [], "f": [], "i": [], "g": [], "o": [], "c_prev": [], "tc": []}
        for t in range(L):
            z = np.concatenate([h, seq[:, t]], axis=1)
            a = z @ W.T + b
            f = sigmoid(a[:, :H])
            i = sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = sigmoid(a[:, 3 * H:])
            cache["c_prev"].append(c)
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            for k, v in (("z", z), ("f", f), ("i", i), ("g", g), ("o", o), ("tc", tc)):
                cache[k].append(v)
            outs[:, t] = h
    else:
        cache = {"z": [], "h": []}
        for t in range(L):
            z = np.concatenate([h, seq[:, t]], axis=1)
            h = np.tanh(z @ layer.W.T + layer.b)
            cache["z"].append(z)
            cache["h"].append(h)
            outs[:, t] = h
    return outs, cache


def forward_batch(network: LstmNetwork, X):
    """Predictions for a batch of windows ``(B, L, input_size)`` and the tape."""
    X = _as_batch(X, network.input_size)
    seq = X
    caches = []
    for layer in network.layers:
        seq, cache = _layer_forward(layer, seq)
        caches.append(cache)
    top = seq[:, -1]
    if network.dense_W is not None:
        pre = top @ network.dense_W.T + network.dense_b
        out = np.maximum(pre, 0.0)
    else:
        pre, out = None, top
    pred = out @ network.head_w + network.head_b[0]
    return pred, Tape(X, caches, top, pre, out, pred, id(network))


def forward(network: LstmNetwork, window):
    """Single-window forward pass: ``(prediction, tape)``."""
    pred, tape = forward_batch(network, _as_batch(window, network.input_size)[:1])
    return float(pred[0]), tape


def predict(network: LstmNetwork, X, batch_size=1024) -> np.ndarray:
    X = _as_batch(X, network.input_size)
    return np.concatenate([forward_batch(network, X[s:s + batch_size])[0]
                           for s in range(0, X.shape[0], batch_size)])


def loss(predictions, targets) -> float:
    """Mean squared error."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("loss of an empty batch is undefined")
    return float(np.mean((p - t) ** 2))


# -- backward ------------------------------------------------------------------

def _layer_backward(layer, cache, d_out: np.ndarray):
    """Backprop through one layer; returns (grads dict, d_input_seq)."""
    B, L, H = d_out.shape
    dh_next = np.zeros((B, H))
    d_in = np.empty((B, L, layer.input_size))
    if layer.cell == "lstm":
        W, _ = layer.stacked()
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        dc_next = np.zeros((B, H))
        for t in range(L - 1, -1, -1):
            f, i, g, o, tc = (cache[k][t] for k in ("f", "i", "g", "o", "tc"))
            dh = d_out[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = np.concatenate([dc * cache["c_prev"][t] * f * (1.0 - f),
                                 dc * g * i * (1.0 - i),
                                 dc * i * (1.0 - g * g),
                                 do * o * (1.0 - o)], axis=1)
            dc_next = dc * f
            dW += da.T @ cache["z"][t]
            db += da.sum(axis=0)
            dz = da @ W
            dh_next = dz[:, :H]
            d_in[:, t] = dz[:, H:]
        grads = {}
        for k, gate in enumerate(LSTM_GATES):
            grads[f"W_{gate}"] = dW[k * H:(k + 1) * H]
            grads[f"b_{gate}"] = db[k * H:(k + 1) * H]
    else:
        dW = np.zeros_like(layer.W)
        db = np.zeros(H)
        for t in range(L - 1, -1, -1):
            h = cache["h"][t]
            da = (d_out[:, t] + dh_next) * (1.0 - h * h)
            dW += da.T @ cache["z"][t]
            db += da.sum(axis=0)
            dz = da @ layer.W
            dh_next = dz[:, :H]
            d_in[:, t] = dz[:, H:]
        grads = {"W": dW, "b": db}
    return grads, d_in


def backward_from_output(network: LstmNetwork, tape: Tape, d_pred: np.ndarray):
    """Gradients of ``sum(d_pred * prediction)`` w.r.t. every parameter, in
    :meth:`LstmNetwork.parameters` order."""
    if tape.network_id != id(network) or len(tape.layer_caches) != len(network.layers):
        raise ValueError("stale tape: it was not produced by this network")
    d_pred = np.asarray(d_pred, dtype=float)
    head_grads = [tape.dense_out.T @ d_pred, np.array([d_pred.sum()])]
    d_out = np.outer(d_pred, network.head_w)
    dense_grads = []
    if network.dense_W is not None:
        d_pre = d_out * (tape.dense_pre > 0)
        dense_grads = [d_pre.T @ tape.top_h, d_pre.sum(axis=0)]
        d_top = d_pre @ network.dense_W
    else:
        d_top = d_out
    B, L, _ = tape.X.shape
    d_seq = np.zeros((B, L, network.hidden_size))
    d_seq[:, -1] = d_top
    layer_grads = []
    for layer, cache in zip(reversed(network.layers), reversed(tape.layer_caches)):
        grads, d_seq = _layer_backward(layer, cache, d_seq)
        layer_grads.append([grads[n] for n in layer.names])
    out = []
    for g in reversed(layer_grads):
        out += g
    return out + dense_grads + head_grads


def backward(network: LstmNetwork, tape: Tape, target):
    """Gradients of the mean squared error of the taped batch against ``target``.

    For a single window this is the gradient of ``(prediction - target)**2``.
    Returned as a list aligned with :meth:`LstmNetwork.parameters`.
    """
    t = np.atleast_1d(np.asarray(target, dtype=float))
    if t.shape != tape.prediction.shape:
        raise ValueError("target does not match the taped batch")
    d_pred = 2.0 * (tape.prediction - t) / t.size
    return backward_from_output(network, tape, d_pred)


def gradients(network: LstmNetwork, X, y):
    pred, tape = forward_batch(network, X)
    return loss(pred, y), backward(network, tape, y)


def gradient_check(network: LstmNetwork, sample, step=1e-4, floor=1e-7) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The default ``step`` balances truncation error (order ``step**2``) against
    rounding in the loss difference, which dominates near-zero entries for
    smaller steps.

    ``sample`` is ``(window, target)`` or a batch ``(X, y)``. The relative error
    of each entry is ``|a - n| / max(|a|, |n|, floor)``, so gradients that are
    zero to rounding are compared absolutely against ``floor``.
    """
    X, y = sample
    X = _as_batch(X, network.input_size)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _, analytic = gradients(network, X, y)
    worst = 0.0
    for (_, arr), grad in zip(network.parameters(), analytic):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss(forward_batch(network, X)[0], y)
            flat[j] = orig - step
            down = loss(forward_batch(network, X)[0], y)
            flat[j] = orig
            num = (up - down) / (2.0 * step)
            rel = abs(gflat[j] - num) / max(abs(gflat[j]), abs(num), floor)
            worst = max(worst, rel)
    return worst


# -- training --------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "max_epochs", "patience"):
            check_positive_int(getattr(self, name), name)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.train_loss)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(network: LstmNetwork, train_windows, val_windows=None,
          config: TrainConfig = TrainConfig()):
    """Fit ``network`` in place with Adam and early stopping.

    ``train_windows`` and ``val_windows`` are ``(X, y)`` pairs. With validation
    data the weights from the epoch with the lowest validation loss are kept.
    Returns ``(network, history)``.
    """
    X, y = train_windows
    X = _as_batch(X, network.input_size)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise ValueError("training set must be non-empty with one target per window")
    if val_windows is not None:
        Xv = _as_batch(val_windows[0], network.input_size)
        yv = np.asarray(val_windows[1], dtype=float).ravel()
        if Xv.shape[0] == 0:
            val_windows = None
    rng = np.random.default_rng(config.seed)
    params = [a for _, a in network.parameters()]
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    history = TrainHistory()
    best_val, best_weights, stale = np.inf, None, 0
    n = X.shape[0]
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            batch_loss, grads = gradients(network, X[idx], y[idx])
            if not np.isfinite(batch_loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}")
            total += batch_loss * idx.size
            opt.step(grads)
        history.train_loss.append(total / n)
        if val_windows is None:
            continue
        vl = loss(predict(network, Xv), yv)
        if not np.isfinite(vl):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch + 1}")
        history.val_loss.append(vl)
        if vl < best_val:
            best_val, stale, history.best_epoch = vl, 0, epoch
            best_weights = [p.copy() for p in params]
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_weights is not None:
        network.load_vector(best_weights)
    return network, history


# -- serialization ---------------------------------------------------------------

def to_dict(network: LstmNetwork) -> dict:
    return {
        "format": "wolfcast.lstm",
        "version": FORMAT_VERSION,
        "cell": network.cell,
        "input_size": network.input_size,
        "hidden_size": network.hidden_size,
        "n_layers": len(network.layers),
        "dense_size": 0 if network.dense_W is None else int(network.dense_W.shape[0]),
        "weights": {name: {"shape": list(a.shape), "values": a.ravel().tolist()}
                    for name, a in network.parameters()},
    }


def from_dict(data: dict) -> LstmNetwork:
    if data.get("format") != "wolfcast.lstm":
        raise ValueError("not an LSTM model file")
    net = build_network(data["input_size"], data["hidden_size"], data["n_layers"],
                        data["dense_size"], data["cell"], zero=True)
    arrays = []
    for name, ref in net.parameters():
        entry = data["weights"][name]
        arr = np.asarray(entry["values"], dtype=float)
        if tuple(entry["shape"]) != ref.shape or arr.size != ref.size:
            raise ValueError(f"shape mismatch for {name}")
        arrays.append(arr.reshape(ref.shape))
    net.load_vector(arrays)
    return net


def save(network: LstmNetwork, path) -> None:
    Path(path).write_text(json.dumps(to_dict(network)) + "\n")


def load(path) -> LstmNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt model file {path}: {exc}") from None
    return from_dict(data)


# -- estimator ---------------------------------------------------------------------

class LSTMRegressor(BaseEstimator, RegressorMixin):
    """Window-to-scalar regressor.

    ``X`` has shape ``(n_samples, L)`` (univariate windows) or
    ``(n_samples, L, n_features)``.
    """

    def __init__(self, hidden_size=128, n_layers=3, dense_size=None, cell="lstm",
                 learning_rate=0.001, batch_size=64, max_epochs=200, patience=20, seed=0):
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.dense_size = dense_size
        self.cell = cell
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs,
                           self.patience, self.seed)

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=float)
        n_features = 1 if X.ndim == 2 else X.shape[2]
        self.network_ = build_network(n_features, self.hidden_size, self.n_layers,
                                      self.dense_size, self.cell, self.seed)
        val = None if X_val is None else (X_val, y_val)
        _, self.history_ = train(self.network_, (X, y), val, self.train_config())
        return self

    def predict(self, X):
        if not hasattr(self, "network_"):
            raise AttributeError("LSTMRegressor is not fitted yet; call fit first")
        return predict(self.network_, X)
