"""Stacked LSTM regressor with exact backpropagation through time.

Gate convention: pre-activations ``a = x W^T + h U^T + b`` are split into
four blocks of ``hidden`` rows in the order input, forget, cell, output::

    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o)
    g = tanh(a_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Forward affine maps use ``np.einsum`` rather than BLAS so that each output
row is computed the same way whatever the batch size; predictions for one
network therefore do not depend on what else is in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, StaleCache
from .rng import Rng, derive_seed


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _affine(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("bd,hd->bh", x, w)


def he_normal_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Normal entries with std ``sqrt(2 / cols)``; ``cols`` is the fan-in."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    return Rng(seed).normal(rows * cols).reshape(rows, cols) * np.sqrt(2.0 / cols)


@dataclass
class LstmParams:
    W: np.ndarray  # (4 * hidden, input_dim)
    U: np.ndarray  # (4 * hidden, hidden)
    b: np.ndarray  # (4 * hidden,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        h4 = self.b.shape[0] if self.b.ndim == 1 else -1
        if h4 % 4 or self.W.ndim != 2 or self.W.shape[0] != h4 or self.U.shape != (h4, h4 // 4):
            raise DimensionMismatch(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")
        if not all(np.all(np.isfinite(a)) for a in (self.W, self.U, self.b)):
            raise DimensionMismatch("LSTM parameters must be finite")

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "LstmParams":
        return cls(np.zeros((4 * hidden, input_dim)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden))

    @classmethod
    def he_normal(cls, input_dim: int, hidden: int, seed: int) -> "LstmParams":
        return cls(
            he_normal_init(4 * hidden, input_dim, derive_seed(seed, 0)),
            he_normal_init(4 * hidden, hidden, derive_seed(seed, 1)),
            np.zeros(4 * hidden),
        )


@dataclass
class DenseParams:
    weights: np.ndarray  # (1, input_dim)
    bias: np.ndarray  # (1,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != 1 or self.bias.shape != (1,):
            raise DimensionMismatch(f"dense head needs weights (1, d) and one bias, got {self.weights.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DimensionMismatch("dense parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class LstmCache:
    xs: np.ndarray
    hs: np.ndarray  # (T + 1, B, H), hs[0] is h0
    cs: np.ndarray
    gates: np.ndarray  # (T, B, 4H) post-activation i, f, g, o
    tanh_c: np.ndarray


def lstm_forward(params: LstmParams, xs: np.ndarray, initial_state=None):
    """Run ``xs`` of shape (T, B, input_dim); returns ``(hs, (h_T, c_T), cache)``."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[2] != params.input_dim:
        raise DimensionMismatch(f"expected (T, B, {params.input_dim}) input, got {xs.shape}")
    T, B, _ = xs.shape
    H = params.hidden
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    if initial_state is not None:
        h0, c0 = initial_state
        hs[0], cs[0] = h0, c0
    gates = np.empty((T, B, 4 * H))
    tanh_c = np.empty((T, B, H))
    for t in range(T):
        a = _affine(xs[t], params.W) + _affine(hs[t], params.U) + params.b
        gates[t, :, : 2 * H] = sigmoid(a[:, : 2 * H])
        gates[t, :, 2 * H : 3 * H] = np.tanh(a[:, 2 * H : 3 * H])
        gates[t, :, 3 * H :] = sigmoid(a[:, 3 * H :])
        i, f, g, o = np.split(gates[t], 4, axis=1)
        cs[t + 1] = f * cs[t] + i * g
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = o * tanh_c[t]
    return hs[1:], (hs[T], cs[T]), LstmCache(xs, hs, cs, gates, tanh_c)


def lstm_backward(params: LstmParams, cache: LstmCache, dhs: np.ndarray):
    """Gradients given dL/dh_t for every step; returns ``(grads, dxs)``."""
    T, B, _ = cache.xs.shape
    H = params.hidden
    dW = np.zeros_like(params.W)
    dU = np.zeros_like(params.U)
    db = np.zeros_like(params.b)
    dxs = np.zeros_like(cache.xs)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    for t in reversed(range(T)):
        i, f, g, o = np.split(cache.gates[t], 4, axis=1)
        dh = dhs[t] + dh_next
        dc = dh * o * (1.0 - cache.tanh_c[t] ** 2) + dc_next
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H : 2 * H] = dc * cache.cs[t] * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H :] = dh * cache.tanh_c[t] * o * (1.0 - o)
        dW += da.T @ cache.xs[t]
        dU += da.T @ cache.hs[t]
        db += da.sum(axis=0)
        dxs[t] = da @ params.W
        dh_next = da @ params.U
        dc_next = dc * f
    return {"W": dW, "U": dU, "b": db}, dxs


@dataclass
class ForwardCache:
    owner: "StackedLstmRegressor"
    version: int
    lstm1: LstmCache
    lstm2: LstmCache
    features: np.ndarray
    output: np.ndarray


class StackedLstmRegressor:
    """Two stacked LSTMs, the extra scalar concatenated to the last hidden
    state of the second one, and a sigmoid dense head.

    Inputs are ``(B, T, input_dim)`` sequences and a ``(B,)`` side input.
    """

    def __init__(self, lstm1: LstmParams, lstm2: LstmParams, dense: DenseParams):
        if lstm2.input_dim != lstm1.hidden:
            raise DimensionMismatch(f"second LSTM expects {lstm2.input_dim} inputs, first produces {lstm1.hidden}")
        if dense.input_dim != lstm2.hidden + 1:
            raise DimensionMismatch(f"dense head expects {dense.input_dim} inputs, needs {lstm2.hidden + 1}")
        self.lstm1 = lstm1
        self.lstm2 = lstm2
        self.dense = dense
        self.version = 0

    @classmethod
    def initialize(cls, input_dim: int, hidden1: int, hidden2: int, seed: int) -> "StackedLstmRegressor":
        return cls(
            LstmParams.he_normal(input_dim, hidden1, derive_seed(seed, 1)),
            LstmParams.he_normal(hidden1, hidden2, derive_seed(seed, 2)),
            DenseParams(he_normal_init(1, hidden2 + 1, derive_seed(seed, 3)), np.zeros(1)),
        )

    @property
    def input_dim(self) -> int:
        return self.lstm1.input_dim

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every parameter array, keyed by a stable name."""
        return {
            "lstm1.W": self.lstm1.W,
            "lstm1.U": self.lstm1.U,
            "lstm1.b": self.lstm1.b,
            "lstm2.W": self.lstm2.W,
            "lstm2.U": self.lstm2.U,
            "lstm2.b": self.lstm2.b,
            "dense.weights": self.dense.weights,
            "dense.bias": self.dense.bias,
        }

    def touch(self) -> None:
        """Mark parameters as changed; outstanding caches become stale."""
        self.version += 1

    def forward(self, x: np.ndarray, side: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        side = np.asarray(side, dtype=np.float64).reshape(-1)
        if x.ndim != 3 or x.shape[2] != self.input_dim or side.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"expected (B, T, {self.input_dim}) and (B,), got {x.shape} and {side.shape}")
        xs = np.transpose(x, (1, 0, 2))
        h1, _, c1 = lstm_forward(self.lstm1, xs)
        _, (h_last, _), c2 = lstm_forward(self.lstm2, h1)
        features = np.concatenate([h_last, side[:, None]], axis=1)
        y = sigmoid(_affine(features, self.dense.weights)[:, 0] + self.dense.bias[0])
        return y, ForwardCache(self, self.version, c1, c2, features, y)

    def predict(self, x: np.ndarray, side: np.ndarray) -> np.ndarray:
        return self.forward(x, side)[0]

    def backward(self, cache: ForwardCache, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dy * y)`` w.r.t. every parameter."""
        if cache.owner is not self or cache.version != self.version:
            raise StaleCache("cache does not come from the current parameters")
        dy = np.asarray(dy, dtype=np.float64).reshape(-1)
        y = cache.output
        dz = dy * y * (1.0 - y)
        grads = {
            "dense.weights": dz[None, :] @ cache.features,
            "dense.bias": np.array([dz.sum()]),
        }
        dfeat = dz[:, None] * self.dense.weights
        T, B, _ = cache.lstm2.xs.shape
        dh2 = np.zeros((T, B, self.lstm2.hidden))
        dh2[-1] = dfeat[:, : self.lstm2.hidden]
        g2, dh1 = lstm_backward(self.lstm2, cache.lstm2, dh2)
        g1, _ = lstm_backward(self.lstm1, cache.lstm1, dh1)
        for k, v in g1.items():
            grads[f"lstm1.{k}"] = v
        for k, v in g2.items():
            grads[f"lstm2.{k}"] = v
        return grads


def squared_error_loss(model: StackedLstmRegressor, x, side, target) -> tuple[float, dict[str, np.ndarray]]:
    """Sum of squared errors over the batch and its exact gradient."""
    y, cache = model.forward(x, side)
    r = y - np.asarray(target, dtype=np.float64)
    return float(np.sum(r * r)), model.backward(cache, 2.0 * r)


@dataclass
class RmspropState:
    learning_rate: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: RmspropState):
    """One in-place RMSprop update.

    ``acc <- rho acc + (1 - rho) g^2`` and
    ``p <- p - lr (g + weight_decay p) / (sqrt(acc) + eps)``.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        p -= state.learning_rate * (g + state.weight_decay * p) / (np.sqrt(acc) + state.epsilon)
    return params, state


def numerical_gradient(f: Callable[[], float], array: np.ndarray, index, step: float = 1e-5) -> float:
    """Central difference of ``f`` w.r.t. ``array[index]`` (restored afterwards)."""
    old = array[index]
    array[index] = old + step
    up = f()
    array[index] = old - step
    down = f()
    array[index] = old
    return (up - down) / (2.0 * step)


def gradient_check(
    model: StackedLstmRegressor,
    x,
    side,
    target,
    step: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> dict[str, float]:
    """Largest relative error per parameter between backprop and central differences.

    The relative error of an entry is ``|a - n| / max(|a|, |n|, 1e-6)``.
    With ``max_entries`` only that many uniformly chosen entries per array
    are checked.
    """
    _, grads = squared_error_loss(model, x, side, target)

    def loss() -> float:
        y, _ = model.forward(x, side)
        r = y - target
        return float(np.sum(r * r))

    rng = Rng(seed)
    worst = {}
    for name, p in model.parameters().items():
        flat = p.reshape(-1)
        idx = range(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = sorted(rng.permutation(flat.size)[:max_entries])
        err = 0.0
        for k in idx:
            n = numerical_gradient(loss, flat, k, step)
            a = grads[name].reshape(-1)[k]
            err = max(err, abs(a - n) / max(abs(a), abs(n), 1e-6))
        worst[name] = err
    return worst
