"""Numerical kernels shared by every stage of the pipeline.

Small dense networks with hand-written backward passes, AdamW, PCA, signal
filters and the log-normal fit. Arrays are plain ``numpy.ndarray``; weight
matrices are stored ``(out, in)`` and batched inputs are rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter as _scipy_savgol
from scipy.special import expit, ndtr

from lanecoop import kernels
from lanecoop.errors import ConfigError, DomainError, NumericError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity", "softmax")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sigmoid(z):
    return expit(np.asarray(z, dtype=float))


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softmax":
        return softmax(z)
    return z


def _activate_backward(kind: str, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    # expressed through the activated output y
    if kind == "relu":
        return g * (y > 0)
    if kind == "sigmoid":
        return g * y * (1.0 - y)
    if kind == "tanh":
        return g * (1.0 - y * y)
    if kind == "softmax":
        return y * (g - np.sum(g * y, axis=-1, keepdims=True))
    return g


# --------------------------------------------------------------------- MLP


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"


@dataclass
class MlpParams:
    layers: list[Layer]

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {layer.activation!r}")
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise ConfigError("softmax is only allowed on the final layer")
            if layer.W.ndim != 2 or layer.b.shape != (layer.W.shape[0],):
                raise ShapeError(f"layer {i}: W {layer.W.shape} vs b {layer.b.shape}")
            if i and layer.W.shape[1] != self.layers[i - 1].W.shape[0]:
                raise ShapeError(
                    f"layer {i} expects {layer.W.shape[1]} inputs, "
                    f"previous layer emits {self.layers[i - 1].W.shape[0]}"
                )

    @classmethod
    def init(cls, sizes, activations, rng: np.random.Generator) -> "MlpParams":
        """He-uniform weights, zero biases. ``activations`` has one entry per layer."""
        if len(activations) != len(sizes) - 1:
            raise ConfigError("need one activation per layer")
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            bound = math.sqrt(6.0 / n_in) if act == "relu" else math.sqrt(6.0 / (n_in + n_out))
            layers.append(Layer(rng.uniform(-bound, bound, (n_out, n_in)), np.zeros(n_out), act))
        return cls(layers)

    @classmethod
    def zeros(cls, sizes, activations) -> "MlpParams":
        return cls([Layer(np.zeros((o, i)), np.zeros(o), a)
                    for i, o, a in zip(sizes[:-1], sizes[1:], activations)])

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Named views of every parameter array (for the optimizer and checkpoints)."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}{i}.W"] = layer.W
            out[f"{prefix}{i}.b"] = layer.b
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


@dataclass
class MlpCache:
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {params.in_dim}")
    inputs, outputs = [], []
    h = x
    for layer in params.layers:
        inputs.append(h)
        h = _activate(layer.activation, h @ layer.W.T + layer.b)
        outputs.append(h)
    return h, MlpCache(inputs, outputs)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_output, prefix: str = ""):
    """Return ``(grads, grad_input)``; ``grads`` is keyed like ``params.arrays(prefix)``."""
    if len(cache.inputs) != len(params.layers) or any(
        inp.shape[-1] != layer.W.shape[1] for inp, layer in zip(cache.inputs, params.layers)
    ):
        raise ShapeError("cache does not belong to these parameters")
    g = np.asarray(grad_output, dtype=float)
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"grad_output {g.shape} vs output {cache.outputs[-1].shape}")
    grads = {}
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        gz = _activate_backward(layer.activation, cache.outputs[i], g)
        inp = cache.inputs[i]
        if gz.ndim == 1:
            grads[f"{prefix}{i}.W"] = np.outer(gz, inp)
            grads[f"{prefix}{i}.b"] = gz.copy()
        else:
            grads[f"{prefix}{i}.W"] = gz.T @ inp
            grads[f"{prefix}{i}.b"] = gz.sum(axis=0)
        g = gz @ layer.W
    return grads, g


# -------------------------------------------------------------------- LSTM


@dataclass
class LstmParams:
    """Gate blocks are stacked in the order input, forget, cell, output."""

    W: np.ndarray  # (4H, input_dim)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        four_h = self.U.shape[0]
        if four_h % 4 or self.U.shape != (four_h, four_h // 4):
            raise ShapeError(f"U must be (4H, H), got {self.U.shape}")
        if self.W.ndim != 2 or self.W.shape[0] != four_h or self.b.shape != (four_h,):
            raise ShapeError("W/b do not match U")

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int = 128, rng=None) -> "LstmParams":
        rng = rng if rng is not None else make_rng(0)
        k = 1.0 / math.sqrt(hidden_dim)
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim:2 * hidden_dim] = 1.0
        return cls(rng.uniform(-k, k, (4 * hidden_dim, input_dim)),
                   rng.uniform(-k, k, (4 * hidden_dim, hidden_dim)), b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int = 128) -> "LstmParams":
        return cls(np.zeros((4 * hidden_dim, input_dim)), np.zeros((4 * hidden_dim, hidden_dim)),
                   np.zeros(4 * hidden_dim))

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str):
        """``(W_gate, U_gate, b_gate)`` views for gate ``i``, ``f``, ``g`` or ``o``."""
        k = "ifgo".index(name)
        H = self.hidden_dim
        s = slice(k * H, (k + 1) * H)
        return self.W[s], self.U[s], self.b[s]

    def arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}W": self.W, f"{prefix}U": self.U, f"{prefix}b": self.b}

    def copy(self) -> "LstmParams":
        return LstmParams(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


def lstm_step(params: LstmParams, x_t, h_prev, c_prev, step: int = 0):
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.input_dim or np.shape(h_prev)[-1] != params.hidden_dim:
        raise ShapeError("LSTM input/state dimensions do not match parameters")
    if not (np.all(np.isfinite(h_prev)) and np.all(np.isfinite(c_prev))):
        raise NumericError(f"non-finite LSTM state entering step {step}")
    H = params.hidden_dim
    z = x_t @ params.W.T + h_prev @ params.U.T + params.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    if not np.all(np.isfinite(c)):
        raise NumericError(f"non-finite LSTM state at step {step}")
    return h, c, LstmCache(x_t, np.asarray(h_prev, float), np.asarray(c_prev, float), i, f, g, o, tanh_c)


def lstm_step_backward(params: LstmParams, cache: LstmCache, dh, dc):
    """Backward through one step. Returns ``(grads, dx, dh_prev, dc_prev)``."""
    do = dh * cache.tanh_c
    dc = dc + dh * cache.o * (1.0 - cache.tanh_c ** 2)
    di = dc * cache.g
    dg = dc * cache.i
    df = dc * cache.c_prev
    dc_prev = dc * cache.f
    dz = np.concatenate([di * cache.i * (1 - cache.i), df * cache.f * (1 - cache.f),
                         dg * (1 - cache.g ** 2), do * cache.o * (1 - cache.o)], axis=-1)
    if dz.ndim == 1:
        grads = {"W": np.outer(dz, cache.x), "U": np.outer(dz, cache.h_prev), "b": dz}
    else:
        grads = {"W": dz.T @ cache.x, "U": dz.T @ cache.h_prev, "b": dz.sum(axis=0)}
    return grads, dz @ params.W, dz @ params.U, dc_prev


def lstm_forward(params: LstmParams, xs):
    """Run a sequence ``(T, in)`` or batch ``(B, T, in)`` from zero state.

    Returns the final hidden state and the per-step caches.
    """
    xs = np.asarray(xs, dtype=float)
    batch_shape = xs.shape[:-2]
    h = np.zeros(batch_shape + (params.hidden_dim,))
    c = np.zeros_like(h)
    caches = []
    for t in range(xs.shape[-2]):
        h, c, cache = lstm_step(params, xs[..., t, :], h, c, step=t)
        caches.append(cache)
    return h, caches


def lstm_backward(params: LstmParams, caches, dh_last, prefix: str = ""):
    """BPTT from a gradient on the final hidden state. Returns ``(grads, dxs)``."""
    dh = np.asarray(dh_last, dtype=float)
    dc = np.zeros_like(dh)
    total = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    dxs = []
    for cache in reversed(caches):
        g, dx, dh, dc = lstm_step_backward(params, cache, dh, dc)
        for k in total:
            total[k] += g[k]
        dxs.append(dx)
    dxs = np.stack(dxs[::-1], axis=-2)
    return {prefix + k: v for k, v in total.items()}, dxs


# ------------------------------------------------------------------- AdamW


@dataclass
class AdamW:
    """AdamW with decoupled weight decay; updates parameter arrays in place."""

    lr: float = 1e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ShapeError(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {k} at step {self.step_count + 1}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for k, p in params.items():
            g = grads.get(k)
            if g is None:
                continue
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# --------------------------------------------------------------------- PCA


@dataclass
class Pca:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray

    def transform(self, data):
        return (np.asarray(data, float) - self.mean) @ self.components.T

    def inverse_transform(self, projected):
        return np.asarray(projected, float) @ self.components + self.mean


def pca_fit(data, n_components: int) -> Pca:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ShapeError("PCA expects a 2-D data matrix")
    n, d = data.shape
    if n_components > d:
        raise ConfigError(f"n_components={n_components} exceeds {d} columns")
    if not 1 <= n_components <= n:
        raise ConfigError(f"n_components={n_components} needs 1 <= k <= rows={n}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    comps = evecs[:, order].T
    # deterministic sign: largest-magnitude loading positive
    flip = comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)] < 0
    comps[flip] *= -1
    return Pca(mean, comps, np.clip(evals[order], 0.0, None))


def n_components_for_variance(data, fraction: float = 0.95) -> int:
    full = pca_fit(data, np.asarray(data).shape[1])
    ratio = np.cumsum(full.explained_variance) / max(full.explained_variance.sum(), 1e-300)
    return int(np.searchsorted(ratio, fraction - 1e-12) + 1)


# ----------------------------------------------------------------- filters


def savgol_filter(signal, window: int = 11, poly_order: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing; edges use the polynomial fitted to the end window."""
    signal = np.asarray(signal, dtype=float)
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"window must be odd, got {window}")
    if poly_order >= window:
        raise ConfigError("poly_order must be smaller than window")
    if window > len(signal):
        raise ConfigError(f"window {window} longer than signal ({len(signal)})")
    return _scipy_savgol(signal, window, poly_order, mode="interp")


def rolling_median(signal, window: int) -> np.ndarray:
    """Centered running median; the window shrinks symmetrically near the ends."""
    if window < 1:
        raise ConfigError("window must be >= 1")
    return kernels.rolling_median(np.ascontiguousarray(signal, dtype=float), int(window))


# ------------------------------------------------------------ distribution


def lognormal_fit(samples) -> tuple[float, float]:
    """Maximum-likelihood ``(mu, sigma)`` of a log-normal sample."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise DomainError("need at least two samples")
    if np.any(~(s > 0)):
        raise DomainError("log-normal samples must be strictly positive")
    logs = np.log(s)
    return float(logs.mean()), float(logs.std())


def lognormal_cdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return (np.log(x) >= mu).astype(float)
    return ndtr((np.log(x) - mu) / sigma)
