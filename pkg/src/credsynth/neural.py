"""Small dense networks with hand-written reverse-mode gradients and Adam."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "softmax", "identity")
LEAKY_SLOPE = 0.2
PARAM_FORMAT_VERSION = 1


@dataclass
class Layer:
    """``act(x @ W + b)``; a residual layer emits ``concat(x, act(x @ W + b))``.

    ``spans`` lists ``(start, stop)`` blocks for the softmax activation; None
    means the whole output is one block.
    """

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"
    residual: bool = False
    spans: list[tuple[int, int]] | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.b.shape != (self.W.shape[1],):
            raise ValueError("bias width must match weight columns")

    @property
    def n_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1] + (self.W.shape[0] if self.residual else 0)


def _activate(z: np.ndarray, layer: Layer) -> np.ndarray:
    act = layer.activation
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if act == "tanh":
        return np.tanh(z)
    if act == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if act == "softmax":
        out = np.empty_like(z)
        for a, b in layer.spans or [(0, z.shape[1])]:
            e = np.exp(z[:, a:b] - z[:, a:b].max(axis=1, keepdims=True))
            out[:, a:b] = e / e.sum(axis=1, keepdims=True)
        return out
    return z


def _activation_grad(z: np.ndarray, h: np.ndarray, g: np.ndarray, layer: Layer) -> np.ndarray:
    """Gradient w.r.t. pre-activation z given upstream gradient g on h = act(z)."""
    act = layer.activation
    if act == "relu":
        return g * (z > 0)
    if act == "leaky_relu":
        return g * np.where(z > 0, 1.0, LEAKY_SLOPE)
    if act == "tanh":
        return g * (1.0 - h * h)
    if act == "sigmoid":
        return g * h * (1.0 - h)
    if act == "softmax":
        out = np.empty_like(g)
        for a, b in layer.spans or [(0, z.shape[1])]:
            p = h[:, a:b]
            gs = g[:, a:b]
            out[:, a:b] = p * (gs - (gs * p).sum(axis=1, keepdims=True))
        return out
    return g


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ValueError(f"layer widths do not chain: {prev.n_out} -> {nxt.n_in}")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward(self, x: np.ndarray, keep: bool = False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"expected input of width {self.n_in}, got shape {x.shape}")
        cache = []
        h = x
        for layer in self.layers:
            z = h @ layer.W + layer.b
            a = _activate(z, layer)
            if keep:
                cache.append((h, z, a))
            h = np.concatenate([h, a], axis=1) if layer.residual else a
        return (h, cache) if keep else h

    def backward(self, cache, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Return (parameter gradients in ``params()`` order, gradient w.r.t. input)."""
        grads: list[np.ndarray] = []
        g = grad_out
        for layer, (h_in, z, a) in zip(reversed(self.layers), reversed(cache)):
            if layer.residual:
                g_skip, g = g[:, :layer.n_in], g[:, layer.n_in:]
            gz = _activation_grad(z, a, g, layer)
            grads.append(gz.sum(axis=0))
            grads.append(h_in.T @ gz)
            g = gz @ layer.W.T
            if layer.residual:
                g = g + g_skip
        grads.reverse()
        return grads, g

    def copy(self) -> DenseNet:
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation, l.residual, l.spans) for l in self.layers])

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": PARAM_FORMAT_VERSION,
            "layers": [
                {"activation": l.activation, "residual": l.residual, "spans": l.spans,
                 "W": l.W.tolist(), "b": l.b.tolist()}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> DenseNet:
        if obj.get("version") != PARAM_FORMAT_VERSION:
            raise ValueError(f"unsupported parameter format version {obj.get('version')}")
        layers = []
        for l in obj["layers"]:
            spans = [tuple(s) for s in l["spans"]] if l["spans"] is not None else None
            layers.append(Layer(np.array(l["W"], dtype=np.float64).reshape(len(l["W"]), -1),
                                np.array(l["b"], dtype=np.float64), l["activation"], l["residual"], spans))
        return cls(layers)

    def save(self, path: str | Path) -> None:
        header = {"version": PARAM_FORMAT_VERSION,
                  "layers": [{"activation": l.activation, "residual": l.residual, "spans": l.spans}
                             for l in self.layers]}
        arrays = {f"p{i}": p for i, p in enumerate(self.params())}
        np.savez(path, header=np.array(json.dumps(header)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> DenseNet:
        with np.load(path) as f:
            header = json.loads(str(f["header"]))
            if header["version"] != PARAM_FORMAT_VERSION:
                raise ValueError(f"unsupported parameter format version {header['version']}")
            layers = []
            for i, l in enumerate(header["layers"]):
                spans = [tuple(s) for s in l["spans"]] if l["spans"] is not None else None
                layers.append(Layer(f[f"p{2 * i}"].copy(), f[f"p{2 * i + 1}"].copy(),
                                    l["activation"], l["residual"], spans))
        return cls(layers)


def mlp(
    n_in: int,
    hidden: Sequence[int],
    n_out: int,
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    out_activation: str = "identity",
    residual: bool = False,
    out_spans: list[tuple[int, int]] | None = None,
) -> DenseNet:
    """Fully connected stack with fan-in scaled uniform init."""
    layers = []
    width = n_in
    for h in hidden:
        layers.append(_init_layer(width, h, rng, hidden_activation, residual))
        width = layers[-1].n_out
    layers.append(_init_layer(width, n_out, rng, out_activation, False, out_spans))
    return DenseNet(layers)


def _init_layer(n_in, n_out, rng, activation, residual=False, spans=None) -> Layer:
    bound = 1.0 / np.sqrt(n_in)
    return Layer(rng.uniform(-bound, bound, (n_in, n_out)), rng.uniform(-bound, bound, n_out),
                 activation, residual, spans)


# ---------------------------------------------------------------------------
# Losses: each factory returns a callable mapping network output to
# (scalar loss, gradient of the loss w.r.t. that output). Losses average
# over rows.

LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def mse_loss(target: np.ndarray) -> LossFn:
    def f(out):
        diff = out - target
        n = out.shape[0]
        return float(0.5 * (diff * diff).sum() / n), diff / n
    return f


def bce_loss(target: np.ndarray, eps: float = 1e-12) -> LossFn:
    """Binary cross-entropy on probabilities (pair with a sigmoid output)."""
    def f(p):
        n = p.shape[0]
        q = np.clip(p, eps, 1 - eps)
        val = -(target * np.log(q) + (1 - target) * np.log(1 - q)).sum() / n
        return float(val), (q - target) / (q * (1 - q)) / n
    return f


def bce_logits_loss(target: np.ndarray) -> LossFn:
    """Binary cross-entropy on raw logits, numerically stable."""
    def f(z):
        n = z.shape[0]
        val = (np.maximum(z, 0) - z * target + np.log1p(np.exp(-np.abs(z)))).sum() / n
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        return float(val), (p - target) / n
    return f


def softmax_xent_loss(target: np.ndarray, spans: Sequence[tuple[int, int]]) -> LossFn:
    """Cross-entropy of per-span softmax over logits against one-hot targets."""
    def f(z):
        n = z.shape[0]
        val = 0.0
        grad = np.zeros_like(z)
        for a, b in spans:
            zs = z[:, a:b]
            zs = zs - zs.max(axis=1, keepdims=True)
            logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
            val -= (target[:, a:b] * logp).sum()
            grad[:, a:b] = np.exp(logp) - target[:, a:b]
        return float(val / n), grad / n
    return f


def backward(net: DenseNet, x: np.ndarray, loss: LossFn) -> tuple[float, list[np.ndarray]]:
    out, cache = net.forward(x, keep=True)
    value, g = loss(out)
    if g.shape != out.shape:
        raise ValueError("loss gradient shape does not match network output")
    grads, _ = net.backward(cache, g)
    return value, grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, **kw) -> AdamState:
        st = cls(**kw)
        st.m = [np.zeros_like(p) for p in net.params()]
        st.v = [np.zeros_like(p) for p in net.params()]
        return st


ADVERSARIAL_ADAM = dict(lr=2e-4, beta1=0.5, beta2=0.9)
DEFAULT_ADAM = dict(lr=1e-3, beta1=0.9, beta2=0.999)


def adam_step(net: DenseNet, grads: list[np.ndarray], state: AdamState) -> tuple[DenseNet, AdamState]:
    params = net.params()
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state
