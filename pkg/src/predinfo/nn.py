"""A small tape-based reverse-mode engine: affine layers, ReLU, LSTM, softmax cross-entropy, Adam.

Every op takes an optional ``tape``; when it is ``None`` nothing is recorded, which is
how evaluation passes avoid holding intermediates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax

from .errors import NonFiniteError, ShapeMismatchError, TapeReuseError


class Tensor:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class ParamTensor(Tensor):
    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


class Tape:
    def __init__(self):
        self._backward = []
        self.consumed = False

    def record(self, fn):
        self._backward.append(fn)

    def __len__(self):
        return len(self._backward)


def backprop(tape: Tape, output: Tensor, grad=None) -> None:
    """Run the recorded backward closures in reverse, accumulating into ``.grad``."""
    if tape.consumed:
        raise TapeReuseError("tape has already been consumed by a backward pass")
    tape.consumed = True
    if grad is None:
        grad = np.ones_like(output.value)
    output.accumulate(np.asarray(grad, dtype=np.float64))
    for fn in reversed(tape._backward):
        fn()
    tape._backward.clear()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- primitive ops -----------------------------------------------------------

def matmul(a, b, tape: Tape | None = None) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.shape[-1] != b.value.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.value.shape} @ {b.value.shape}")
    out = Tensor(a.value @ b.value)
    if tape is not None:
        def back():
            g = out.grad
            if g is None:
                return
            a.accumulate(g @ b.value.T)
            b.accumulate(a.value.T @ g)
        tape.record(back)
    return out


def matmul_nt(a, b, tape: Tape | None = None) -> Tensor:
    """a @ b.T"""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.shape[-1] != b.value.shape[-1]:
        raise ShapeMismatchError(f"matmul_nt: {a.value.shape} @ {b.value.shape}.T")
    out = Tensor(a.value @ b.value.T)
    if tape is not None:
        def back():
            g = out.grad
            if g is None:
                return
            a.accumulate(g @ b.value)
            b.accumulate(g.T @ a.value)
        tape.record(back)
    return out


def add(a, b, tape: Tape | None = None) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.shape != b.value.shape:
        raise ShapeMismatchError(f"add: {a.value.shape} vs {b.value.shape}")
    out = Tensor(a.value + b.value)
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad)
                b.accumulate(out.grad)
        tape.record(back)
    return out


def add_bias(a, bias, tape: Tape | None = None) -> Tensor:
    a, bias = _as_tensor(a), _as_tensor(bias)
    if a.value.shape[-1] != bias.value.shape[-1]:
        raise ShapeMismatchError(f"add_bias: {a.value.shape} + {bias.value.shape}")
    out = Tensor(a.value + bias.value)
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad)
                bias.accumulate(out.grad.reshape(-1, bias.value.shape[-1]).sum(axis=0))
        tape.record(back)
    return out


def mul(a, b, tape: Tape | None = None) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.value * b.value)
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad * b.value)
                b.accumulate(out.grad * a.value)
        tape.record(back)
    return out


def relu(a, tape: Tape | None = None) -> Tensor:
    a = _as_tensor(a)
    mask = a.value > 0
    out = Tensor(np.where(mask, a.value, 0.0))
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad * mask)
        tape.record(back)
    return out


def sigmoid(a, tape: Tape | None = None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(expit(a.value))
    if tape is not None:
        def back():
            if out.grad is not None:
                s = out.value
                a.accumulate(out.grad * s * (1.0 - s))
        tape.record(back)
    return out


def tanh(a, tape: Tape | None = None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.tanh(a.value))
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad * (1.0 - out.value**2))
        tape.record(back)
    return out


def columns(a, start: int, stop: int, tape: Tape | None = None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.value[:, start:stop])
    if tape is not None:
        def back():
            if out.grad is not None:
                g = np.zeros_like(a.value)
                g[:, start:stop] = out.grad
                a.accumulate(g)
        tape.record(back)
    return out


def reshape(a, shape, tape: Tape | None = None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.value.reshape(shape))
    if tape is not None:
        def back():
            if out.grad is not None:
                a.accumulate(out.grad.reshape(a.value.shape))
        tape.record(back)
    return out


def pairwise_sum(a, b, tape: Tape | None = None) -> Tensor:
    """out[i * len(b) + j] = a[i] + b[j], shape (len(a) * len(b), H)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.shape[1] != b.value.shape[1]:
        raise ShapeMismatchError(f"pairwise_sum: {a.value.shape} vs {b.value.shape}")
    na, nb, h = a.value.shape[0], b.value.shape[0], a.value.shape[1]
    out = Tensor((a.value[:, None, :] + b.value[None, :, :]).reshape(na * nb, h))
    if tape is not None:
        def back():
            if out.grad is not None:
                g = out.grad.reshape(na, nb, h)
                a.accumulate(g.sum(axis=1))
                b.accumulate(g.sum(axis=0))
        tape.record(back)
    return out


def softmax_cross_entropy(logits, labels: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Mean negative log-likelihood (nats) of integer ``labels`` under softmax(logits)."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.value.shape[0] != labels.shape[0]:
        raise ShapeMismatchError(f"softmax_cross_entropy: {logits.value.shape[0]} logits vs {labels.shape[0]} labels")
    logp = log_softmax(logits.value, axis=1)
    n = labels.shape[0]
    out = Tensor(-logp[np.arange(n), labels].mean())
    if tape is not None:
        def back():
            if out.grad is not None:
                g = np.exp(logp)
                g[np.arange(n), labels] -= 1.0
                logits.accumulate(g * (out.grad / n))
        tape.record(back)
    return out


# -- layers ------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Module:
    def params(self) -> list[ParamTensor]:
        raise NotImplementedError

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.params()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for p in self.params():
            if p.value.shape != np.shape(state[p.name]):
                raise ShapeMismatchError(f"{p.name}: checkpoint shape {np.shape(state[p.name])} != {p.value.shape}")
            p.value = np.array(state[p.name], dtype=np.float64)


class Dense(Module):
    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.W = ParamTensor(f"{name}.W", glorot_uniform(rng, n_in, n_out))
        self.b = ParamTensor(f"{name}.b", np.zeros(n_out))

    def params(self):
        return [self.W, self.b]

    def __call__(self, x, tape=None):
        return add_bias(matmul(x, self.W, tape), self.b, tape)


class MLP(Module):
    """Affine layers with ReLU between them and a linear output layer."""

    def __init__(self, name: str, widths: list[int], rng: np.random.Generator):
        if len(widths) < 2 or min(widths) < 1:
            raise ShapeMismatchError(f"MLP needs at least input and output widths >= 1, got {widths}")
        self.widths = list(widths)
        self.layers = [Dense(f"{name}.{i}", widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def __call__(self, x, tape=None):
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h, tape)
            if i < len(self.layers) - 1:
                h = relu(h, tape)
        return h


def forward_affine_relu_stack(x, mlp: MLP, tape: Tape | None = None) -> Tensor:
    x = _as_tensor(x)
    if x.value.shape[-1] != mlp.widths[0]:
        raise ShapeMismatchError(f"input width {x.value.shape[-1]} != MLP input width {mlp.widths[0]}")
    return mlp(x, tape)


class LSTM(Module):
    """Single-layer LSTM, gate order (input, forget, cell candidate, output), zero initial state."""

    def __init__(self, name: str, n_in: int, hidden: int, rng: np.random.Generator, forget_bias: float = 1.0):
        self.n_in, self.hidden = n_in, hidden
        self.Wx = ParamTensor(f"{name}.Wx", glorot_uniform(rng, n_in, 4 * hidden))
        self.Wh = ParamTensor(f"{name}.Wh", glorot_uniform(rng, hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = forget_bias
        self.b = ParamTensor(f"{name}.b", b)

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def step(self, x_t, h, c, tape=None):
        hd = self.hidden
        z = add_bias(matmul(x_t, self.Wx, tape), self.b, tape)
        if h is not None:
            z = add(z, matmul(h, self.Wh, tape), tape)
        i = sigmoid(columns(z, 0, hd, tape), tape)
        f = sigmoid(columns(z, hd, 2 * hd, tape), tape)
        g = tanh(columns(z, 2 * hd, 3 * hd, tape), tape)
        o = sigmoid(columns(z, 3 * hd, 4 * hd, tape), tape)
        ig = mul(i, g, tape)
        c_new = ig if c is None else add(mul(f, c, tape), ig, tape)
        h_new = mul(o, tanh(c_new, tape), tape)
        return h_new, c_new

    def __call__(self, seq: np.ndarray, tape=None, return_cell: bool = False):
        """``seq`` has shape (B, k, n_in); returns the final hidden state (B, hidden)."""
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 3 or seq.shape[2] != self.n_in or seq.shape[1] < 1:
            raise ShapeMismatchError(f"LSTM expects (B, k>=1, {self.n_in}), got {seq.shape}")
        h = c = None
        for t in range(seq.shape[1]):
            h, c = self.step(Tensor(seq[:, t, :]), h, c, tape)
        return (h, c) if return_cell else h


def forward_lstm(seq: np.ndarray, lstm: LSTM, tape: Tape | None = None) -> Tensor:
    return lstm(seq, tape)


# -- optimisation ------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: list[ParamTensor], state: AdamState) -> None:
    """One bias-corrected Adam update (descending the gradient); gradients are zeroed afterwards."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p in params:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {p.name}", iteration=t)
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.zero_grad()


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, params: list[ParamTensor], state: AdamState | None = None) -> None:
    """Text checkpoint: name -> shape -> flat values, plus optimiser moments.

    Floats are written with ``repr`` (at most 17 significant digits), which round-trips exactly.
    """
    doc = {
        "format": "predinfo-checkpoint",
        "version": 1,
        "params": {p.name: {"shape": list(p.value.shape), "values": p.value.ravel().tolist()} for p in params},
    }
    if state is not None:
        doc["adam"] = {
            "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "step": state.step,
            "m": {k: v.ravel().tolist() for k, v in state.m.items()},
            "v": {k: v.ravel().tolist() for k, v in state.v.items()},
        }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], AdamState | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    values = {name: np.array(e["values"], dtype=np.float64).reshape(e["shape"]) for name, e in doc["params"].items()}
    state = None
    if "adam" in doc:
        a = doc["adam"]
        state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
        state.m = {k: np.array(v).reshape(values[k].shape) for k, v in a["m"].items()}
        state.v = {k: np.array(v).reshape(values[k].shape) for k, v in a["v"].items()}
    return values, state
