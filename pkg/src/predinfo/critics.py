"""Critic networks f(x, y) that score (past, future) window pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import WindowPairBatch
from .errors import InvalidParameterError, ShapeMismatchError
from .nn import (LSTM, MLP, Module, ParamTensor, Tape, Tensor, add_bias, matmul, matmul_nt,
                 pairwise_sum, relu, reshape)

CRITIC_KINDS = ("Separable", "Concat", "Sequential", "Constant")


@dataclass(frozen=True)
class CriticSpec:
    architecture: str = "Concat"
    embed_dim: int = 32
    hidden: tuple[int, ...] = (128, 128)
    lstm_width: int = 64
    constant: float = 0.0

    def __post_init__(self):
        if self.architecture not in CRITIC_KINDS:
            raise InvalidParameterError(f"unknown critic {self.architecture!r}; expected one of {CRITIC_KINDS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1 or self.embed_dim < 1 or self.lstm_width < 1:
            raise InvalidParameterError("critic widths must be positive and hidden must be non-empty")


class _PairHead(Module):
    """Scores every (i, j) pair: relu(a_i Wa + b_j Wb + c) followed by an MLP down to one unit.

    This equals an MLP on the concatenated vector [a_i; b_j] without materialising B^2 copies
    of the inputs: the first affine map is split into its past and future column blocks.
    """

    def __init__(self, name: str, n_a: int, n_b: int, hidden: tuple[int, ...], rng: np.random.Generator):
        h1 = hidden[0]
        self.Wa = ParamTensor(f"{name}.Wa", _glorot_block(rng, n_a + n_b, h1, n_a))
        self.Wb = ParamTensor(f"{name}.Wb", _glorot_block(rng, n_a + n_b, h1, n_b))
        self.c = ParamTensor(f"{name}.c", np.zeros(h1))
        self.rest = MLP(f"{name}.rest", [*hidden, 1], rng)

    def params(self):
        return [self.Wa, self.Wb, self.c, *self.rest.params()]

    def __call__(self, a, b, tape=None) -> Tensor:
        na, nb = a.shape[0], b.shape[0]
        z = pairwise_sum(matmul(a, self.Wa, tape), matmul(b, self.Wb, tape), tape)
        h = relu(add_bias(z, self.c, tape), tape)
        return reshape(self.rest(h, tape), (na, nb), tape)


def _glorot_block(rng, fan_in_total: int, fan_out: int, rows: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in_total + fan_out))
    return rng.uniform(-limit, limit, size=(rows, fan_out))


class Critic(Module):
    """Base class. ``n_x = k d`` and ``n_y = k' d`` are the flattened window widths."""

    spec: CriticSpec
    n_x: int
    n_y: int
    d: int

    def check_inputs(self, past: np.ndarray, future: np.ndarray) -> None:
        if past.ndim != 2 or future.ndim != 2 or past.shape[1] != self.n_x or future.shape[1] != self.n_y:
            raise ShapeMismatchError(
                f"critic expects past (B, {self.n_x}) and future (B, {self.n_y}), got {past.shape} and {future.shape}"
            )

    def scores(self, past: np.ndarray, future: np.ndarray, tape: Tape | None = None) -> Tensor:
        raise NotImplementedError


class SeparableCritic(Critic):
    def __init__(self, spec: CriticSpec, n_x: int, n_y: int, d: int, rng: np.random.Generator):
        self.spec, self.n_x, self.n_y, self.d = spec, n_x, n_y, d
        self.g = MLP("sep.g", [n_x, *spec.hidden, spec.embed_dim], rng)
        self.h = MLP("sep.h", [n_y, *spec.hidden, spec.embed_dim], rng)

    def params(self):
        return self.g.params() + self.h.params()

    def scores(self, past, future, tape=None):
        self.check_inputs(past, future)
        return matmul_nt(self.g(past, tape), self.h(future, tape), tape)


class ConcatCritic(Critic):
    def __init__(self, spec: CriticSpec, n_x: int, n_y: int, d: int, rng: np.random.Generator):
        self.spec, self.n_x, self.n_y, self.d = spec, n_x, n_y, d
        self.head = _PairHead("cat", n_x, n_y, spec.hidden, rng)

    def params(self):
        return self.head.params()

    def scores(self, past, future, tape=None):
        self.check_inputs(past, future)
        return self.head(Tensor(past), Tensor(future), tape)


class SequentialCritic(Critic):
    """LSTM encoders over the past and the future windows, then a pairwise head on the encodings."""

    def __init__(self, spec: CriticSpec, n_x: int, n_y: int, d: int, rng: np.random.Generator):
        self.spec, self.n_x, self.n_y, self.d = spec, n_x, n_y, d
        w = spec.lstm_width
        self.enc_x = LSTM("seq.past", d, w, rng)
        self.enc_y = LSTM("seq.future", d, w, rng)
        self.head = _PairHead("seq.head", w, w, spec.hidden, rng)

    def params(self):
        return self.enc_x.params() + self.enc_y.params() + self.head.params()

    def scores(self, past, future, tape=None):
        self.check_inputs(past, future)
        b = past.shape[0]
        hx = self.enc_x(past.reshape(b, -1, self.d), tape)
        hy = self.enc_y(future.reshape(future.shape[0], -1, self.d), tape)
        return self.head(hx, hy, tape)


class ConstantCritic(Critic):
    """f(x, y) = c. Parameter-free; used to check the bounds' cancellation."""

    def __init__(self, spec: CriticSpec, n_x: int, n_y: int, d: int, rng=None):
        self.spec, self.n_x, self.n_y, self.d = spec, n_x, n_y, d

    def params(self):
        return []

    def scores(self, past, future, tape=None):
        self.check_inputs(past, future)
        return Tensor(np.full((past.shape[0], future.shape[0]), self.spec.constant))


_CLASSES = {"Separable": SeparableCritic, "Concat": ConcatCritic, "Sequential": SequentialCritic,
            "Constant": ConstantCritic}


def build_critic(spec: CriticSpec, k: int, kprime: int, d: int, rng: np.random.Generator) -> Critic:
    if k < 1 or kprime < 1 or d < 1:
        raise InvalidParameterError("k, k' and d must be >= 1")
    return _CLASSES[spec.architecture](spec, k * d, kprime * d, d, rng)


def score_matrix(critic: Critic, batch: WindowPairBatch, tape: Tape | None = None) -> Tensor:
    """S[i, j] = f(x_i, y_j); the diagonal holds the aligned (positive) pairs."""
    return critic.scores(batch.past, batch.future, tape)


__all__ = ["CRITIC_KINDS", "CriticSpec", "Critic", "SeparableCritic", "ConcatCritic", "SequentialCritic",
           "ConstantCritic", "build_critic", "score_matrix"]
