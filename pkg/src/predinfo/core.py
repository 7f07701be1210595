"""Domain types and deterministic random streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BatchTooSmallError, InvalidParameterError, SequenceTooShortError

CONTINUOUS = "continuous"
BINARY = "binary"


def make_rng_stream(seed: int, stream_id: str) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, stream_id)``.

    The label is hashed with SHA-256 (not Python's salted ``hash``) so the
    same pair gives the same draws in every process.
    """
    if not 0 <= seed < 2**64:
        raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    digest = hashlib.sha256(stream_id.encode("utf-8")).digest()
    label_words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *label_words])
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *labels: Any) -> int:
    """Stable 64-bit child seed for a job identified by ``labels``."""
    text = "/".join(str(x) for x in (seed, *labels))
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class SequenceDataset:
    values: np.ndarray
    alphabet: str = CONTINUOUS
    generator_tag: str = "external"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidParameterError(f"values must be an N x d matrix with N, d >= 1, got shape {v.shape}")
        if self.alphabet not in (CONTINUOUS, BINARY):
            raise InvalidParameterError(f"unknown alphabet {self.alphabet!r}")
        if self.alphabet == BINARY and not np.all(np.abs(v) == 1.0):
            raise InvalidParameterError("binary sequences may only contain -1.0 and +1.0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class WindowPairBatch:
    past: np.ndarray
    future: np.ndarray
    k: int
    kprime: int
    origin_indices: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.past.shape[0]

    def unflatten_past(self, i: int) -> np.ndarray:
        return self.past[i].reshape(self.k, -1)

    def unflatten_future(self, i: int) -> np.ndarray:
        return self.future[i].reshape(self.kprime, -1)


def window_origins_range(n: int, k: int, kprime: int) -> tuple[int, int]:
    """Inclusive range of valid origins t with past [t-k, t-1] and future [t, t+k'-1]."""
    return k, n - kprime


def gather_windows(values: np.ndarray, origins: np.ndarray, k: int, kprime: int) -> tuple[np.ndarray, np.ndarray]:
    origins = np.asarray(origins, dtype=np.int64)
    past_idx = origins[:, None] + np.arange(-k, 0)[None, :]
    fut_idx = origins[:, None] + np.arange(kprime)[None, :]
    past = values[past_idx].reshape(len(origins), -1)
    future = values[fut_idx].reshape(len(origins), -1)
    return past, future


def sample_window_pairs(data: SequenceDataset, k: int, kprime: int, batch_size: int, rng: np.random.Generator) -> WindowPairBatch:
    """Draw ``batch_size`` aligned (past, future) pairs with origins sampled with replacement."""
    if k < 1 or kprime < 1:
        raise InvalidParameterError(f"window lengths must be positive, got k={k}, k'={kprime}")
    if data.n < k + kprime + 1:
        raise SequenceTooShortError(f"sequence of length {data.n} is shorter than k + k' + 1 = {k + kprime + 1}")
    if batch_size < 2:
        raise BatchTooSmallError(f"batch size must be >= 2 for contrastive bounds, got {batch_size}")
    lo, hi = window_origins_range(data.n, k, kprime)
    origins = rng.integers(lo, hi + 1, size=batch_size)
    past, future = gather_windows(data.values, origins, k, kprime)
    return WindowPairBatch(past=past, future=future, k=k, kprime=kprime, origin_indices=origins)


@dataclass
class CurveEstimate:
    """Per-k learning-curve table. All quantities are in nats."""

    k_values: list[int]
    ipred: list[float]
    ipred_stderr: list[float]
    lambda_: list[float]
    stderr: list[float]
    evorate: list[float]
    evorate_stderr: list[float]
    kprime_used: list[float]
    estimator: str = ""
    critic: str = ""
    seed_count: int = 1
    failed: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.k_values)
        for name in ("ipred", "ipred_stderr", "lambda_", "stderr", "evorate", "evorate_stderr", "kprime_used"):
            if len(getattr(self, name)) != n:
                raise InvalidParameterError(f"CurveEstimate.{name} has length {len(getattr(self, name))}, expected {n}")
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise InvalidParameterError("k_values must be strictly increasing")

    def lambda_at(self, k: int) -> float:
        return self.lambda_[self.k_values.index(k)]

    @classmethod
    def from_lambda(cls, k_values, lambdas, stderr=None, evorate=None) -> "CurveEstimate":
        """Build a curve from a bare Λ̂ table (useful for oracle algebra)."""
        n = len(k_values)
        nan = [math.nan] * n
        return cls(
            k_values=list(k_values),
            ipred=list(nan),
            ipred_stderr=list(nan),
            lambda_=[float(x) for x in lambdas],
            stderr=list(stderr) if stderr is not None else [0.0] * n,
            evorate=list(evorate) if evorate is not None else list(nan),
            evorate_stderr=list(nan),
            kprime_used=list(nan),
        )


@dataclass
class RiskReport:
    k_values: list[int]
    per_k_risk: dict[str, list[float]]
    lambda_: list[float]
    lambda_stderr: list[float]
    evorate: list[float]
    oracle_risk: dict[str, float]
    oracle_stderr: dict[str, float]
    k_star: dict[str, int]
    adequacy: dict[str, list[float]]
    p_hat: float
    p_hat_k: int
    critical_zone_threshold: float
    negative_lambda: list[int] = field(default_factory=list)
