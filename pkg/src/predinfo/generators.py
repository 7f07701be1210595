"""Synthetic sequences: kernel Gaussian processes, AR(p), AR(1) vectors, blockwise Ising chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, lfiltic
from scipy.special import expit

from .core import BINARY, CONTINUOUS, SequenceDataset
from .errors import InvalidParameterError
from .linalg import JITTER_LADDER, cholesky_with_jitter

KERNEL_KINDS = ("AR", "Matern32", "Matern52", "SquaredExp", "Periodic", "RationalQuadratic", "LocallyPeriodic")

# Defaults per kind, taken from the kernel-parameter table of the reference experiments.
KERNEL_DEFAULTS = {
    "AR": dict(rho=0.8, sigma=0.5),
    "Matern32": dict(lengthscale=2.0, sigma=1.0),
    "Matern52": dict(lengthscale=2.0, sigma=1.0),
    "SquaredExp": dict(lengthscale=2.0, sigma=1.0),
    "Periodic": dict(lengthscale=3.0, period=2.0, sigma=0.5),
    "RationalQuadratic": dict(lengthscale=2.0, theta=1.0, sigma=1.0),
    "LocallyPeriodic": dict(lengthscale=1.0, period=4.0, decay=10.0, sigma=1.0),
}


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "AR"
    rho: float | None = None
    lengthscale: float | None = None
    period: float | None = None
    decay: float | None = None
    theta: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidParameterError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        for name, value in KERNEL_DEFAULTS[self.kind].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.sigma is None or not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.kind == "AR" and not abs(self.rho) < 1:
            raise InvalidParameterError(f"AR kernel needs |rho| < 1, got {self.rho}")
        if "lengthscale" in KERNEL_DEFAULTS[self.kind] and not self.lengthscale > 0:
            raise InvalidParameterError(f"lengthscale must be > 0, got {self.lengthscale}")
        if "period" in KERNEL_DEFAULTS[self.kind] and not self.period > 0:
            raise InvalidParameterError(f"period must be > 0, got {self.period}")
        if self.kind == "RationalQuadratic" and not self.theta > 0:
            raise InvalidParameterError(f"theta must be > 0, got {self.theta}")
        if self.kind == "LocallyPeriodic" and not self.decay > 0:
            raise InvalidParameterError(f"decay must be > 0, got {self.decay}")

    def scaled(self, factor: float) -> "KernelSpec":
        """Same kernel with sigma multiplied by ``factor``."""
        kw = {k: getattr(self, k) for k in ("kind", "rho", "lengthscale", "period", "decay", "theta")}
        return KernelSpec(sigma=self.sigma * factor, **kw)


def kernel_value(spec: KernelSpec, t1, t2):
    """Closed-form stationary kernel evaluated at time indices (broadcasts over arrays)."""
    tau = np.abs(np.asarray(t1, dtype=np.float64) - np.asarray(t2, dtype=np.float64))
    s2 = spec.sigma**2
    kind = spec.kind
    if kind == "AR":
        out = s2 * np.power(spec.rho, tau)
    elif kind == "Matern32":
        r = math.sqrt(3.0) * tau / spec.lengthscale
        out = s2 * (1.0 + r) * np.exp(-r)
    elif kind == "Matern52":
        r = math.sqrt(5.0) * tau / spec.lengthscale
        out = s2 * (1.0 + r + 5.0 * tau**2 / (3.0 * spec.lengthscale**2)) * np.exp(-r)
    elif kind == "SquaredExp":
        out = s2 * np.exp(-(tau**2) / (2.0 * spec.lengthscale**2))
    elif kind == "Periodic":
        out = s2 * np.exp(-2.0 * np.sin(np.pi * tau / spec.period) ** 2 / spec.lengthscale**2)
    elif kind == "RationalQuadratic":
        out = s2 * (1.0 + tau**2 / (2.0 * spec.theta * spec.lengthscale**2)) ** (-spec.theta)
    else:  # LocallyPeriodic
        out = (
            s2
            * np.exp(-2.0 * np.sin(np.pi * tau / spec.period) ** 2 / spec.lengthscale**2)
            * np.exp(-(tau**2) / (2.0 * spec.decay**2))
        )
    return float(out) if np.ndim(out) == 0 else out


def gram_matrix(spec: KernelSpec, n: int, start: int = 0) -> np.ndarray:
    t = np.arange(start, start + n, dtype=np.float64)
    g = kernel_value(spec, t[:, None], t[None, :])
    return np.atleast_2d(g)


def sample_gp(spec: KernelSpec, n: int, d: int, count: int, rng: np.random.Generator,
              jitter_ladder=JITTER_LADDER, seed: int = 0) -> list[SequenceDataset]:
    """Draw ``count`` independent length-n sequences with d i.i.d. GP components."""
    if n < 1 or d < 1 or count < 1:
        raise InvalidParameterError("n, d and count must all be >= 1")
    chol, eps = cholesky_with_jitter(gram_matrix(spec, n), jitter_ladder, block="gram")
    params = {"kernel": spec.__dict__.copy(), "n": n, "d": d, "jitter": eps}
    out = []
    for _ in range(count):
        z = chol @ rng.standard_normal((n, d))
        out.append(SequenceDataset(z, CONTINUOUS, f"gp:{spec.kind}", seed, params))
    return out


def sample_ar_process(p: int, rho: float, n: int, d: int, rng: np.random.Generator, seed: int = 0) -> SequenceDataset:
    """Vector AR(p) with equal weights rho/p on each lag and innovation scale sqrt(1 - rho^2)."""
    if not 0 < rho < 1:
        raise InvalidParameterError(f"rho must lie in (0, 1), got {rho}")
    if p < 1 or n <= p or d < 1:
        raise InvalidParameterError(f"need p >= 1, n > p and d >= 1 (got p={p}, n={n}, d={d})")
    x = np.empty((n, d))
    x[:p] = rng.standard_normal((p, d))
    eps = rng.standard_normal((n - p, d)) * math.sqrt(1.0 - rho**2)
    a = np.concatenate([[1.0], np.full(p, -rho / p)])
    b = np.array([1.0])
    for j in range(d):
        zi = lfiltic(b, a, y=x[p - 1 :: -1, j])
        x[p:, j] = lfilter(b, a, eps[:, j], zi=zi)[0]
    return SequenceDataset(x, CONTINUOUS, "ar", seed, {"p": p, "rho": rho, "n": n, "d": d})


def sample_ar1_vector(rho: float, n: int, d: int, rng: np.random.Generator, seed: int = 0) -> SequenceDataset:
    """Stationary AR(1) with standard-normal marginals: z_t = rho z_{t-1} + sqrt(1-rho^2) eps_t."""
    if not abs(rho) < 1:
        raise InvalidParameterError(f"rho must satisfy |rho| < 1, got {rho}")
    if n < 1 or d < 1:
        raise InvalidParameterError("n and d must be >= 1")
    z = np.empty((n, d))
    z[0] = rng.standard_normal(d)
    if n > 1:
        eps = rng.standard_normal((n - 1, d)) * math.sqrt(1.0 - rho**2)
        for j in range(d):
            zi = lfiltic([1.0], [1.0, -rho], y=[z[0, j]])
            z[1:, j] = lfilter([1.0], [1.0, -rho], eps[:, j], zi=zi)[0]
    return SequenceDataset(z, CONTINUOUS, "ar1", seed, {"rho": rho, "n": n, "d": d})


@dataclass(frozen=True)
class IsingConfig:
    T: int
    M: int
    seed: int = 0
    coupling_std: float = 1.0
    coupling_override: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.T < 2:
            raise InvalidParameterError(f"T must be >= 2, got {self.T}")
        if not 1 <= self.M <= self.T:
            raise InvalidParameterError(f"block size must satisfy 1 <= M <= T, got M={self.M}, T={self.T}")
        if not self.coupling_std > 0:
            raise InvalidParameterError("coupling_std must be > 0")

    @property
    def n_blocks(self) -> int:
        return -(-self.T // self.M)


def sample_ising_chain(cfg: IsingConfig, rng: np.random.Generator) -> tuple[SequenceDataset, np.ndarray]:
    """Blockwise logistic spin chain; returns the sequence and the coupling drawn for each block.

    P(X_i = +1 | X_{i-1}, J) = exp(J X_{i-1}) / (exp(J X_{i-1}) + exp(-J X_{i-1})), so the chain
    keeps its previous sign with probability sigmoid(2J).  A trailing partial block gets its own J.
    """
    x0 = 1 if rng.random() < 0.5 else -1
    couplings = rng.standard_normal(cfg.n_blocks) * cfg.coupling_std
    if cfg.coupling_override is not None:
        couplings = np.full(cfg.n_blocks, float(cfg.coupling_override))
    u = rng.random(cfg.T - 1)
    # transition i (1-based) uses the coupling of the block containing index i
    j_per_step = np.repeat(couplings, cfg.M)[1 : cfg.T]
    flips = np.where(u < expit(2.0 * j_per_step), 1, -1).astype(np.int8)
    x = np.empty(cfg.T, dtype=np.int8)
    x[0] = x0
    x[1:] = x0 * np.cumprod(flips, dtype=np.int8)
    params = {"T": cfg.T, "M": cfg.M, "coupling_std": cfg.coupling_std}
    if cfg.coupling_override is not None:
        params["coupling_override"] = cfg.coupling_override
    data = SequenceDataset(x.astype(np.float64), BINARY, "ising", cfg.seed, params)
    return data, couplings
