"""Variational lower bounds on mutual information, evaluated on a B x B critic score matrix.

Row i, column j of ``S`` scores the pair (x_i, y_j); the diagonal holds the positive pairs
and every off-diagonal entry is a negative.  Each ``*_grad`` function returns the bound
together with its gradient with respect to ``S`` (and the log-baseline for TUBA).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import BatchTooSmallError, InvalidParameterError, NonFiniteError

BOUND_KINDS = ("InfoNCE", "DV", "NWJ", "TUBA", "SMILE")


@dataclass(frozen=True)
class BoundSpec:
    kind: str = "InfoNCE"
    smile_clip: float = 5.0

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise InvalidParameterError(f"unknown bound {self.kind!r}; expected one of {BOUND_KINDS}")
        if self.kind == "SMILE" and not self.smile_clip > 0:
            raise InvalidParameterError("SMILE clip must be > 0")


def _check(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidParameterError(f"score matrix must be square, got {s.shape}")
    if s.shape[0] < 2:
        raise BatchTooSmallError("bounds need B >= 2 to have negative pairs")
    return s


def _offdiag_mask(b: int) -> np.ndarray:
    return ~np.eye(b, dtype=bool)


def _finite(value: float, kind: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteError(f"{kind} bound evaluated to {value}")
    return value


def _log_mean_exp_offdiag(s: np.ndarray) -> tuple[float, np.ndarray]:
    """ln mean_{i != j} exp(S_ij) and its gradient (a softmax over the off-diagonal)."""
    b = s.shape[0]
    mask = _offdiag_mask(b)
    off = s[mask]
    lse = logsumexp(off)
    grad = np.zeros_like(s)
    grad[mask] = np.exp(off - lse)
    return lse - math.log(b * (b - 1)), grad


def infonce_grad(scores):
    s = _check(scores)
    b = s.shape[0]
    row_lse = logsumexp(s, axis=1)
    value = float(np.mean(np.diag(s) - row_lse) + math.log(b))
    soft = np.exp(s - row_lse[:, None])
    grad = (np.eye(b) - soft) / b
    return value, grad


def dv_grad(scores):
    s = _check(scores)
    b = s.shape[0]
    lme, g_lme = _log_mean_exp_offdiag(s)
    value = float(np.mean(np.diag(s)) - lme)
    grad = np.eye(b) / b - g_lme
    return value, grad


def nwj_grad(scores):
    s = _check(scores)
    b = s.shape[0]
    mask = _offdiag_mask(b)
    with np.errstate(over="ignore"):
        shifted = np.exp(s - 1.0)
    value = float(np.mean(np.diag(s)) - shifted[mask].mean())
    grad = np.eye(b) / b - np.where(mask, shifted, 0.0) / (b * (b - 1))
    return value, grad


def tuba_grad(scores, log_baseline: float = 0.0):
    """1 + mean S_ii - mean_{i != j} exp(S_ij - a) - a, with learned log-baseline a."""
    s = _check(scores)
    b = s.shape[0]
    mask = _offdiag_mask(b)
    with np.errstate(over="ignore"):
        shifted = np.exp(s - log_baseline)
    marg = shifted[mask].mean()
    value = float(1.0 + np.mean(np.diag(s)) - marg - log_baseline)
    grad = np.eye(b) / b - np.where(mask, shifted, 0.0) / (b * (b - 1))
    return value, grad, float(marg - 1.0)


def smile_grad(scores, clip: float = 5.0):
    s = _check(scores)
    b = s.shape[0]
    clipped = np.clip(s, -clip, clip)
    lme, g_lme = _log_mean_exp_offdiag(clipped)
    value = float(np.mean(np.diag(s)) - lme)
    inside = (s > -clip) & (s < clip)
    grad = np.eye(b) / b - g_lme * inside
    return value, grad


def bound_and_grad(spec: BoundSpec, scores, log_baseline: float = 0.0) -> tuple[float, np.ndarray, float]:
    """``(value, dvalue/dS, dvalue/d log_baseline)``; the last entry is 0 except for TUBA."""
    kind = spec.kind
    if kind == "InfoNCE":
        v, g = infonce_grad(scores)
        da = 0.0
    elif kind == "DV":
        v, g = dv_grad(scores)
        da = 0.0
    elif kind == "NWJ":
        v, g = nwj_grad(scores)
        da = 0.0
    elif kind == "TUBA":
        v, g, da = tuba_grad(scores, log_baseline)
    else:
        v, g = smile_grad(scores, spec.smile_clip)
        da = 0.0
    return _finite(v, kind), g, da


def bound_value(spec: BoundSpec | str, scores, log_baseline: float = 0.0) -> float:
    if isinstance(spec, str):
        spec = BoundSpec(spec)
    return bound_and_grad(spec, scores, log_baseline)[0]
