"""Closed-form ground truth for Gaussian and Markov processes, plus the ridge entropy-rate estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .core import SequenceDataset, gather_windows
from .errors import InvalidParameterError, NotPositiveDefiniteError, SequenceTooShortError
from .generators import KernelSpec, gram_matrix
from .linalg import JITTER_LADDER, chol_logdet, empirical_covariance, ridge_solve

LOG_2PIE = math.log(2.0 * math.pi * math.e)
DEFAULT_RIDGE = 1e-3


@dataclass(frozen=True)
class EntropyRateEstimate:
    k: int
    l_k: float
    l0: float

    @property
    def lambda_tilde(self) -> float:
        return self.l_k - self.l0


def ipred_from_gram(gram: np.ndarray, k: int, kprime: int, d: int = 1, jitter_ladder=JITTER_LADDER) -> float:
    """(d/2) [ln|S_past| + ln|S_future| - ln|S_joint|] for a (k+k') x (k+k') Gram matrix."""
    if k < 1 or kprime < 1:
        raise InvalidParameterError("k and k' must be >= 1")
    if gram.shape != (k + kprime, k + kprime):
        raise InvalidParameterError(f"Gram matrix shape {gram.shape} does not match k + k' = {k + kprime}")
    ld_past, _ = chol_logdet(gram[:k, :k], jitter_ladder, block="past")
    ld_fut, _ = chol_logdet(gram[k:, k:], jitter_ladder, block="future")
    ld_joint, _ = chol_logdet(gram, jitter_ladder, block="joint")
    return 0.5 * d * (ld_past + ld_fut - ld_joint)


def gaussian_ipred_closed_form(spec: KernelSpec, k: int, kprime: int, d: int = 1, jitter_ladder=JITTER_LADDER) -> float:
    """Exact predictive information of a GP with d i.i.d. components, in nats."""
    return ipred_from_gram(gram_matrix(spec, k + kprime), k, kprime, d, jitter_ladder)


def gaussian_evorate_closed_form(spec: KernelSpec, k: int, d: int = 1) -> float:
    """I(k-past; next value) through the conditional variance (Schur complement)."""
    g = gram_matrix(spec, k + 1)
    past, cross, var_next = g[:k, :k], g[:k, k], g[k, k]
    cond_var = var_next - cross @ np.linalg.solve(past, cross)
    if not cond_var > 0:
        raise NotPositiveDefiniteError("conditional variance is not positive", block="joint")
    return 0.5 * d * math.log(var_next / cond_var)


def ar1_ipred_exact(rho: float, d: int = 1) -> float:
    """Predictive information of a stationary Gaussian AR(1); independent of k and k'."""
    if not abs(rho) < 1:
        raise InvalidParameterError(f"rho must satisfy |rho| < 1, got {rho}")
    return -0.5 * d * math.log1p(-rho * rho)


def markov_ipred_flatness_check(spec: KernelSpec, m: int, k_range, kprime: int) -> float:
    """Max |I(k,k') - I(m,k')| over ``k_range``; zero for an order-m Markov kernel."""
    ks = list(k_range)
    if any(k < m for k in ks):
        raise InvalidParameterError(f"every k must be >= the Markov order {m}")
    ref = gaussian_ipred_closed_form(spec, m, kprime)
    return max(abs(gaussian_ipred_closed_form(spec, k, kprime) - ref) for k in ks)


def ar_autocovariance(p: int, rho: float, max_lag: int) -> np.ndarray:
    """Stationary autocovariance of X_t = (rho/p) sum_{j=1..p} X_{t-j} + sqrt(1-rho^2) eps_t.

    Solves the Yule-Walker system for lags 0..p and extends by the AR recursion.
    """
    phi = np.full(p, rho / p)
    sigma2 = 1.0 - rho * rho
    a = np.zeros((p + 1, p + 1))
    rhs = np.zeros(p + 1)
    rhs[0] = sigma2
    for h in range(p + 1):
        a[h, h] += 1.0
        for j in range(1, p + 1):
            a[h, abs(h - j)] -= phi[j - 1]
    gamma = list(np.linalg.solve(a, rhs))
    for h in range(p + 1, max_lag + 1):
        gamma.append(sum(phi[j - 1] * gamma[h - j] for j in range(1, p + 1)))
    return np.array(gamma[: max_lag + 1])


def ar_process_ipred(p: int, rho: float, k: int, kprime: int, d: int = 1) -> float:
    """Exact I_pred(k, k') of the equal-weight AR(p) process with d independent components."""
    acov = ar_autocovariance(p, rho, k + kprime)
    return ipred_from_gram(toeplitz(acov[: k + kprime]), k, kprime, d)


def ar_process_conditional_entropy(p: int, rho: float, k: int, d: int = 1) -> float:
    """Exact h(k) = H(X_t | k previous values) for the equal-weight AR(p) process."""
    acov = ar_autocovariance(p, rho, k + 1)
    if k == 0:
        var = acov[0]
    else:
        gam = toeplitz(acov[:k])
        c = acov[1 : k + 1]
        var = acov[0] - c @ np.linalg.solve(gam, c)
    return 0.5 * d * (LOG_2PIE + math.log(var))


def ar_entropy_rate_limit(rho: float, d: int = 1) -> float:
    """l0 = (1/2) ln((2 pi e)^d (1 - rho^2)^d)."""
    return 0.5 * d * (LOG_2PIE + math.log1p(-rho * rho))


def ridge_entropy_rate(data: SequenceDataset, k: int, lambda_ridge: float = DEFAULT_RIDGE) -> float:
    """Gaussian conditional entropy of X_t given its k-past, from ridge residuals, in nats."""
    x = data.values
    n, d = x.shape
    if k < 0:
        raise InvalidParameterError("k must be >= 0")
    n_rows = n - k
    if n_rows < k * d + 10:
        raise SequenceTooShortError(f"{n_rows} windows are too few for {k * d} regressors")
    target = x[k:]
    if k == 0:
        resid = target
    else:
        origins = np.arange(k, n)
        past, _ = gather_windows(x, origins, k, 1)
        past_c = past - past.mean(axis=0)
        target_c = target - target.mean(axis=0)
        w = ridge_solve(past_c, target_c, lambda_ridge)
        resid = target_c - past_c @ w
    cov = empirical_covariance(resid)
    logdet, _ = chol_logdet(cov, jitter_ladder=(), block="residual covariance")
    return 0.5 * (d * LOG_2PIE + logdet)


def theoretical_learning_curve(data: SequenceDataset, p_true: int, rho: float, k_range,
                               lambda_ridge: float = DEFAULT_RIDGE) -> list[EntropyRateEstimate]:
    """Λ̃(k) = ridge l(k) - analytic l0 for data drawn from the equal-weight AR(p) generator."""
    l0 = ar_entropy_rate_limit(rho if p_true > 0 else 0.0, data.d)
    return [EntropyRateEstimate(k, ridge_entropy_rate(data, k, lambda_ridge), l0) for k in k_range]
