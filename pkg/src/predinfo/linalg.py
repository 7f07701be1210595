"""Dense linear algebra: covariances, Cholesky log-determinants, ridge solves."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefiniteError, SingularSystemError, TooFewRowsError

JITTER_LADDER = (1e-10, 1e-8, 1e-6)


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.all(np.isfinite(a)):
        return False
    scale = max(np.abs(a).max(), 1.0)
    return bool(np.abs(a - a.T).max() <= rtol * scale)


def empirical_covariance(rows: np.ndarray) -> np.ndarray:
    """Unbiased (divisor M-1) covariance of mean-centred columns."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    if m < 2:
        raise TooFewRowsError(f"need at least 2 rows to estimate a covariance, got {m}")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (m - 1)
    return 0.5 * (cov + cov.T)


def cholesky_with_jitter(a: np.ndarray, jitter_ladder=JITTER_LADDER, block: str | None = None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a``, retrying with ``eps * I`` on failure.

    Returns ``(L, eps_used)``; ``eps_used`` is 0.0 when no jitter was needed.
    """
    a = np.asarray(a, dtype=np.float64)
    for eps in (0.0, *jitter_ladder):
        try:
            mat = a if eps == 0.0 else a + eps * np.eye(a.shape[0])
            return np.linalg.cholesky(mat), eps
        except np.linalg.LinAlgError:
            continue
    where = f" ({block})" if block else ""
    tried = f" even with jitter {jitter_ladder[-1]:g}" if jitter_ladder else ""
    raise NotPositiveDefiniteError(f"matrix{where} is not positive definite{tried}", block=block)


def chol_logdet(a: np.ndarray, jitter_ladder=JITTER_LADDER, block: str | None = None) -> tuple[float, float]:
    """Return ``(ln|A|, jitter_used)`` computed from the Cholesky factor."""
    chol, eps = cholesky_with_jitter(a, jitter_ladder, block=block)
    return float(2.0 * np.log(np.diag(chol)).sum()), eps


def ridge_solve(x: np.ndarray, y: np.ndarray, lambda_ridge: float) -> np.ndarray:
    """Solve ``(X^T X + lambda I) W = X^T Y`` for the p x q coefficient matrix."""
    if lambda_ridge < 0:
        raise ValueError(f"lambda_ridge must be >= 0, got {lambda_ridge}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    gram = x.T @ x
    if lambda_ridge > 0:
        gram[np.diag_indices_from(gram)] += lambda_ridge
    rhs = x.T @ y
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("normal equations are singular; use lambda_ridge > 0") from exc
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise SingularSystemError("normal equations are numerically singular; use lambda_ridge > 0")
    w = sla.cho_solve(factor, rhs)
    return w[:, 0] if squeeze else w
