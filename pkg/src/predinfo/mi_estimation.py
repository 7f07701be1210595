"""Estimating I_pred(k, k') and the learning curve Λ(k) from samples.

Three estimators are available:

* ``neural``: a critic trained by maximising a variational lower bound (continuous data);
* ``gaussian``: log-determinants of the empirical window covariance (continuous data);
* ``plugin``: n-gram frequencies (binary data).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bounds import BoundSpec, bound_and_grad
from .core import BINARY, CONTINUOUS, CurveEstimate, SequenceDataset, derive_seed, make_rng_stream, sample_window_pairs
from .critics import CriticSpec, build_critic, score_matrix
from .errors import (BatchTooSmallError, ContextSpaceTooLargeError, InvalidParameterError, NonFiniteError,
                     PredInfoError, SequenceTooShortError)
from .io import read_table, write_table
from .linalg import JITTER_LADDER, chol_logdet
from .nn import AdamState, ParamTensor, Tape, adam_step, backprop
from .parallel import run_ordered

ESTIMATORS = ("neural", "gaussian", "plugin")
MAX_CONTEXT_BITS = 24
DATA_PER_CELL = 50


class InsufficientDataWarning(UserWarning):
    """Fewer than 50 samples per n-gram cell."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 70
    iterations: int = 10000
    lr: float = 5e-4
    seed: int = 0
    replications: int = 5
    smoothing_fraction: float = 0.05

    def __post_init__(self):
        if self.batch_size < 2:
            raise BatchTooSmallError(f"batch size must be >= 2, got {self.batch_size}")
        if self.iterations < 1:
            raise InvalidParameterError(f"iterations must be >= 1, got {self.iterations}")
        if not self.lr > 0:
            raise InvalidParameterError(f"learning rate must be > 0, got {self.lr}")
        if self.replications < 1:
            raise InvalidParameterError(f"replications must be >= 1, got {self.replications}")
        if not 0 < self.smoothing_fraction <= 1:
            raise InvalidParameterError("smoothing_fraction must lie in (0, 1]")


def default_kprime(k: int) -> int:
    return max(2 * k, 20)


def resolve_kprime_rule(rule) -> Callable[[int], int]:
    """``None`` gives the default rule, an int gives a constant future length."""
    if rule is None:
        return default_kprime
    if isinstance(rule, (int, np.integer)):
        if rule < 1:
            raise InvalidParameterError(f"k' must be >= 1, got {rule}")
        return lambda k, _c=int(rule): _c
    if callable(rule):
        return rule
    raise InvalidParameterError(f"cannot interpret kprime rule {rule!r}")


# -- neural estimator --------------------------------------------------------

def train_ipred(data: SequenceDataset, k: int, kprime: int, critic: CriticSpec | None = None,
                bound: BoundSpec | None = None, cfg: TrainConfig | None = None) -> tuple[float, np.ndarray]:
    """Maximise the bound over critic parameters; return (smoothed estimate, per-iteration bound values)."""
    critic = critic or CriticSpec()
    bound = bound or BoundSpec()
    cfg = cfg or TrainConfig()
    init_rng = make_rng_stream(cfg.seed, f"critic-init/{k}/{kprime}")
    batch_rng = make_rng_stream(cfg.seed, f"batches/{k}/{kprime}")
    model = build_critic(critic, k, kprime, data.d, init_rng)
    params = model.params()
    baseline = None
    if bound.kind == "TUBA":
        baseline = ParamTensor("tuba.log_baseline", np.zeros(()))
        params = params + [baseline]
    adam = AdamState(lr=cfg.lr)
    trace = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        batch = sample_window_pairs(data, k, kprime, cfg.batch_size, batch_rng)
        tape = Tape()
        scores = score_matrix(model, batch, tape)
        a = float(baseline.value) if baseline is not None else 0.0
        try:
            value, g_s, g_a = bound_and_grad(bound, scores.value, a)
        except NonFiniteError as exc:
            raise NonFiniteError(f"{exc} at iteration {it}", iteration=it) from None
        trace[it] = value
        backprop(tape, scores, -g_s)
        if baseline is not None:
            baseline.grad = np.asarray(-g_a)
        try:
            adam_step(params, adam)
        except NonFiniteError as exc:
            raise NonFiniteError(f"{exc} at iteration {it}", iteration=it) from None
    tail = max(1, math.ceil(cfg.smoothing_fraction * cfg.iterations))
    return float(trace[-tail:].mean()), trace


# -- Gaussian covariance estimator -------------------------------------------

def _window_covariance(values: np.ndarray, width: int) -> np.ndarray:
    """Sample covariance of all length-``width`` windows, flattened time-major."""
    n, d = values.shape
    m = n - width + 1
    if m < 2:
        raise SequenceTooShortError(f"sequence of length {n} has fewer than two windows of width {width}")
    win = np.lib.stride_tricks.sliding_window_view(values, (width, d))[:, 0].reshape(m, width * d)
    mean = win.mean(axis=0)
    cov = (win.T @ win - m * np.outer(mean, mean)) / (m - 1)
    return 0.5 * (cov + cov.T)


def _mi_from_cov(cov: np.ndarray, a: slice, b: slice, ladder=JITTER_LADDER) -> float:
    idx = np.r_[a, b]
    ld_a, _ = chol_logdet(cov[a, a], ladder, block="past")
    ld_b, _ = chol_logdet(cov[b, b], ladder, block="future")
    ld_j, _ = chol_logdet(cov[np.ix_(idx, idx)], ladder, block="joint")
    return 0.5 * (ld_a + ld_b - ld_j)


def gaussian_ipred(data: SequenceDataset, k: int, kprime: int) -> float:
    """I_pred(k, k') of the Gaussian fitted to the empirical window covariance, in nats."""
    if k < 1 or kprime < 1:
        raise InvalidParameterError("k and k' must be >= 1")
    d = data.d
    cov = _window_covariance(data.values, k + kprime)
    return _mi_from_cov(cov, slice(0, k * d), slice(k * d, (k + kprime) * d))


def _gaussian_cell(values: np.ndarray, k: int, kprime: int) -> tuple[float, float, float]:
    """(I(k, k'), I(k+1, k') - I(k, k'), I(k, 1)) from one covariance of width k+1+k'."""
    d = values.shape[1]
    cov = _window_covariance(values, k + 1 + kprime)
    fut = slice((k + 1) * d, (k + 1 + kprime) * d)
    i_k = _mi_from_cov(cov, slice(d, (k + 1) * d), fut)
    i_k1 = _mi_from_cov(cov, slice(0, (k + 1) * d), fut)
    evo = _mi_from_cov(cov, slice(d, (k + 1) * d), slice((k + 1) * d, (k + 2) * d))
    return i_k, i_k1 - i_k, evo


# -- plug-in estimator for binary sequences ----------------------------------

def _step_codes(data: SequenceDataset) -> np.ndarray:
    if data.alphabet != BINARY:
        raise InvalidParameterError("the plug-in estimator needs a binary (+1/-1) sequence")
    bits = (data.values > 0).astype(np.int64)
    return bits @ (1 << np.arange(data.d, dtype=np.int64))


def _window_codes(steps: np.ndarray, d: int, start: int, length: int, count: int) -> np.ndarray:
    codes = np.zeros(count, dtype=np.int64)
    for i in range(length):
        codes |= steps[start + i : start + i + count] << (i * d)
    return codes


def _entropy_of_codes(codes: np.ndarray, n_cells: int) -> float:
    counts = np.bincount(codes, minlength=n_cells)
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def _check_context(bits: int, n: int) -> None:
    if bits > MAX_CONTEXT_BITS:
        raise ContextSpaceTooLargeError(f"context space 2^{bits} exceeds 2^{MAX_CONTEXT_BITS}")
    if n < DATA_PER_CELL * 2**bits:
        warnings.warn(f"N={n} is below {DATA_PER_CELL} * 2^{bits}; plug-in estimates are biased",
                      InsufficientDataWarning, stacklevel=3)


def plugin_ipred(data: SequenceDataset, k: int, kprime: int) -> float:
    """Plug-in mutual information between k-pasts and k'-futures of a binary sequence, in nats."""
    if k < 1 or kprime < 1:
        raise InvalidParameterError("k and k' must be >= 1")
    steps = _step_codes(data)
    d, n = data.d, data.n
    _check_context((k + kprime) * d, n)
    count = n - k - kprime + 1
    if count < 1:
        raise SequenceTooShortError(f"sequence of length {n} is shorter than k + k' = {k + kprime}")
    past = _window_codes(steps, d, 0, k, count)
    fut = _window_codes(steps, d, k, kprime, count)
    joint = past | (fut << (k * d))
    return (_entropy_of_codes(past, 2 ** (k * d)) + _entropy_of_codes(fut, 2 ** (kprime * d))
            - _entropy_of_codes(joint, 2 ** ((k + kprime) * d)))


def plugin_evorate(data: SequenceDataset, k: int) -> float:
    return plugin_ipred(data, k, 1)


def block_entropies(data: SequenceDataset, max_length: int) -> np.ndarray:
    """H_L, the plug-in entropy of L-grams, for L = 0..max_length (H_0 = 0)."""
    steps = _step_codes(data)
    d, n = data.d, data.n
    if max_length * d > MAX_CONTEXT_BITS:
        raise ContextSpaceTooLargeError(f"context space 2^{max_length * d} exceeds 2^{MAX_CONTEXT_BITS}")
    if n < max_length + 1:
        raise SequenceTooShortError(f"sequence of length {n} is too short for {max_length}-grams")
    out = np.zeros(max_length + 1)
    count = n - max_length + 1
    for length in range(1, max_length + 1):
        out[length] = _entropy_of_codes(_window_codes(steps, d, 0, length, count), 2 ** (length * d))
    return out


def plugin_conditional_entropies(data: SequenceDataset, max_k: int) -> np.ndarray:
    """ĥ(k) = H_{k+1} - H_k for k = 0..max_k."""
    return np.diff(block_entropies(data, max_k + 1))


def reliable_max_order(n: int, d: int = 1) -> int:
    """Largest k whose (k+1)-gram space still has 50 samples per cell."""
    k = 0
    while DATA_PER_CELL * 2 ** ((k + 2) * d) <= n:
        k += 1
    return k


@dataclass(frozen=True)
class EntropyRateFit:
    l0: float
    coef_inv: float
    coef_inv2: float
    orders: tuple[int, int]


def extrapolate_entropy_rate(h: np.ndarray, lo: int, hi: int) -> EntropyRateFit:
    """Least-squares fit ĥ(j) ≈ l0 + b/j + c/j^2 over j = lo..hi; l0 is the extrapolated rate."""
    if lo < 1 or hi - lo < 2 or hi >= len(h):
        raise InvalidParameterError(f"need at least three orders in 1..{len(h) - 1}, got [{lo}, {hi}]")
    j = np.arange(lo, hi + 1, dtype=np.float64)
    design = np.column_stack([np.ones_like(j), 1.0 / j, 1.0 / j**2])
    coef, *_ = np.linalg.lstsq(design, h[lo : hi + 1], rcond=None)
    return EntropyRateFit(float(coef[0]), float(coef[1]), float(coef[2]), (lo, hi))


# -- learning curves ---------------------------------------------------------

def _check_k_range(k_range) -> list[int]:
    ks = [int(k) for k in k_range]
    if not ks:
        raise InvalidParameterError("k_range is empty")
    if ks[0] < 1 or any(b != a + 1 for a, b in zip(ks, ks[1:])):
        raise InvalidParameterError(f"k_range must be contiguous, ascending and start at >= 1, got {ks}")
    return ks


def _mean_stderr(xs) -> tuple[float, float]:
    xs = [x for x in xs if math.isfinite(x)]
    if not xs:
        return math.nan, math.nan
    if len(xs) == 1:
        return float(xs[0]), math.nan
    a = np.asarray(xs)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(len(a)))


def _neural_cell(task):
    values, d, k, kprime, critic, bound, cfg, with_evorate = task
    data = SequenceDataset(values)
    try:
        i_k, _ = train_ipred(data, k, kprime, critic, bound, cfg)
        i_k1, _ = train_ipred(data, k + 1, kprime, critic, bound, cfg)
        evo = train_ipred(data, k, 1, critic, bound, cfg)[0] if with_evorate else math.nan
        return (i_k, i_k1 - i_k, evo), None
    except PredInfoError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _segments(data: SequenceDataset, count: int) -> list[SequenceDataset]:
    size = data.n // count
    return [SequenceDataset(data.values[i * size : (i + 1) * size], data.alphabet, data.generator_tag, data.seed)
            for i in range(count)]


def _assemble(ks, kprimes, cells, failed, estimator, critic_name, seed_count, flags) -> CurveEstimate:
    ip, ip_se, lam, lam_se, evo, evo_se = [], [], [], [], [], []
    for k in ks:
        rows = cells.get(k, [])
        for store, store_se, idx in ((ip, ip_se, 0), (lam, lam_se, 1), (evo, evo_se, 2)):
            m, s = _mean_stderr([r[idx] for r in rows])
            store.append(m)
            store_se.append(s)
    return CurveEstimate(k_values=list(ks), ipred=ip, ipred_stderr=ip_se, lambda_=lam, stderr=lam_se,
                         evorate=evo, evorate_stderr=evo_se, kprime_used=[float(x) for x in kprimes],
                         estimator=estimator, critic=critic_name, seed_count=seed_count, failed=failed, flags=flags)


def _gaussian_curve(data, ks, rule, replications) -> CurveEstimate:
    kprimes = [rule(k) for k in ks]
    cells, failed = {}, {}
    full = {}
    for k, kp in zip(ks, kprimes):
        try:
            full[k] = _gaussian_cell(data.values, k, kp)
        except PredInfoError as exc:
            failed.setdefault(k, []).append(f"full: {type(exc).__name__}: {exc}")
    seg_rows: dict[int, list] = {k: [] for k in ks}
    if replications > 1:
        for i, seg in enumerate(_segments(data, replications)):
            for k, kp in zip(ks, kprimes):
                try:
                    seg_rows[k].append(_gaussian_cell(seg.values, k, kp))
                except PredInfoError as exc:
                    failed.setdefault(k, []).append(f"segment {i}: {type(exc).__name__}: {exc}")
    curve = _assemble(ks, kprimes, {k: [full[k]] for k in full}, failed, "gaussian", "", replications, {})
    # point estimates from the whole sequence, spread from disjoint segments
    for i, k in enumerate(ks):
        rows = seg_rows[k]
        if len(rows) >= 2:
            arr = np.asarray(rows)
            se = arr.std(axis=0, ddof=1) / math.sqrt(len(rows))
            curve.ipred_stderr[i], curve.stderr[i], curve.evorate_stderr[i] = map(float, se)
    return curve


def default_fit_orders(n: int, d: int = 1) -> tuple[int, int]:
    """Orders 2..k_max used for the l0 extrapolation.

    Order 1 is skipped: with a sign-symmetric coupling distribution one past symbol carries
    almost no information, which bends the 1/j expansion at j = 1.
    """
    return 2, max(4, reliable_max_order(n, d))


def _plugin_values(data: SequenceDataset, ks, kprimes, fit_orders):
    h = plugin_conditional_entropies(data, max(max(ks), fit_orders[1]))
    fit = extrapolate_entropy_rate(h, *fit_orders)
    rows = {}
    for k, kp in zip(ks, kprimes):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InsufficientDataWarning)
            rows[k] = (plugin_ipred(data, k, kp), float(h[k] - fit.l0), plugin_evorate(data, k))
    return rows, fit


def _plugin_curve(data, ks, rule, replications) -> CurveEstimate:
    n, d = data.n, data.d
    k_reliable = reliable_max_order(n, d)
    # the joint (k + k')-gram is kept inside the well-sampled range
    kprimes = [max(1, min(rule(k), k_reliable + 1 - k)) for k in ks]
    fit_orders = default_fit_orders(n, d)
    rows, fit = _plugin_values(data, ks, kprimes, fit_orders)
    flags = {"lambda_method": "entropy-rate extrapolation", "fit_orders": list(fit_orders), "l0": fit.l0,
             "unreliable_k": [k for k in ks if k > k_reliable]}
    failed = {}
    curve = _assemble(ks, kprimes, {k: [rows[k]] for k in ks}, failed, "plugin", "", replications, flags)
    if replications > 1:
        seg_rows = {k: [] for k in ks}
        for i, seg in enumerate(_segments(data, replications)):
            try:
                srows, _ = _plugin_values(seg, ks, kprimes, default_fit_orders(seg.n, d))
            except PredInfoError as exc:
                failed.setdefault(0, []).append(f"segment {i}: {type(exc).__name__}: {exc}")
                continue
            for k in ks:
                seg_rows[k].append(srows[k])
        for i, k in enumerate(ks):
            if len(seg_rows[k]) >= 2:
                se = np.asarray(seg_rows[k]).std(axis=0, ddof=1) / math.sqrt(len(seg_rows[k]))
                curve.ipred_stderr[i], curve.stderr[i], curve.evorate_stderr[i] = map(float, se)
    return curve


def estimate_lambda_curve(data: SequenceDataset, k_range, kprime_rule=None, critic: CriticSpec | None = None,
                          bound: BoundSpec | None = None, cfg: TrainConfig | None = None,
                          estimator: str | None = None, jobs: int | None = 1,
                          with_evorate: bool = True) -> CurveEstimate:
    """Λ̂(k) = Î(k+1, k') - Î(k, k') with k' = kprime_rule(k), replicated ``cfg.replications`` times.

    ``estimator`` defaults to ``plugin`` for binary data and ``neural`` otherwise.  Neural
    replications retrain with independent seeds; the gaussian and plug-in paths take their point
    estimate from the whole sequence and their standard error from disjoint segments.  For binary
    data Λ̂(k) is ĥ(k) - l̂0 with l̂0 extrapolated from the plug-in conditional entropies, since
    the (k+1+k')-grams of the finite-k' formula are not sampled densely enough.
    """
    ks = _check_k_range(k_range)
    rule = resolve_kprime_rule(kprime_rule)
    cfg = cfg or TrainConfig()
    if estimator is None:
        estimator = "plugin" if data.alphabet == BINARY else "neural"
    if estimator not in ESTIMATORS:
        raise InvalidParameterError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    if estimator == "plugin":
        return _plugin_curve(data, ks, rule, cfg.replications)
    if data.alphabet != CONTINUOUS:
        raise InvalidParameterError(f"the {estimator} estimator needs continuous data")
    if estimator == "gaussian":
        return _gaussian_curve(data, ks, rule, cfg.replications)

    critic = critic or CriticSpec()
    bound = bound or BoundSpec()
    kprimes = [rule(k) for k in ks]
    tasks, keys = [], []
    for k, kp in zip(ks, kprimes):
        for rep in range(cfg.replications):
            rep_cfg = replace(cfg, seed=derive_seed(cfg.seed, "replication", rep))
            tasks.append((np.asarray(data.values), data.d, k, kp, critic, bound, rep_cfg, with_evorate))
            keys.append((k, rep))
    results = run_ordered(_neural_cell, tasks, jobs)
    cells, failed = {}, {}
    for (k, rep), (row, err) in zip(keys, results):
        if err is None:
            cells.setdefault(k, []).append(row)
        else:
            failed.setdefault(k, []).append(f"replication {rep}: {err}")
    return _assemble(ks, kprimes, cells, failed, "neural:" + bound.kind, critic.architecture, cfg.replications, {})


# -- persistence -------------------------------------------------------------

CURVE_HEADER = ["k", "kprime", "ipred_mean", "ipred_stderr", "lambda_mean", "lambda_stderr",
                "evorate_mean", "evorate_stderr", "estimator", "critic", "seed_count"]


def curve_rows(curve: CurveEstimate) -> list[list]:
    rows = []
    for i, k in enumerate(curve.k_values):
        kp = curve.kprime_used[i]
        rows.append([k, int(kp) if math.isfinite(kp) else kp, curve.ipred[i], curve.ipred_stderr[i],
                     curve.lambda_[i], curve.stderr[i], curve.evorate[i], curve.evorate_stderr[i],
                     curve.estimator, curve.critic, curve.seed_count])
    return rows


def write_curve_csv(path, curve: CurveEstimate, meta: dict | None = None) -> None:
    write_table(path, CURVE_HEADER, curve_rows(curve), meta)


def read_curve_csv(path) -> tuple[dict, CurveEstimate]:
    meta, header, rows = read_table(path)
    if header != CURVE_HEADER:
        raise InvalidParameterError(f"{path}: unexpected curve header {header}")
    col = {name: [r[i] for r in rows] for i, name in enumerate(header)}
    f = lambda name: [float(x) for x in col[name]]  # noqa: E731
    curve = CurveEstimate(
        k_values=[int(x) for x in col["k"]], ipred=f("ipred_mean"), ipred_stderr=f("ipred_stderr"),
        lambda_=f("lambda_mean"), stderr=f("lambda_stderr"), evorate=f("evorate_mean"),
        evorate_stderr=f("evorate_stderr"), kprime_used=f("kprime"),
        estimator=col["estimator"][0] if rows else "", critic=col["critic"][0] if rows else "",
        seed_count=int(col["seed_count"][0]) if rows else 1,
    )
    return meta, curve


def write_trace_csv(path, trace: np.ndarray, meta: dict | None = None) -> None:
    write_table(path, ["iteration", "bound_value"], [[i, float(v)] for i, v in enumerate(trace)], meta)
