"""Next-symbol predictors, empirical risk curves, the minimal-risk oracle and related read-outs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BINARY, CurveEstimate, RiskReport, SequenceDataset, gather_windows, make_rng_stream
from .errors import GridMismatchError, InvalidParameterError, NonFiniteError, SequenceTooShortError
from .io import format_float, read_table, write_table
from .nn import LSTM, MLP, AdamState, Dense, Module, Tape, adam_step, backprop, softmax_cross_entropy

FAMILIES = ("MLP", "LSTM")
CRITICAL_ZONE_THRESHOLD = 0.02
MIN_EXTRA_SAMPLES = 1000


@dataclass(frozen=True)
class PredictorSpec:
    family: str = "LSTM"
    mlp_hidden: tuple[int, ...] = (64, 32)
    lstm_width: int = 32

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown predictor family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if min(self.mlp_hidden, default=1) < 1 or self.lstm_width < 1:
            raise InvalidParameterError("predictor widths must be positive")


@dataclass(frozen=True)
class FitConfig:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 1000
    patience: int = 10
    batches_per_epoch: int = 50
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise InvalidParameterError(f"patience must be >= 1, got {self.patience}")
        if not 0 < self.train_fraction < 1:
            raise InvalidParameterError(f"train fraction must lie in (0, 1), got {self.train_fraction}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.batches_per_epoch < 1:
            raise InvalidParameterError("batch size, epochs and batches per epoch must be >= 1")
        if not self.lr > 0:
            raise InvalidParameterError(f"learning rate must be > 0, got {self.lr}")


class Predictor(Module):
    """Maps a (B, k*d) block of past symbols to 2-class logits for the next symbol."""

    def __init__(self, spec: PredictorSpec, k: int, d: int, rng: np.random.Generator):
        self.spec, self.k, self.d = spec, k, d
        if spec.family == "MLP":
            self.net = MLP("mlp", [k * d, *spec.mlp_hidden, 2], rng)
            self._modules = [self.net]
        else:
            self.lstm = LSTM("lstm", d, spec.lstm_width, rng)
            self.out = Dense("lstm.out", spec.lstm_width, 2, rng)
            self._modules = [self.lstm, self.out]

    def params(self):
        return [p for m in self._modules for p in m.params()]

    def logits(self, past: np.ndarray, tape: Tape | None = None):
        if past.ndim != 2 or past.shape[1] != self.k * self.d:
            raise InvalidParameterError(f"predictor of order {self.k} expects (B, {self.k * self.d}) inputs, got {past.shape}")
        if self.spec.family == "MLP":
            return self.net(past, tape)
        return self.out(self.lstm(past.reshape(past.shape[0], self.k, self.d), tape), tape)

    def nll(self, past: np.ndarray, labels: np.ndarray, tape: Tape | None = None):
        return softmax_cross_entropy(self.logits(past, tape), labels, tape)


def supervised_pairs(data: SequenceDataset, k: int) -> tuple[np.ndarray, np.ndarray]:
    """All (k-past, next-symbol) pairs; labels are 1 for +1 and 0 for -1 (first component)."""
    origins = np.arange(k, data.n)
    past, fut = gather_windows(data.values, origins, k, 1)
    return past, (fut[:, 0] > 0).astype(np.int64)


def _eval_nll(model: Predictor, x: np.ndarray, y: np.ndarray, chunk: int = 8192) -> float:
    total = 0.0
    for i in range(0, len(y), chunk):
        total += float(model.nll(x[i : i + chunk], y[i : i + chunk]).value) * len(y[i : i + chunk])
    return total / len(y)


def fit_predictor(data: SequenceDataset, k: int, spec: PredictorSpec | None = None,
                  cfg: FitConfig | None = None) -> tuple[Predictor, float]:
    """Train on the first 80% of (past, next) pairs; return the model at its best validation epoch
    and its validation risk (mean negative log-likelihood in nats) on the last 20%."""
    spec = spec or PredictorSpec()
    cfg = cfg or FitConfig()
    if data.alphabet != BINARY:
        raise InvalidParameterError("fit_predictor needs a binary sequence")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if data.n < k + MIN_EXTRA_SAMPLES:
        raise SequenceTooShortError(f"sequence of length {data.n} is shorter than k + {MIN_EXTRA_SAMPLES}")
    x, y = supervised_pairs(data, k)
    split = int(round(cfg.train_fraction * len(y)))
    x_tr, y_tr, x_va, y_va = x[:split], y[:split], x[split:], y[split:]
    tag = f"{spec.family}/{k}"
    model = Predictor(spec, k, data.d, make_rng_stream(cfg.seed, f"predictor-init/{tag}"))
    batch_rng = make_rng_stream(cfg.seed, f"predictor-batches/{tag}")
    adam = AdamState(lr=cfg.lr)
    params = model.params()
    best, best_state, stale = math.inf, model.state_dict(), 0
    for epoch in range(cfg.max_epochs):
        for _ in range(cfg.batches_per_epoch):
            idx = batch_rng.integers(0, len(y_tr), size=cfg.batch_size)
            tape = Tape()
            loss = model.nll(x_tr[idx], y_tr[idx], tape)
            if not math.isfinite(float(loss.value)):
                raise NonFiniteError(f"training loss diverged in epoch {epoch}", iteration=adam.step)
            backprop(tape, loss)
            adam_step(params, adam)
        val = _eval_nll(model, x_va, y_va)
        if not math.isfinite(val):
            raise NonFiniteError(f"validation loss diverged in epoch {epoch}", iteration=adam.step)
        if val < best - 1e-12:
            best, best_state, stale = val, model.state_dict(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    return model, best


def binary_entropy(p: float) -> float:
    """H_b(p) in nats."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1.0 - p) * math.log1p(-p))


def fixed_coupling_entropy_rate(coupling: float) -> float:
    """Conditional entropy H_b(sigmoid(2J)) of the two-state chain with coupling J."""
    return binary_entropy(1.0 / (1.0 + math.exp(-2.0 * coupling)))


# -- oracle algebra ----------------------------------------------------------

def _check_grid(per_k_risk: dict[str, dict[int, float]], curve: CurveEstimate) -> list[int]:
    ks = list(curve.k_values)
    if not ks:
        raise InvalidParameterError("empty k grid")
    for family, table in per_k_risk.items():
        if sorted(int(k) for k in table) != ks:
            raise GridMismatchError(f"risk grid for {family} {sorted(table)} does not match the curve grid {ks}")
    return ks


def dimension_estimate(curve: CurveEstimate, k: int) -> tuple[float, bool]:
    """p̂ = 2 k Λ̂(k), and whether Λ̂(k) was negative (returned unchanged)."""
    if k not in curve.k_values:
        raise InvalidParameterError(f"k={k} is not on the curve grid {curve.k_values}")
    lam = curve.lambda_at(k)
    return 2.0 * k * lam, lam < 0


def critical_zone(curve: CurveEstimate, threshold: float = CRITICAL_ZONE_THRESHOLD) -> int | None:
    """Smallest k with Λ̂(k) <= threshold, or ``None`` when every k stays above it."""
    if not curve.k_values:
        raise InvalidParameterError("empty learning curve")
    for k, lam in zip(curve.k_values, curve.lambda_):
        if math.isfinite(lam) and lam <= threshold:
            return k
    return None


def risk_oracle(per_k_risk: dict[str, dict[int, float]], curve: CurveEstimate, p_hat_k: int | None = None,
                threshold: float = CRITICAL_ZONE_THRESHOLD,
                risk_stderr: dict[str, dict[int, float]] | None = None) -> RiskReport:
    """R̂∞ = min_k {R̂ᵏ - Λ̂(k)} per family, k* = smallest argmin, adequacy r(k) = R̂ᵏ / R̂∞.

    The oracle's standard error combines the Λ̂ and (when given) risk standard errors at k*.
    """
    ks = _check_grid(per_k_risk, curve)
    lam = np.asarray(curve.lambda_, dtype=np.float64)
    lam_se = np.asarray(curve.stderr, dtype=np.float64)
    risks, oracle, oracle_se, k_star, adequacy = {}, {}, {}, {}, {}
    for family in sorted(per_k_risk):
        r = np.array([float(per_k_risk[family][k]) for k in ks])
        risks[family] = r.tolist()
        gap = r - lam
        if not np.any(np.isfinite(gap)):
            oracle[family], oracle_se[family], k_star[family] = math.nan, math.nan, ks[0]
            adequacy[family] = [math.nan] * len(ks)
            continue
        i = int(np.nanargmin(gap))  # first occurrence: ties go to the smallest k
        oracle[family] = float(gap[i])
        parts = [lam_se[i]]
        if risk_stderr and family in risk_stderr:
            parts.append(float(risk_stderr[family][ks[i]]))
        parts = [x for x in parts if math.isfinite(x)]
        oracle_se[family] = math.sqrt(sum(x * x for x in parts)) if parts else math.nan
        k_star[family] = ks[i]
        adequacy[family] = (r / gap[i]).tolist() if gap[i] != 0 else [math.nan] * len(ks)
    p_k = p_hat_k if p_hat_k is not None else ks[-1]
    p_hat = dimension_estimate(curve, p_k)[0] if p_k in ks else math.nan
    return RiskReport(
        k_values=ks, per_k_risk=risks, lambda_=lam.tolist(), lambda_stderr=lam_se.tolist(),
        evorate=[float(x) for x in curve.evorate], oracle_risk=oracle, oracle_stderr=oracle_se, k_star=k_star,
        adequacy=adequacy, p_hat=p_hat, p_hat_k=p_k, critical_zone_threshold=threshold,
        negative_lambda=[k for k, v in zip(ks, lam) if v < 0],
    )


# -- persistence -------------------------------------------------------------

REPORT_HEADER = ["k", "risk_lstm", "risk_mlp", "lambda", "lambda_stderr", "risk_lstm_minus_lambda",
                 "risk_mlp_minus_lambda", "evorate"]


def report_rows(report: RiskReport) -> list[list]:
    """Per-k rows followed by footer rows ``minima``, ``k_star``, ``oracle_stderr`` and ``p_hat``."""
    nan = math.nan
    lstm = report.per_k_risk.get("LSTM", [nan] * len(report.k_values))
    mlp = report.per_k_risk.get("MLP", [nan] * len(report.k_values))
    rows = []
    for i, k in enumerate(report.k_values):
        lam = report.lambda_[i]
        rows.append([k, float(lstm[i]), float(mlp[i]), lam, report.lambda_stderr[i], float(lstm[i]) - lam,
                     float(mlp[i]) - lam, report.evorate[i]])
    def fam(d, name):
        return d.get(name, nan)
    rows.append(["minima", float(np.nanmin(lstm)) if np.any(np.isfinite(lstm)) else nan,
                 float(np.nanmin(mlp)) if np.any(np.isfinite(mlp)) else nan, "", "",
                 fam(report.oracle_risk, "LSTM"), fam(report.oracle_risk, "MLP"), ""])
    rows.append(["oracle_stderr", "", "", "", "", fam(report.oracle_stderr, "LSTM"),
                 fam(report.oracle_stderr, "MLP"), ""])
    rows.append(["k_star", "", "", "", "", report.k_star.get("LSTM", ""), report.k_star.get("MLP", ""), ""])
    rows.append(["p_hat", "", "", report.p_hat, report.p_hat_k, "", "", ""])
    return [[format_float(v) if isinstance(v, float) else v for v in row] for row in rows]


def write_report_csv(path, report: RiskReport, meta: dict | None = None) -> None:
    write_table(path, REPORT_HEADER, report_rows(report), meta)


def read_report_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    return read_table(path)
