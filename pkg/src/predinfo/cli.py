"""Command-line entry point: ``predinfo {generate, estimate-mi, learning-curve, risk-oracle, reproduce}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 partial results written.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundSpec
from .config import ExperimentConfig, config_hash, load_config, recipe_names, recipe_path
from .core import BINARY, CONTINUOUS, SequenceDataset, derive_seed, make_rng_stream
from .critics import CriticSpec
from .errors import ConfigError, InvalidParameterError, PredInfoError
from .generators import IsingConfig, KernelSpec, sample_ar1_vector, sample_ar_process, sample_gp, sample_ising_chain
from .io import read_pisq, read_sequence_csv, write_pisq, write_sequence_csv, write_sidecar, write_table
from .mi_estimation import (TrainConfig, estimate_lambda_curve, gaussian_ipred, plugin_ipred, resolve_kprime_rule,
                            train_ipred, write_curve_csv, write_trace_csv)
from .oracles import ar_process_ipred, gaussian_ipred_closed_form, theoretical_learning_curve
from .parallel import resolve_jobs, run_ordered
from .risk import (FitConfig, PredictorSpec, critical_zone, fit_predictor, fixed_coupling_entropy_rate, risk_oracle,
                   write_report_csv)

log = logging.getLogger("predinfo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
# AR-kernel GPs longer than this are drawn with the equivalent AR(1) recursion instead of a Cholesky factor
GP_CHOLESKY_LIMIT = 4000


@dataclass
class RunResult:
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.failed else EXIT_OK


# -- shared helpers ----------------------------------------------------------

def file_meta(cfg: ExperimentConfig) -> dict:
    return {"tool": "predinfo", "version": __version__, "config_hash": config_hash(cfg), "seed": cfg.seed}


def _kernel(cfg_kernel) -> KernelSpec:
    return KernelSpec(**cfg_kernel.model_dump())


def build_dataset(cfg: ExperimentConfig, gen=None) -> tuple[SequenceDataset, dict]:
    """Draw (or load) the sequence named by the generator section; returns extra facts such as couplings."""
    gen = gen or cfg.generator
    rng = make_rng_stream(cfg.seed, f"generator/{gen.kind}")
    extra: dict = {}
    if gen.kind == "gp":
        spec = _kernel(gen.kernel)
        if spec.kind == "AR" and gen.n > GP_CHOLESKY_LIMIT:
            z = sample_ar1_vector(spec.rho, gen.n, gen.d, rng, cfg.seed)
            data = SequenceDataset(z.values * spec.sigma, CONTINUOUS, "gp:AR", cfg.seed,
                                   {"kernel": spec.__dict__.copy(), "n": gen.n, "d": gen.d, "method": "recursion"})
        else:
            data = sample_gp(spec, gen.n, gen.d, 1, rng, seed=cfg.seed)[0]
    elif gen.kind == "ar":
        data = sample_ar_process(gen.p, gen.rho, gen.n, gen.d, rng, cfg.seed)
    elif gen.kind == "ar1":
        data = sample_ar1_vector(gen.rho, gen.n, gen.d, rng, cfg.seed)
    elif gen.kind == "iid":
        if gen.alphabet == BINARY:
            vals = np.where(rng.random((gen.n, gen.d)) < 0.5, -1.0, 1.0)
        else:
            vals = rng.standard_normal((gen.n, gen.d))
        data = SequenceDataset(vals, gen.alphabet, "iid", cfg.seed, {"n": gen.n, "d": gen.d})
    elif gen.kind == "ising":
        ic = IsingConfig(gen.T, gen.M, cfg.seed, gen.coupling_std, gen.coupling)
        data, couplings = sample_ising_chain(ic, rng)
        extra["couplings"] = couplings.tolist()
    else:
        path = Path(gen.path)
        if path.suffix == ".pisq":
            vals = read_pisq(path)
            alphabet = gen.alphabet or (BINARY if np.all(np.abs(vals) == 1.0) else CONTINUOUS)
            data = SequenceDataset(vals, alphabet, "file", cfg.seed, {"path": str(path)})
        else:
            data = read_sequence_csv(path, gen.alphabet)
    return data, extra


def _sidecar(path: Path, cfg: ExperimentConfig, command: str, started: float, extra: dict) -> None:
    payload = {
        **file_meta(cfg), "command": command, "config": cfg.model_dump(mode="json"),
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(), "elapsed_s": round(time.time() - started, 3),
        **extra,
    }
    write_sidecar(path, payload)


def _out_dir(cfg: ExperimentConfig, out: str | None) -> Path:
    p = Path(out or cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- generate ----------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig, out: str | None = None) -> RunResult:
    started = time.time()
    res = RunResult(_out_dir(cfg, out))
    data, extra = build_dataset(cfg)
    csv_path, bin_path, side = res.out_dir / "data.csv", res.out_dir / "data.pisq", res.out_dir / "data.json"
    meta = {**file_meta(cfg), "generator": data.generator_tag}
    write_sequence_csv(csv_path, data, meta)
    write_pisq(bin_path, data.values)
    _sidecar(side, cfg, "generate", started, {"generator": data.generator_tag, "params": data.params,
                                              "alphabet": data.alphabet, "shape": list(data.values.shape), **extra})
    res.files += [csv_path, bin_path, side]
    res.summary = {"n": data.n, "d": data.d, "alphabet": data.alphabet}
    return res


# -- estimate-mi -------------------------------------------------------------

def _variants(cfg: ExperimentConfig) -> list[tuple[dict, object]]:
    """Expand the optional rho/d sweep into concrete generator sections."""
    gen = cfg.generator
    sweep = cfg.estimator.sweep
    if not sweep:
        return [({}, gen)]
    out = []
    rhos = sweep.get("rho", [None])
    ds = sweep.get("d", [None])
    for rho in rhos:
        for d in ds:
            upd, label = {}, {}
            if rho is not None:
                if gen.kind == "gp":
                    upd["kernel"] = gen.kernel.model_copy(update={"rho": float(rho)})
                elif gen.kind in ("ar", "ar1"):
                    upd["rho"] = float(rho)
                else:
                    raise ConfigError(f"estimator.sweep.rho does not apply to a {gen.kind} generator")
                label["rho"] = float(rho)
            if d is not None:
                if not hasattr(gen, "d"):
                    raise ConfigError(f"estimator.sweep.d does not apply to a {gen.kind} generator")
                upd["d"] = int(d)
                label["d"] = int(d)
            out.append((label, gen.model_copy(update=upd)))
    return out


def theoretical_ipred(gen, k: int, kprime: int) -> float:
    """Exact I_pred for generators with a closed form; NaN otherwise."""
    if gen.kind == "gp":
        return gaussian_ipred_closed_form(_kernel(gen.kernel), k, kprime, gen.d)
    if gen.kind == "ar1":
        return gaussian_ipred_closed_form(KernelSpec("AR", rho=gen.rho, sigma=1.0), k, kprime, gen.d)
    if gen.kind == "ar":
        return ar_process_ipred(gen.p, gen.rho, k, kprime, gen.d)
    if gen.kind == "iid":
        return 0.0
    return math.nan


def _train_task(task):
    values, alphabet, k, kprime, critic, bound, tcfg = task
    data = SequenceDataset(values, alphabet)
    try:
        est, trace = train_ipred(data, k, kprime, critic, bound, tcfg)
        return est, trace, None
    except PredInfoError as exc:
        return math.nan, None, f"{type(exc).__name__}: {exc}"


def cmd_estimate_mi(cfg: ExperimentConfig, out: str | None = None, jobs: int | None = None) -> RunResult:
    started = time.time()
    res = RunResult(_out_dir(cfg, out))
    est = cfg.estimator
    meta = file_meta(cfg)
    rule = resolve_kprime_rule(est.kprime)
    variants = _variants(cfg)
    if est.method == "closed-form":
        rows = []
        for label, gen in variants:
            for k in cfg.k_grid:
                kp = rule(k)
                rows.append([label.get("rho", ""), label.get("d", getattr(gen, "d", "")), k, kp,
                             theoretical_ipred(gen, k, kp)])
        path = res.out_dir / "closed_form.csv"
        write_table(path, ["rho", "d", "k", "kprime", "theoretical_mi"], rows, meta)
        res.files.append(path)
        _sidecar(res.out_dir / "closed_form.json", cfg, "estimate-mi", started, {})
        return res

    tcfg = TrainConfig(**est.train.model_dump(), seed=cfg.seed)
    header = ["rho", "d", "estimator", "critic", "k", "kprime", "replication", "estimate", "theoretical_mi"]
    rows, summary_rows = [], []
    trace_dir = res.out_dir / "traces"
    for label, gen in variants:
        data, _ = build_dataset(cfg, gen)
        theory = {k: theoretical_ipred(gen, k, rule(k)) for k in cfg.k_grid}
        method = est.method if est.method != "auto" else ("plugin" if data.alphabet == BINARY else "neural")
        cells = []
        if method == "neural":
            tasks = []
            for bound_kind in est.bounds:
                for arch in est.critics:
                    critic = CriticSpec(arch, est.critic.embed_dim, tuple(est.critic.hidden), est.critic.lstm_width)
                    bound = BoundSpec(bound_kind, est.smile_clip)
                    for k in cfg.k_grid:
                        for rep in range(tcfg.replications):
                            rcfg = TrainConfig(**{**est.train.model_dump(),
                                                  "seed": derive_seed(cfg.seed, "replication", rep)})
                            tasks.append((np.asarray(data.values), data.alphabet, k, rule(k), critic, bound, rcfg))
                            cells.append((bound_kind, arch, k, rule(k), rep))
            results = run_ordered(_train_task, tasks, jobs)
        else:
            fn = gaussian_ipred if method == "gaussian" else plugin_ipred
            results = []
            for k in cfg.k_grid:
                try:
                    results.append((fn(data, k, rule(k)), None, None))
                except PredInfoError as exc:
                    results.append((math.nan, None, f"{type(exc).__name__}: {exc}"))
                cells.append((method, "", k, rule(k), 0))
        tag = "_".join(f"{a}{b}" for a, b in label.items())
        by_group: dict = {}
        for (bound_kind, arch, k, kp, rep), (value, trace, err) in zip(cells, results):
            rows.append([label.get("rho", ""), label.get("d", data.d), bound_kind, arch, k, kp, rep, value, theory[k]])
            by_group.setdefault((bound_kind, arch, k, kp), []).append(value)
            if err is not None:
                res.failed.append(f"{tag or 'base'} {bound_kind}/{arch} k={k} replication={rep}: {err}")
            if trace is not None:
                trace_dir.mkdir(exist_ok=True)
                name = f"trace_{tag + '_' if tag else ''}{bound_kind}_{arch}_k{k}_r{rep}.csv"
                write_trace_csv(trace_dir / name, trace, meta)
        for (bound_kind, arch, k, kp), vals in by_group.items():
            good = [v for v in vals if math.isfinite(v)]
            mean = float(np.mean(good)) if good else math.nan
            se = float(np.std(good, ddof=1) / math.sqrt(len(good))) if len(good) > 1 else math.nan
            summary_rows.append([label.get("rho", ""), label.get("d", data.d), bound_kind, arch, k, kp, mean, se,
                                 len(good), theory[k]])
    runs_path, summary_path = res.out_dir / "estimates.csv", res.out_dir / "summary.csv"
    write_table(runs_path, header, rows, meta)
    write_table(summary_path, ["rho", "d", "estimator", "critic", "k", "kprime", "ipred_mean", "ipred_stderr",
                               "seed_count", "theoretical_mi"], summary_rows, meta)
    _sidecar(res.out_dir / "estimates.json", cfg, "estimate-mi", started, {"failed": res.failed})
    res.files += [runs_path, summary_path]
    res.summary = {"rows": len(rows)}
    return res


# -- learning-curve ----------------------------------------------------------

def plot_script(curve_csv: str, theory_csv: str | None, threshold: float, title: str) -> str:
    """Self-contained gnuplot script: Λ̂ with error bars, Λ̃ if available, and the critical-zone band."""
    lines = [
        "# learning curve with the critical-zone band",
        "set terminal pngcairo size 900,600",
        f"set output '{Path(curve_csv).stem}.png'",
        "set datafile separator ','",
        f"set title '{title}'",
        "set xlabel 'k'",
        "set ylabel 'Lambda(k) [nats]'",
        "set grid",
        f"set object 1 rect from graph 0, first 0 to graph 1, first {threshold} fc rgb '#dddddd' fs solid 0.5 behind",
        f"set arrow 1 from graph 0, first {threshold} to graph 1, first {threshold} nohead dt 2 lc rgb '#555555'",
    ]
    plot = [f"'{Path(curve_csv).name}' skip 2 using 1:5:6 with yerrorlines lw 2 title 'estimated'"]
    if theory_csv:
        plot.append(f"'{Path(theory_csv).name}' skip 2 using 1:3 with linespoints dt 3 title 'ridge'")
    lines.append("plot " + ", \\\n     ".join(plot))
    return "\n".join(lines) + "\n"


def cmd_learning_curve(cfg: ExperimentConfig, out: str | None = None, jobs: int | None = None) -> RunResult:
    started = time.time()
    res = RunResult(_out_dir(cfg, out))
    meta = file_meta(cfg)
    est = cfg.estimator
    data, extra = build_dataset(cfg)
    curve_path = theory_path = None
    zone = None
    if cfg.analysis.curve:
        method = None if est.method in ("auto", "closed-form") else est.method
        critic = CriticSpec(est.critics[0], est.critic.embed_dim, tuple(est.critic.hidden), est.critic.lstm_width)
        bound = BoundSpec(est.bounds[0], est.smile_clip)
        tcfg = TrainConfig(**est.train.model_dump(), seed=cfg.seed)
        curve = estimate_lambda_curve(data, cfg.k_grid, est.kprime, critic, bound, tcfg, method, jobs)
        curve_path = res.out_dir / "curve.csv"
        write_curve_csv(curve_path, curve, meta)
        res.files.append(curve_path)
        for k, msgs in curve.failed.items():
            res.failed += [f"k={k}: {m}" for m in msgs]
        zone = critical_zone(curve, cfg.analysis.threshold)
        res.summary["critical_zone"] = zone
        res.summary["flags"] = curve.flags
    if cfg.analysis.theoretical:
        gen = cfg.generator
        if gen.kind not in ("ar", "ar1", "iid") or data.alphabet != CONTINUOUS:
            raise ConfigError("analysis.theoretical needs an ar, ar1 or continuous iid generator")
        p_true = {"ar": getattr(gen, "p", 0), "ar1": 1, "iid": 0}[gen.kind]
        rho = getattr(gen, "rho", 0.0)
        rule = resolve_kprime_rule(est.kprime)
        rows = [[e.k, theoretical_ipred(gen, e.k, rule(e.k)), e.lambda_tilde, e.l_k, e.l0]
                for e in theoretical_learning_curve(data, p_true, rho, cfg.k_grid, cfg.analysis.ridge)]
        theory_path = res.out_dir / "theoretical.csv"
        write_table(theory_path, ["k", "ipred_closed", "lambda_tilde", "l_k", "l0"], rows, meta)
        res.files.append(theory_path)
    script = res.out_dir / "learning_curve.gp"
    if curve_path or theory_path:
        src = curve_path or theory_path
        text = plot_script(str(src), str(theory_path) if (theory_path and curve_path) else None,
                           cfg.analysis.threshold, cfg.name)
        if curve_path is None:
            text = text.replace("using 1:5:6 with yerrorlines", "using 1:3 with linespoints")
        script.write_text(text, encoding="utf-8")
        res.files.append(script)
    _sidecar(res.out_dir / "curve.json", cfg, "learning-curve", started,
             {"critical_zone": zone, "failed": res.failed, **extra})
    return res


# -- risk-oracle -------------------------------------------------------------

def _fit_task(task):
    values, k, spec, fcfg = task
    try:
        return fit_predictor(SequenceDataset(values, BINARY), k, spec, fcfg)[1], None
    except PredInfoError as exc:
        return math.nan, f"{type(exc).__name__}: {exc}"


def cmd_risk_oracle(cfg: ExperimentConfig, out: str | None = None, jobs: int | None = None) -> RunResult:
    started = time.time()
    res = RunResult(_out_dir(cfg, out))
    meta = file_meta(cfg)
    risk_cfg = cfg.analysis.risk
    data, extra = build_dataset(cfg)
    if data.alphabet != BINARY:
        raise ConfigError("risk-oracle needs a binary generator (ising, binary iid or a +/-1 file)")
    tasks, keys = [], []
    for family in risk_cfg.families:
        spec = PredictorSpec(family, tuple(risk_cfg.mlp_hidden), risk_cfg.lstm_width)
        for k in cfg.k_grid:
            for s in range(risk_cfg.seeds):
                fcfg = FitConfig(**risk_cfg.fit.model_dump(), seed=derive_seed(cfg.seed, "fit", s))
                tasks.append((np.asarray(data.values), k, spec, fcfg))
                keys.append((family, k, s))
    results = run_ordered(_fit_task, tasks, jobs)
    fit_rows, collected = [], {}
    for (family, k, s), (risk, err) in zip(keys, results):
        fit_rows.append([family, k, s, risk])
        collected.setdefault(family, {}).setdefault(k, []).append(risk)
        if err is not None:
            res.failed.append(f"{family} k={k} seed={s}: {err}")
    per_k, per_k_se = {}, {}
    for family, table in collected.items():
        per_k[family], per_k_se[family] = {}, {}
        for k, vals in table.items():
            good = [v for v in vals if math.isfinite(v)]
            per_k[family][k] = float(np.mean(good)) if good else math.nan
            per_k_se[family][k] = float(np.std(good, ddof=1) / math.sqrt(len(good))) if len(good) > 1 else math.nan
    est = cfg.estimator
    tcfg = TrainConfig(**est.train.model_dump(), seed=cfg.seed)
    curve = estimate_lambda_curve(data, cfg.k_grid, est.kprime, None, None, tcfg, "plugin", jobs)
    p_k = cfg.analysis.p_hat_k if cfg.analysis.p_hat_k in cfg.k_grid else None
    report = risk_oracle(per_k, curve, p_k, cfg.analysis.threshold, per_k_se)
    report_path, fits_path, curve_path = (res.out_dir / "risk_report.csv", res.out_dir / "fits.csv",
                                          res.out_dir / "curve.csv")
    write_report_csv(report_path, report, meta)
    write_table(fits_path, ["family", "k", "seed", "validation_risk"], fit_rows, meta)
    write_curve_csv(curve_path, curve, meta)
    res.files += [report_path, fits_path, curve_path]
    if cfg.generator.kind == "ising" and "couplings" in extra and len(extra["couplings"]) == 1:
        res.summary["analytic_entropy_rate"] = fixed_coupling_entropy_rate(extra["couplings"][0])
    res.summary.update({"oracle_risk": report.oracle_risk, "k_star": report.k_star, "p_hat": report.p_hat})
    _sidecar(res.out_dir / "risk_report.json", cfg, "risk-oracle", started,
             {"failed": res.failed, "summary": res.summary, "negative_lambda": report.negative_lambda, **extra})
    return res


COMMANDS = {
    "generate": lambda cfg, out, jobs: cmd_generate(cfg, out),
    "estimate-mi": cmd_estimate_mi,
    "learning-curve": cmd_learning_curve,
    "risk-oracle": cmd_risk_oracle,
}


# -- argument parsing --------------------------------------------------------

def _common(p: argparse.ArgumentParser, with_config: bool = True) -> None:
    if with_config:
        p.add_argument("--config", required=True, help="experiment YAML")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $PREDINFO_JOBS or 1)")
    p.add_argument("--out", default=None, help="output directory (default: the config's out)")
    p.add_argument("--full", action="store_true", help="apply the full-size overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predinfo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"predinfo {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("generate", "draw a synthetic sequence"),
                            ("estimate-mi", "estimate I_pred(k, k') per estimator, critic, k and seed"),
                            ("learning-curve", "estimate the learning curve and its critical zone"),
                            ("risk-oracle", "fit predictors and reduce them with the minimal-risk oracle")):
        _common(sub.add_parser(name, help=help_text))
    rp = sub.add_parser("reproduce", help="run a bundled recipe")
    rp.add_argument("recipe", help=f"one of: {', '.join(recipe_names())}")
    _common(rp, with_config=False)
    sub.add_parser("recipes", help="list bundled recipes")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "recipes":
        print("\n".join(recipe_names()))
        return EXIT_OK
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        if args.command == "reproduce":
            cfg = load_config(recipe_path(args.recipe), args.full, overrides)
            if cfg.command is None:
                raise ConfigError(f"recipe {args.recipe} does not name a command")
            command = cfg.command
        else:
            cfg = load_config(args.config, args.full, overrides)
            command = args.command
        result = COMMANDS[command](cfg, args.out, resolve_jobs(args.jobs))
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, PredInfoError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in result.files:
        print(f)
    if result.summary:
        for key, value in result.summary.items():
            print(f"{key}: {value}")
    if result.failed:
        print(f"{len(result.failed)} cell(s) failed; partial results written:", file=sys.stderr)
        for line in result.failed:
            print(f"  {line}", file=sys.stderr)
    return result.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
