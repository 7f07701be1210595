"""Experiment configuration: a YAML document validated by pydantic before any compute starts."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bounds import BOUND_KINDS
from .critics import CRITIC_KINDS
from .errors import ConfigError
from .generators import KERNEL_KINDS
from .risk import FAMILIES


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelConfig(_Strict):
    kind: Literal[KERNEL_KINDS]  # type: ignore[valid-type]
    rho: float | None = None
    lengthscale: float | None = None
    period: float | None = None
    decay: float | None = None
    theta: float | None = None
    sigma: float | None = None


class GPGenerator(_Strict):
    kind: Literal["gp"]
    kernel: KernelConfig = KernelConfig(kind="AR")
    n: int = Field(4000, ge=2)
    d: int = Field(1, ge=1)


class ARGenerator(_Strict):
    kind: Literal["ar"]
    p: int = Field(ge=1)
    rho: float = Field(0.8, gt=0, lt=1)
    n: int = Field(100_000, ge=2)
    d: int = Field(1, ge=1)


class AR1Generator(_Strict):
    kind: Literal["ar1"]
    rho: float = Field(0.8, gt=-1, lt=1)
    n: int = Field(100_000, ge=2)
    d: int = Field(1, ge=1)


class IIDGenerator(_Strict):
    kind: Literal["iid"]
    alphabet: Literal["continuous", "binary"] = "continuous"
    n: int = Field(100_000, ge=2)
    d: int = Field(1, ge=1)


class IsingGenerator(_Strict):
    kind: Literal["ising"]
    T: int = Field(ge=2)
    M: int = Field(ge=1)
    coupling_std: float = Field(1.0, gt=0)
    coupling: float | None = None

    @model_validator(mode="after")
    def _block_fits(self):
        if self.M > self.T:
            raise ValueError(f"block size M={self.M} exceeds T={self.T}")
        return self


class FileGenerator(_Strict):
    kind: Literal["file"]
    path: str
    alphabet: Literal["continuous", "binary"] | None = None


GeneratorConfig = Annotated[
    Union[GPGenerator, ARGenerator, AR1Generator, IIDGenerator, IsingGenerator, FileGenerator],
    Field(discriminator="kind"),
]


class TrainSection(_Strict):
    batch_size: int = Field(70, ge=2)
    iterations: int = Field(10_000, ge=1)
    lr: float = Field(5e-4, gt=0)
    replications: int = Field(5, ge=1)
    smoothing_fraction: float = Field(0.05, gt=0, le=1)


class CriticSection(_Strict):
    embed_dim: int = Field(32, ge=1)
    hidden: list[int] = [128, 128]
    lstm_width: int = Field(64, ge=1)


class EstimatorSection(_Strict):
    method: Literal["auto", "neural", "gaussian", "plugin", "closed-form"] = "auto"
    critics: list[Literal[CRITIC_KINDS]] = ["Concat"]  # type: ignore[valid-type]
    bounds: list[Literal[BOUND_KINDS]] = ["InfoNCE"]  # type: ignore[valid-type]
    smile_clip: float = Field(5.0, gt=0)
    critic: CriticSection = CriticSection()
    train: TrainSection = TrainSection()
    kprime: int | None = Field(None, ge=1)
    sweep: dict[Literal["rho", "d"], list[float]] = {}

    @field_validator("critics", "bounds")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("must name at least one entry")
        return v


class FitSection(_Strict):
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(128, ge=1)
    max_epochs: int = Field(1000, ge=1)
    patience: int = Field(10, ge=1)
    batches_per_epoch: int = Field(50, ge=1)
    train_fraction: float = Field(0.8, gt=0, lt=1)


class RiskSection(_Strict):
    families: list[Literal[FAMILIES]] = ["LSTM", "MLP"]  # type: ignore[valid-type]
    fit: FitSection = FitSection()
    seeds: int = Field(1, ge=1)
    mlp_hidden: list[int] = [64, 32]
    lstm_width: int = Field(32, ge=1)


class AnalysisSection(_Strict):
    curve: bool = True
    theoretical: bool = False
    ridge: float = Field(1e-3, gt=0)
    threshold: float = Field(0.02, gt=0)
    p_hat_k: int | None = Field(None, ge=1)
    risk: RiskSection = RiskSection()


class ExperimentConfig(_Strict):
    name: str = "experiment"
    command: Literal["generate", "estimate-mi", "learning-curve", "risk-oracle"] | None = None
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "results"
    generator: GeneratorConfig
    k_grid: list[int]
    estimator: EstimatorSection = EstimatorSection()
    analysis: AnalysisSection = AnalysisSection()
    full_overrides: dict = {}

    @field_validator("k_grid")
    @classmethod
    def _grid(cls, v):
        if not v:
            raise ValueError("k grid is empty")
        if min(v) < 1:
            raise ValueError("every k must be >= 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("k grid must be strictly increasing")
        return v


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _node_line(node, loc) -> int | None:
    """1-based line of the YAML node addressed by a pydantic error location."""
    line = node.start_mark.line + 1 if node is not None else None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for key_node, value_node in node.value:
                if key_node.value == part:
                    nxt = value_node
                    line = key_node.start_mark.line + 1
                    break
            if nxt is None:
                return line
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            return line
    return line


_GENERATOR_TAGS = ("gp", "ar", "ar1", "iid", "ising", "file")


def _format_errors(exc: ValidationError, root, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = list(err["loc"])
        # pydantic inserts the union tag after "generator"; it is not a key in the document
        if len(loc) > 1 and loc[0] == "generator" and loc[1] in _GENERATOR_TAGS:
            del loc[1]
        field = ".".join(str(p) for p in loc) or "<root>"
        line = _node_line(root, loc)
        where = f"{source}:{line}" if line else source
        lines.append(f"{where}: {field}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>", full: bool = False,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Validate a YAML document; errors carry the line and dotted field name."""
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML syntax error: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    if full and isinstance(raw.get("full_overrides"), dict):
        raw = _deep_merge(raw, raw["full_overrides"])
    if overrides:
        raw = _deep_merge(raw, overrides)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root, source)) from None


def load_config(path, full: bool = False, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p), full, overrides)


def config_hash(cfg: ExperimentConfig) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON form (output location excluded)."""
    payload = cfg.model_dump(mode="json", exclude={"out", "full_overrides"})
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


RECIPE_DIR = Path(__file__).with_name("recipes")


def recipe_names() -> list[str]:
    return sorted(p.stem for p in RECIPE_DIR.glob("*.yaml"))


def recipe_path(name: str) -> Path:
    p = RECIPE_DIR / f"{name}.yaml"
    if not p.exists():
        raise ConfigError(f"unknown recipe {name!r}; available: {', '.join(recipe_names())}")
    return p
