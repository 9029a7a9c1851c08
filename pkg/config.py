# =========================
# Imports
# =========================
import configparser
import logging
import logging.config
import os
from pathlib import Path
from typing import Dict, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator

from environment import ENVIRONMENTS
from errors import ConfigError, UnknownNameError
from exploration import ReplayVariant, Strategy, StrategyKind
from gfn_core import DEFAULT_STB_LAMBDA, LOSSES
from langevin import LangevinParams
from metadynamics import MetadParams
from tensor_nn import OptimizerParams

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"

SECTIONS = ("run", "train", "strategy", "metadynamics", "evaluation")
LOGGING_SECTIONS = ("loggers", "handlers", "formatters")

ModeName = Literal["train", "sample_am", "eval"]


# =========================
# Per-environment defaults
# =========================
ENV_DEFAULTS: Dict[str, Dict[str, Dict[str, object]]] = {
    "line": {
        "train": {"hidden": 256, "buffer_threshold": 1e-3},
        "metadynamics": {"dt": 0.05, "stride": 2, "beta": 1.0, "gamma": 2.0, "w": 0.15, "width": (0.1,), "epsilon": 1e-3},
        "evaluation": {"spacing": 0.01},
    },
    "grid": {
        "train": {"hidden": 512, "buffer_threshold": 1e-4},
        "metadynamics": {"dt": 0.35, "stride": 3, "beta": 1.0, "gamma": 2.0, "w": 0.10, "width": (2.0,), "epsilon": 1e-3},
        "evaluation": {"spacing": 0.075},
    },
    "torus": {
        "train": {"hidden": 512, "buffer_threshold": 1e-10},
        # width 는 von Mises kappa
        "metadynamics": {"dt": 0.01, "stride": 2, "beta": 0.4009, "gamma": 0.1, "w": 1e-5, "width": (10.0,), "epsilon": 1e-6},
        "evaluation": {"spacing": 0.1},
    },
}


# =========================
# Pydantic Schemas
# =========================
class RunConfig(BaseModel):
    env: str
    mode: ModeName = "train"
    out: str = "runs"
    run_id: Optional[str] = None
    repeats: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    registry: bool = True
    # false 면 wall_ms 를 0 으로 기록 (바이트 단위 재현)
    wall_time: bool = True
    torus_potential: Optional[str] = None


class TrainConfig(BaseModel):
    loss: str = "tb"
    stb_lambda: float = Field(default=DEFAULT_STB_LAMBDA, gt=0)
    batch_size: int = Field(default=64, ge=1)
    batches: int = Field(default=100_000, ge=0)
    lr: float = Field(default=1e-3, gt=0)
    logz_lr: float = Field(default=1e-1, gt=0)
    clip: float = Field(default=10.0, gt=0)
    hidden: int = Field(default=256, ge=1)
    layers: int = Field(default=3, ge=1)
    dropout: float = Field(default=0.2, ge=0, lt=1)
    capacity: int = Field(default=10_000, ge=1)
    buffer_threshold: float = Field(default=1e-3, ge=0)
    checkpoint_every: int = Field(default=10_000, ge=1)

    def optimizer_params(self) -> OptimizerParams:
        return OptimizerParams(
            lr=self.lr,
            logz_lr=self.logz_lr,
            clip=self.clip,
            total_batches=max(self.batches, 1),
        )


class MetadConfig(BaseModel):
    dt: float = Field(gt=0)
    stride: int = Field(ge=1)
    beta: float = Field(gt=0)
    gamma: float = Field(gt=0)
    w: float = Field(gt=0)
    width: Tuple[float, ...]
    epsilon: float = Field(gt=0)
    # sample-am 전용
    walkers: int = Field(default=64, ge=1)
    iterations: int = Field(default=25_000, ge=1)
    report_every: int = Field(default=250, ge=1)

    @field_validator("width", mode="before")
    @classmethod
    def split_width(cls, v):
        if isinstance(v, str):
            return tuple(float(x) for x in v.replace(",", " ").split())
        if isinstance(v, (int, float)):
            return (float(v),)
        return v

    def params(self) -> MetadParams:
        return MetadParams(
            w=self.w,
            stride=self.stride,
            width=self.width,
            epsilon=self.epsilon,
            langevin=LangevinParams(gamma=self.gamma, beta=self.beta, dt=self.dt),
        )


class EvalConfig(BaseModel):
    every: int = Field(default=250, ge=1)
    samples: int = Field(default=10_000, ge=1)
    spacing: float = Field(gt=0)


class ExperimentConfig(BaseModel):
    run: RunConfig
    train: TrainConfig
    strategy: Strategy
    metadynamics: MetadConfig
    evaluation: EvalConfig
    source: Optional[str] = Field(default=None, exclude=True)

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out)


# =========================
# Loading
# =========================
def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parser


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, Optional[str]]:
    if not parser.has_section(name):
        return {}
    # 빈 값은 미지정으로 취급
    return {k: (v if v.strip() else None) for k, v in parser.items(name)}


def _check_names(env: Optional[str], loss: Optional[str], strategy: Optional[str], variant: Optional[str]) -> None:
    if env is None:
        raise ConfigError("[run] env is required")
    if env not in ENVIRONMENTS:
        raise UnknownNameError(f"unknown environment '{env}'; choose one of {{{', '.join(ENVIRONMENTS)}}}")
    if loss is not None and loss.lower() not in LOSSES:
        raise UnknownNameError(f"unknown loss '{loss}'; choose one of {{{', '.join(LOSSES)}}}")
    kinds = [k.value for k in StrategyKind]
    if strategy is not None and strategy not in kinds:
        raise UnknownNameError(f"unknown strategy '{strategy}'; choose one of {{{', '.join(kinds)}}}")
    variants = [v.value for v in ReplayVariant]
    if variant is not None and variant not in variants:
        raise UnknownNameError(f"unknown replay variant '{variant}'; choose one of {{{', '.join(variants)}}}")


def build_config(raw: Mapping[str, Mapping[str, object]], source: Optional[str] = None) -> ExperimentConfig:
    """Layer per-env defaults under ``raw`` and validate every section."""
    raw = {name: {k: v for k, v in dict(raw.get(name, {})).items() if v is not None} for name in SECTIONS}
    env = raw["run"].get("env")
    strategy = raw["strategy"].pop("name", None) or raw["strategy"].get("kind")
    _check_names(env, raw["train"].get("loss"), strategy, raw["strategy"].get("variant"))
    if strategy is not None:
        raw["strategy"]["kind"] = strategy

    merged = {}
    for name in SECTIONS:
        merged[name] = {**ENV_DEFAULTS[env].get(name, {}), **raw[name]}
    if "loss" in merged["train"]:
        merged["train"]["loss"] = str(merged["train"]["loss"]).lower()
    if env == "torus" and not merged["run"].get("torus_potential"):
        merged["run"]["torus_potential"] = os.getenv("METAGFN_TORUS_POTENTIAL") or None

    try:
        return ExperimentConfig(**merged, source=source)
    except ValidationError as exc:
        raise ConfigError(f"invalid config{f' {source}' if source else ''}: {exc}") from exc


def load_config(path, overrides: Optional[Mapping[str, Mapping[str, object]]] = None) -> ExperimentConfig:
    parser = _read_ini(path)
    raw = {name: _section(parser, name) for name in SECTIONS}
    for section, values in (overrides or {}).items():
        raw.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    return build_config(raw, source=str(path))


def _ini_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (tuple, list)):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_config(cfg: ExperimentConfig, path) -> None:
    """Echo the effective config; loading the echo gives back the same config."""
    parser = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {k: _ini_value(v) for k, v in section.model_dump().items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)


# =========================
# Logging
# =========================
def configure_logging(path=None, level: int = logging.INFO) -> None:
    """Apply the ``[loggers]`` sections of ``path`` if present, else a console handler."""
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path)
        except configparser.Error:
            parser = None
        if parser is not None and all(parser.has_section(s) for s in LOGGING_SECTIONS):
            logging.config.fileConfig(path, disable_existing_loggers=False)
            return
    logging.basicConfig(level=level, format=LOG_FORMAT)
