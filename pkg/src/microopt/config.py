"""Experiment configuration: TOML schema with every default embedded.

Unknown keys are rejected so typos fail loudly instead of silently running
the default experiment.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import SearchGrid
from .degradation import SurrogateConfig
from .domain import ConfigurationError, SlaSpec, validate_sla
from .oracle import AxisRange, GridSpec, OracleParams
from .optimizer import OptimizerConfig
from .slicemodel import ModelArch, TrainConfig


def derive_seed(master: int, *labels) -> int:
    """Independent 63-bit seed for a (module, scenario, method, ...) label path."""
    key = "|".join([str(int(master))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class SweepConfig:
    q_thresh: tuple = (3.0, 4.0, 5.0)
    beta_thresh: tuple = (0.1, 0.2, 0.3)
    traffic: float = 5.0
    table_traffic: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    table_q_thresh: float = 5.0
    table_beta_thresh: float = 0.1


@dataclass(frozen=True)
class TrafficConfig:
    trace_csv: str = ""  # empty: generate a synthetic weekly trace
    peak: float = 5.0
    synth_amplitude: float = 1.0
    synth_noise: float = 0.05
    centers: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    q_thresh: float = 5.0
    beta_thresh: float = 0.1


@dataclass(frozen=True)
class BaselineConfig:
    cpu: tuple = (100.0, 4500.0, 100.0)
    bandwidth: tuple = (1.0, 50.0, 1.0)
    n_trials: int = 200
    peak_traffic: float = 5.0
    peak_q_thresh: float = 5.0
    peak_beta_thresh: float = 0.01

    def search_grid(self) -> SearchGrid:
        return SearchGrid(AxisRange(*self.cpu), AxisRange(*self.bandwidth))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "microopt-out"
    tau: int = 300
    eval_trials: int = 500
    workers: int = 1
    methods: tuple = ("microopt", "peak_alloc", "grid_optimum")
    oracle: OracleParams = field(default_factory=OracleParams)
    grid: GridSpec = field(default_factory=GridSpec)
    arch: ModelArch = field(default_factory=ModelArch)
    train: TrainConfig = field(default_factory=TrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if not self.sweep.q_thresh or not self.sweep.beta_thresh:
            raise ConfigurationError("sweep sets must be nonempty")
        if self.tau < 1:
            raise ConfigurationError("tau must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        unknown = set(self.methods) - {"microopt", "peak_alloc", "grid_optimum"}
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
        if self.traffic.trace_csv and not Path(self.traffic.trace_csv).is_file():
            raise ConfigurationError(f"trace file not found: {self.traffic.trace_csv}")
        slas = [SlaSpec(q, b) for q in self.sweep.q_thresh for b in self.sweep.beta_thresh]
        slas += [SlaSpec(self.sweep.table_q_thresh, self.sweep.table_beta_thresh),
                 SlaSpec(self.traffic.q_thresh, self.traffic.beta_thresh)]
        for sla in slas:
            verdict = validate_sla(sla)
            if not verdict:
                raise ConfigurationError(verdict.reason)
            if sla.q_thresh >= self.oracle.app_max_rate:
                raise ConfigurationError("app_max_rate must exceed every q_thresh in use")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# nested sections and how to build them from a TOML table
def _axis(v, name):
    if isinstance(v, dict):
        return AxisRange(**v)
    if isinstance(v, (list, tuple)) and len(v) == 3:
        return AxisRange(*map(float, v))
    raise ConfigurationError(f"{name}: expected [start, stop, step]")


def _build(cls, table, name):
    if table is None:
        return cls()
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise ConfigurationError(f"[{name}] unknown keys: {sorted(unknown)}")
    kwargs = {}
    for key, val in table.items():
        if cls is GridSpec and key.endswith("_range"):
            val = _axis(val, f"{name}.{key}")
        elif cls is OptimizerConfig and key == "surrogate":
            val = _build(SurrogateConfig, val, f"{name}.surrogate")
        elif isinstance(val, list):
            val = tuple(val)
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{name}] {exc}") from None


SECTIONS = {
    "oracle": OracleParams,
    "grid": GridSpec,
    "arch": ModelArch,
    "train": TrainConfig,
    "optimizer": OptimizerConfig,
    "sweep": SweepConfig,
    "traffic": TrafficConfig,
    "baselines": BaselineConfig,
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - top
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for key, val in doc.items():
        if key in SECTIONS:
            kwargs[key] = _build(SECTIONS[key], val, key)
        elif isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None


def load_config(path: Optional[str] = None, seed: Optional[int] = None,
                out_dir: Optional[str] = None) -> ExperimentConfig:
    doc = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            doc = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    if seed is not None:
        doc["seed"] = int(seed)
    if out_dir is not None:
        doc["out_dir"] = str(out_dir)
    return config_from_dict(doc)
