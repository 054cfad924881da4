"""Experiment configuration: one JSON document, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, get_args, get_origin, get_type_hints


class ConfigError(ValueError):
    pass


DEFAULT_ROUNDS = [0, 1, 2, 3, 5, 10, 20, 50, 100]


@dataclass
class GraphSection:
    n: int = 10
    radius: Optional[float] = None  # None: sqrt(2 ln n / n)
    max_attempts: int = 100
    file: Optional[str] = None


@dataclass
class ModelSection:
    kind: str = "consensus"  # consensus | linreg
    dim: int = 1
    rows: int = 3  # local observations per node for linreg


@dataclass
class PdmmSection:
    c: float = 0.5
    theta: float = 0.5
    thetas: list = field(default_factory=lambda: [1.0, 0.8, 0.5])
    scheme: str = "async"


@dataclass
class EnsembleSection:
    runs: int = 500
    sigma_z2: float = 1e8
    schedule_mode: str = "fixed"
    record_ks: list = field(default_factory=lambda: [0, 10, 20, 50, 100, 200, 500, 1000, 2000])
    rounds: list = field(default_factory=lambda: list(DEFAULT_ROUNDS))
    slack: Optional[float] = None  # None: three standard deviations, capped at 0.25


@dataclass
class MiSection:
    runs: int = 500
    sigma_z2: list = field(default_factory=lambda: [0.5, 1.0])
    theta: float = 0.5
    target: int = 0
    honest: Optional[int] = None  # None: lowest-numbered neighbour of target
    rounds: list = field(default_factory=lambda: [0, 1, 2, 3, 5, 10, 20, 50])


@dataclass
class BoundSection:
    sigma2: float = 1.0
    theta: float = 0.5
    mu: Optional[float] = None  # None: 1/n
    ks: list = field(default_factory=lambda: [0, 1, 2, 5, 10, 20, 50, 100])


@dataclass
class RunSection:
    iterations: int = 200
    sigma_z2: float = 1.0


@dataclass
class OutputSection:
    dir: str = "results"
    jobs: int = 1


@dataclass
class ExperimentConfig:
    experiment_id: str = "pdmmlab"
    seed: int = 0
    graph: GraphSection = field(default_factory=GraphSection)
    model: ModelSection = field(default_factory=ModelSection)
    pdmm: PdmmSection = field(default_factory=PdmmSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    mi: MiSection = field(default_factory=MiSection)
    bound: BoundSection = field(default_factory=BoundSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: str = field(default=".", metadata={"internal": True})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        """Hash of every setting that can change the numbers; ``output`` is excluded."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def graph_path(self) -> Optional[Path]:
        if self.graph.file is None:
            return None
        p = Path(self.graph.file)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _coerce(value, tp, where):
    origin = get_origin(tp)
    if origin is not None and type(None) in get_args(tp):
        if value is None:
            return None
        tp = next(a for a in get_args(tp) if a is not type(None))
        origin = get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{where}: list entries must be numbers, got {item!r}")
        return list(value)
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(v, hints[k], f"{where}.{k}" if where else k) for k, v in data.items()}
    return cls(**kwargs)


def parse_config(data: dict, base_dir=".") -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    cfg.base_dir = str(base_dir)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data, path.parent)


def validate(cfg: ExperimentConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    g = cfg.graph
    if g.file is not None:
        need(cfg.graph_path().is_file(), f"graph.file: no such file {cfg.graph_path()}")
    else:
        need(g.n >= 1, "graph.n must be >= 1")
        need(g.radius is None or g.radius > 0, "graph.radius must be positive")
        need(g.max_attempts >= 1, "graph.max_attempts must be >= 1")
    need(cfg.model.kind in ("consensus", "linreg"), "model.kind must be 'consensus' or 'linreg'")
    need(cfg.model.dim >= 1, "model.dim must be >= 1")
    need(cfg.model.rows >= 1, "model.rows must be >= 1")
    p = cfg.pdmm
    need(p.c > 0, "pdmm.c must be positive")
    for th in [p.theta, *p.thetas, cfg.mi.theta, cfg.bound.theta]:
        need(0 < th <= 1, f"theta values must lie in (0, 1], got {th}")
    need(len(p.thetas) >= 1, "pdmm.thetas must not be empty")
    need(p.scheme in ("sync", "async"), "pdmm.scheme must be 'sync' or 'async'")
    e = cfg.ensemble
    need(e.runs >= 2, "ensemble.runs must be >= 2")
    need(e.sigma_z2 >= 0, "ensemble.sigma_z2 must be nonnegative")
    need(e.schedule_mode in ("fixed", "independent"), "ensemble.schedule_mode must be 'fixed' or 'independent'")
    need(e.slack is None or 0 <= e.slack < 1, "ensemble.slack must lie in [0, 1)")
    for name, ks in (("ensemble.record_ks", e.record_ks), ("ensemble.rounds", e.rounds),
                     ("mi.rounds", cfg.mi.rounds), ("bound.ks", cfg.bound.ks)):
        need(len(ks) >= 1 and all(isinstance(k, int) and k >= 0 for k in ks),
             f"{name} must be a nonempty list of nonnegative integers")
    m = cfg.mi
    need(m.runs >= 10, "mi.runs must be >= 10")
    need(len(m.sigma_z2) >= 1 and all(v >= 0 for v in m.sigma_z2), "mi.sigma_z2 must list nonnegative values")
    b = cfg.bound
    need(b.sigma2 >= 0, "bound.sigma2 must be nonnegative")
    need(b.mu is None or 0 < b.mu <= 1, "bound.mu must lie in (0, 1]")
    need(cfg.run.iterations >= 0, "run.iterations must be >= 0")
    need(cfg.run.sigma_z2 >= 0, "run.sigma_z2 must be nonnegative")
    need(cfg.output.jobs >= 1, "output.jobs must be >= 1")
