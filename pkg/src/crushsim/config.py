"""Run configuration: parameter blocks, defaults, and YAML round-trip.

The run config is the single reproducibility contract: an echoed config plus
the scenario file reproduces a run bit-for-bit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ParseError

CONFIG_SCHEMA = 1

MODES = ("implicit", "full-force", "hybrid")


@dataclass
class AgentConfig:
    """Population seeding block. Scalar attributes may instead be [lo, hi] uniform ranges."""

    count: int = 20
    placement: str = "uniform"  # uniform | grid | explicit
    mass: float | list = 80.0  # kg
    radius: float | list = 0.25  # m
    desired_speed: float | list = 1.34  # m/s
    threat: float | list = 0.5  # dimensionless [0, 1]
    competitiveness: float | list = 0.5  # dimensionless [0, 1]
    positions: list = field(default_factory=list)  # for explicit placement


@dataclass
class MovementParams:
    tau: float = 0.5  # driving-force relaxation time, s
    repulsion_strength: float = 2000.0  # N
    repulsion_range: float = 0.08  # m
    wall_strength: float = 2000.0  # N
    wall_range: float = 0.08  # m
    neighbor_cutoff: float = 3.0  # m; must be >= 2 x max agent radius
    tau_threat: float = 2.0  # threat-propagation relaxation time, s


@dataclass
class DetectorConfig:
    phi_crit: float = 0.5
    mi_crit: float = 0.1  # nats
    hysteresis: float = 0.1
    window: int = 40  # ticks
    bins: int = 8
    subset_k: int = 10
    v_eps: float = 0.05  # m/s; below this an agent counts as stagnant
    mi_signals: tuple[str, str] = ("speed_ratio", "alignment")


@dataclass
class QualifyConfig:
    model: str | None = None  # path to a .crushnet model file
    window: int = 40  # ticks
    stride: int = 10  # ticks between extracted windows
    p_crit: float = 0.5
    quorum: float = 0.25
    label_force: float = 250.0  # N; NOT medically validated, configuration only
    label_sustain: float = 1.0  # s


@dataclass
class ContactForceParams:
    body_stiffness: float = 1.2e5  # N/m
    friction_coefficient: float = 2.4e5  # kg/(m s)


@dataclass
class EscalationConfig:
    cooldown: int = 80  # ticks a de-escalation condition must hold
    l3_exit_force: float = 50.0  # N; L3 -> L2 when locale peak stays below this


@dataclass
class InjuryConfig:
    """Exposure tiers and report cutoffs. Placeholders, NOT medically validated."""

    tiers: list = field(default_factory=lambda: [250.0, 1500.0])  # N
    at_risk_force: float = 250.0  # N
    at_risk_sustain: float = 1.0  # s
    critical_force: float = 1500.0  # N
    critical_sustain: float = 10.0  # s


@dataclass
class RunConfig:
    seed: int = 42
    dt: float = 0.05  # s
    cell_size: float = 2.0  # m, locale partition
    log_interval: int = 1  # ticks between trajectory rows
    mode: str = "hybrid"  # implicit | full-force | hybrid
    max_time: float = 120.0  # s, wall-clock-independent run cap
    workers: int = 1  # threads for per-locale analyses
    speed_cap: float = 3.0  # m/s
    agents: AgentConfig = field(default_factory=AgentConfig)
    movement: MovementParams = field(default_factory=MovementParams)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    qualify: QualifyConfig = field(default_factory=QualifyConfig)
    contact: ContactForceParams = field(default_factory=ContactForceParams)
    escalation: EscalationConfig = field(default_factory=EscalationConfig)
    injury: InjuryConfig = field(default_factory=InjuryConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParseError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dt <= 0:
            raise ParseError("dt must be positive")
        if self.cell_size <= 0:
            raise ParseError("cell_size must be positive")

    def to_dict(self) -> dict:
        doc = {"schema": CONFIG_SCHEMA}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                block = dataclasses.asdict(v)
                if "mi_signals" in block:
                    block["mi_signals"] = list(block["mi_signals"])
                doc[f.name] = block
            else:
                doc[f.name] = v
        return doc


_BLOCKS = {
    "agents": AgentConfig,
    "movement": MovementParams,
    "detector": DetectorConfig,
    "qualify": QualifyConfig,
    "contact": ContactForceParams,
    "escalation": EscalationConfig,
    "injury": InjuryConfig,
}


def _build_block(cls, raw: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"unknown keys in config block '{name}': {sorted(unknown)}")
    kwargs = dict(raw)
    if name == "detector" and "mi_signals" in kwargs:
        kwargs["mi_signals"] = tuple(kwargs["mi_signals"])
    return cls(**kwargs)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ParseError(f"config document must be a mapping, got {type(doc).__name__}")
    doc = dict(doc)
    schema = doc.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ParseError(f"unsupported config schema {schema!r}; this build reads schema {CONFIG_SCHEMA}")
    top_fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - top_fields
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key in _BLOCKS:
            if not isinstance(value, dict):
                raise ParseError(f"config block '{key}' must be a mapping")
            kwargs[key] = _build_block(_BLOCKS[key], value, key)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ParseError(f"{path}: invalid YAML: {e}") from e
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e
    return config_from_dict(doc)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as f:
        f.write(dump_config(config))


def dump_config(config: RunConfig | None = None) -> str:
    """Config as YAML text; with no argument, the documented defaults."""
    return yaml.safe_dump((config or RunConfig()).to_dict(), sort_keys=False)
