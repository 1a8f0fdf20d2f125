"""Agent-based evacuation simulator with staged crowd-crush analysis.

Locales (grid cells) start under a cheap order-parameter watch, escalate to a
learned window classifier when flow turns disordered, and only then pay for
explicit contact-force resolution. Contact forces are a measurement layer:
trajectories are identical across analysis modes, so a hybrid run can be
compared bit-for-bit against a fully instrumented replay.
"""

__version__ = "0.1.0"

from .agents import AgentState, seed_agents
from .archive import ArchiveWriter, RunArchive
from .config import RunConfig, config_from_dict, dump_config, load_config, save_config
from .engine import CostCounters, RunResult, Simulation, SimulationState, run_simulation
from .errors import (
    CrushSimError,
    DegenerateDataset,
    GeometryError,
    IncompleteArchive,
    IncompleteRun,
    InsufficientData,
    ModeError,
    NumericError,
    ParseError,
    PlacementError,
    ProtocolError,
    ShapeError,
)
from .hybrid import HybridController, Transition
from .identify import LocaleDetector, mutual_information, order_parameter
from .metrics import DensityHistory, fruin_level, imo_check
from .qualify import Classifier, extract_dataset, load_model, save_model, train
from .quantify import ExposureRecord, find_contacts, resolve_forces
from .scenario import Scenario, build_scenario, load_scenario, save_scenario, validate_scenario
from .scenarios import CANONICAL, bottleneck, corridor, empty_room

__all__ = [
    "__version__",
    "AgentState",
    "ArchiveWriter",
    "CANONICAL",
    "Classifier",
    "CostCounters",
    "CrushSimError",
    "DegenerateDataset",
    "DensityHistory",
    "ExposureRecord",
    "GeometryError",
    "HybridController",
    "IncompleteArchive",
    "IncompleteRun",
    "InsufficientData",
    "LocaleDetector",
    "ModeError",
    "NumericError",
    "ParseError",
    "PlacementError",
    "ProtocolError",
    "RunArchive",
    "RunConfig",
    "RunResult",
    "Scenario",
    "ShapeError",
    "Simulation",
    "SimulationState",
    "Transition",
    "bottleneck",
    "build_scenario",
    "config_from_dict",
    "corridor",
    "dump_config",
    "empty_room",
    "extract_dataset",
    "find_contacts",
    "fruin_level",
    "imo_check",
    "load_config",
    "load_model",
    "load_scenario",
    "mutual_information",
    "order_parameter",
    "resolve_forces",
    "run_simulation",
    "save_config",
    "save_model",
    "save_scenario",
    "seed_agents",
    "train",
    "validate_scenario",
]
