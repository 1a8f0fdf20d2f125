"""Exception types shared across the simulator."""


class CrushSimError(Exception):
    """Base class for all simulator errors."""


class ParseError(CrushSimError):
    """A scenario, config, archive, or model document is malformed."""


class GeometryError(CrushSimError):
    """Scenario geometry is invalid (no exit, unreachable exit, degenerate segment)."""


class PlacementError(CrushSimError):
    """Agent placement could not be satisfied after bounded retries."""


class NumericError(CrushSimError):
    """Non-finite state detected; carries diagnostic tick/agent context."""

    def __init__(self, message, tick=None, agent_ids=None):
        super().__init__(message)
        self.tick = tick
        self.agent_ids = list(agent_ids) if agent_ids is not None else []


class DegenerateError(CrushSimError):
    """Geometric degeneracy (e.g. agent exactly on its exit segment)."""


class InsufficientData(CrushSimError):
    """Not enough samples to compute a statistic or verdict."""


class InsufficientHistory(CrushSimError):
    """Exposure history shorter than the requested sustain interval."""


class ModeError(CrushSimError):
    """Operation requires a run archive produced in a different pipeline mode."""


class DegenerateDataset(CrushSimError):
    """Training dataset contains a single class."""


class DivergenceError(CrushSimError):
    """Training loss became non-finite."""


class ShapeError(CrushSimError):
    """Input size does not match the model's expected input size."""


class ProtocolError(CrushSimError):
    """Escalation state machine received input inconsistent with its level."""


class IncompleteRun(CrushSimError):
    """Metric requires a completed run."""


class IncompleteArchive(CrushSimError):
    """Run archive is missing a required file."""

    def __init__(self, missing):
        super().__init__(f"archive is missing required file: {missing}")
        self.missing = missing
