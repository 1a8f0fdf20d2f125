"""Per-agent state and deterministic population seeding."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import AgentConfig
from .errors import ParseError, PlacementError
from .geometry import distance_to_segment, polygon_contains
from .scenario import Scenario


@dataclass
class AgentState:
    """Kinematics plus decision fields for one agent.

    Invariants: mass > 0, radius > 0, desired_speed >= 0; perceived_threat and
    competitiveness stay in [0, 1]; once evacuated_at is set the agent exerts
    and receives no forces.
    """

    id: int
    position: np.ndarray  # (2,) m
    velocity: np.ndarray  # (2,) m/s
    mass: float  # kg
    radius: float  # m
    desired_speed: float  # m/s
    perceived_threat: float  # [0, 1]
    competitiveness: float  # [0, 1]
    target_exit: int
    evacuated_at: float | None = None

    def copy(self) -> "AgentState":
        return replace(self, position=self.position.copy(), velocity=self.velocity.copy())


def _draw(rng: np.random.Generator, spec, lo_bound=None, hi_bound=None) -> float:
    """Scalar attribute or [lo, hi] uniform range."""
    if isinstance(spec, (list, tuple)):
        if len(spec) != 2:
            raise ParseError(f"attribute range must be [lo, hi], got {spec!r}")
        value = float(rng.uniform(spec[0], spec[1]))
    else:
        value = float(spec)
    if lo_bound is not None:
        value = max(lo_bound, value)
    if hi_bound is not None:
        value = min(hi_bound, value)
    return value


def _position_ok(pos, radius, scenario: Scenario, placed, placed_radii) -> bool:
    xmin, ymin, xmax, ymax = scenario.bounds
    if not (xmin + radius <= pos[0] <= xmax - radius and ymin + radius <= pos[1] <= ymax - radius):
        return False
    for seg in scenario.wall_segments:
        if distance_to_segment(pos[None, :], seg[0], seg[1])[0] < radius:
            return False
    for poly in scenario.obstacles:
        if polygon_contains(poly, pos[None, :])[0]:
            return False
    if scenario.reach is not None and not scenario.reach.is_reachable(pos):
        return False
    if placed:
        arr = np.asarray(placed)
        d = np.hypot(arr[:, 0] - pos[0], arr[:, 1] - pos[1])
        if np.any(d < np.asarray(placed_radii) + radius):
            return False
    return True


def seed_agents(
    scenario: Scenario, n: int, placement: str, seed: int, agent_cfg: AgentConfig | None = None
) -> list[AgentState]:
    """Place n non-overlapping agents; deterministic for a fixed seed.

    Raises PlacementError when n non-overlapping discs cannot be placed within
    a bounded number of retries.
    """
    from .movement import choose_exit  # deferred: movement imports AgentState

    cfg = agent_cfg or AgentConfig()
    rng = np.random.Generator(np.random.Philox(key=seed))
    if n < 0:
        raise ParseError("agent count must be >= 0")

    positions: list[np.ndarray] = []
    radii: list[float] = []
    attrs: list[tuple[float, float, float, float, float]] = []

    def accept(pos, radius):
        positions.append(np.asarray(pos, dtype=float))
        radii.append(radius)
        attrs.append(
            (
                _draw(rng, cfg.mass),
                _draw(rng, cfg.desired_speed),
                _draw(rng, cfg.threat, 0.0, 1.0),
                _draw(rng, cfg.competitiveness, 0.0, 1.0),
                radius,
            )
        )

    sx0, sy0, sx1, sy1 = scenario.spawn_rect
    if placement == "uniform":
        max_attempts = max(1000, 400 * n)
        attempts = 0
        while len(positions) < n:
            if attempts >= max_attempts:
                raise PlacementError(
                    f"placed {len(positions)}/{n} agents after {attempts} attempts"
                )
            attempts += 1
            radius = _draw(rng, cfg.radius)
            pos = np.array([rng.uniform(sx0, sx1), rng.uniform(sy0, sy1)])
            if _position_ok(pos, radius, scenario, positions, radii):
                accept(pos, radius)
    elif placement == "grid":
        radius_hint = max(np.atleast_1d(np.asarray(cfg.radius, dtype=float)))
        pitch = 2.0 * radius_hint * 1.15
        xs = np.arange(sx0 + radius_hint, sx1 - radius_hint + 1e-9, pitch)
        ys = np.arange(sy0 + radius_hint, sy1 - radius_hint + 1e-9, pitch)
        for y in ys:
            for x in xs:
                if len(positions) >= n:
                    break
                radius = _draw(rng, cfg.radius)
                pos = np.array([x, y])
                if _position_ok(pos, radius, scenario, positions, radii):
                    accept(pos, radius)
        if len(positions) < n:
            raise PlacementError(f"grid placement fit only {len(positions)}/{n} agents")
    elif placement == "explicit":
        if len(cfg.positions) < n:
            raise ParseError(f"explicit placement lists {len(cfg.positions)} positions for {n} agents")
        for raw in cfg.positions[:n]:
            radius = _draw(rng, cfg.radius)
            pos = np.asarray(raw, dtype=float)
            if not _position_ok(pos, radius, scenario, positions, radii):
                raise PlacementError(f"explicit position {raw!r} overlaps geometry or another agent")
            accept(pos, radius)
    else:
        raise ParseError(f"unknown placement policy {placement!r}")

    agents = []
    for i, (pos, (mass, v0, threat, comp, radius)) in enumerate(zip(positions, attrs)):
        agent = AgentState(
            id=i,
            position=pos,
            velocity=np.zeros(2),
            mass=mass,
            radius=radius,
            desired_speed=v0,
            perceived_threat=threat,
            competitiveness=comp,
            target_exit=0,
        )
        agent.target_exit = choose_exit(agent, scenario)
        agents.append(agent)
    return agents
