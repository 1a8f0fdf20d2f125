"""Static world model: walls, obstacles, exits, and build-time validation.

Scenario files are YAML documents with a ``schema: 1`` version field; see
``load_scenario`` for the accepted keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import GeometryError, ParseError
from .geometry import distance_to_segment, polygon_contains, polygon_edges, segment_length

SCENARIO_SCHEMA = 1

# Occupancy-grid resolution for the build-time reachability check, metres.
REACH_RESOLUTION = 0.1


@dataclass(frozen=True)
class Exit:
    """An exit gap: a segment agents must cross, with a familiarity weight."""

    segment: np.ndarray  # (2, 2) endpoints, metres
    familiarity: float  # dimensionless >= 0
    width: float  # metres, segment length unless overridden


@dataclass
class ReachabilityGrid:
    """Free-space occupancy grid with exit-connected component, for validation and seeding."""

    origin: np.ndarray  # (2,) lower-left corner
    resolution: float
    free: np.ndarray  # (ny, nx) bool, navigable cells
    reached: np.ndarray  # (ny, nx) bool, cells connected to an exit

    def cell_of(self, point) -> tuple[int, int]:
        j = int(np.floor((point[0] - self.origin[0]) / self.resolution))
        i = int(np.floor((point[1] - self.origin[1]) / self.resolution))
        return i, j

    def is_reachable(self, point) -> bool:
        i, j = self.cell_of(point)
        if 0 <= i < self.reached.shape[0] and 0 <= j < self.reached.shape[1]:
            return bool(self.reached[i, j])
        return False

    @property
    def reachable_fraction(self) -> float:
        n_free = int(self.free.sum())
        return float(self.reached.sum()) / n_free if n_free else 0.0


@dataclass
class Scenario:
    """Validated static world: geometry, exits, and optional egress-time budget."""

    name: str
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    walls: np.ndarray  # (n, 2, 2) segments, metres
    obstacles: list[np.ndarray]  # convex polygons, each (k, 2)
    exits: list[Exit]
    aset: float | None = None  # available safe egress time, seconds
    spawn: tuple[float, float, float, float] | None = None
    reach: ReachabilityGrid | None = field(default=None, repr=False)

    @property
    def wall_segments(self) -> np.ndarray:
        """Walls plus obstacle edges as one (m, 2, 2) segment array."""
        segs = [self.walls] if len(self.walls) else []
        segs += [polygon_edges(p) for p in self.obstacles]
        if not segs:
            return np.zeros((0, 2, 2))
        return np.concatenate(segs, axis=0)

    @property
    def spawn_rect(self) -> tuple[float, float, float, float]:
        return self.spawn if self.spawn is not None else self.bounds

    def to_dict(self) -> dict:
        doc = {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "bounds": [float(v) for v in self.bounds],
            "walls": [[float(v) for v in seg.reshape(4)] for seg in self.walls],
            "obstacles": [[[float(x), float(y)] for x, y in poly] for poly in self.obstacles],
            "exits": [
                {
                    "segment": [float(v) for v in e.segment.reshape(4)],
                    "familiarity": float(e.familiarity),
                    "width": float(e.width),
                }
                for e in self.exits
            ],
        }
        if self.aset is not None:
            doc["aset"] = float(self.aset)
        if self.spawn is not None:
            doc["spawn"] = [float(v) for v in self.spawn]
        return doc


def _as_segment(raw, what: str) -> np.ndarray:
    try:
        flat = [float(v) for v in raw]
    except (TypeError, ValueError) as e:
        raise ParseError(f"{what}: expected four numbers, got {raw!r}") from e
    if len(flat) != 4:
        raise ParseError(f"{what}: expected four numbers [x1, y1, x2, y2], got {len(flat)}")
    return np.array(flat, dtype=float).reshape(2, 2)


def build_scenario(doc: dict, validate: bool = True) -> Scenario:
    """Build a Scenario from a parsed document, validating geometry.

    Raises ParseError for malformed documents and GeometryError when the
    geometry violates scenario invariants (no exit, unreachable exit,
    degenerate segment).
    """
    if not isinstance(doc, dict):
        raise ParseError(f"scenario document must be a mapping, got {type(doc).__name__}")
    schema = doc.get("schema")
    if schema != SCENARIO_SCHEMA:
        raise ParseError(f"unsupported scenario schema {schema!r}; this build reads schema {SCENARIO_SCHEMA}")
    known = {"schema", "name", "bounds", "walls", "obstacles", "exits", "aset", "spawn"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"unknown scenario keys: {sorted(unknown)}")
    if "bounds" not in doc:
        raise ParseError("scenario missing required key 'bounds'")
    bounds = tuple(float(v) for v in doc["bounds"])
    if len(bounds) != 4 or bounds[0] >= bounds[2] or bounds[1] >= bounds[3]:
        raise ParseError(f"bounds must be [xmin, ymin, xmax, ymax] with positive extent, got {doc['bounds']!r}")

    walls_raw = doc.get("walls", [])
    walls = (
        np.stack([_as_segment(w, f"walls[{i}]") for i, w in enumerate(walls_raw)])
        if walls_raw
        else np.zeros((0, 2, 2))
    )
    obstacles = []
    for i, poly in enumerate(doc.get("obstacles", [])):
        arr = np.asarray(poly, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
            raise ParseError(f"obstacles[{i}] must be a list of >= 3 [x, y] vertices")
        obstacles.append(arr)

    exits = []
    for i, e in enumerate(doc.get("exits", [])):
        if not isinstance(e, dict) or "segment" not in e:
            raise ParseError(f"exits[{i}] must be a mapping with a 'segment' key")
        seg = _as_segment(e["segment"], f"exits[{i}].segment")
        fam = float(e.get("familiarity", 1.0))
        width = float(e.get("width", segment_length(seg)))
        exits.append(Exit(segment=seg, familiarity=fam, width=width))

    aset = doc.get("aset")
    spawn = tuple(float(v) for v in doc["spawn"]) if "spawn" in doc else None

    scenario = Scenario(
        name=str(doc.get("name", "unnamed")),
        bounds=bounds,
        walls=walls,
        obstacles=obstacles,
        exits=exits,
        aset=float(aset) if aset is not None else None,
        spawn=spawn,
    )
    if validate:
        validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: Scenario) -> None:
    """Check scenario invariants; attaches the reachability grid on success."""
    if not scenario.exits:
        raise GeometryError("scenario has no exits")
    if all(e.familiarity == 0.0 for e in scenario.exits):
        raise GeometryError("exit familiarity weights are all zero")
    for i, e in enumerate(scenario.exits):
        if e.familiarity < 0:
            raise GeometryError(f"exit {i} has negative familiarity weight")
        if segment_length(e.segment) < 1e-9:
            raise GeometryError(f"exit {i} segment is degenerate")
        xmin, ymin, xmax, ymax = scenario.bounds
        for p in e.segment:
            if not (xmin - 1e-9 <= p[0] <= xmax + 1e-9 and ymin - 1e-9 <= p[1] <= ymax + 1e-9):
                raise GeometryError(f"exit {i} segment endpoint {p.tolist()} lies outside bounds")
    for i, seg in enumerate(scenario.walls):
        if segment_length(seg) < 1e-9:
            raise GeometryError(f"wall {i} segment is degenerate")
    scenario.reach = compute_reachability(scenario)
    free_cells = int(scenario.reach.free.sum())
    if free_cells == 0:
        raise GeometryError("scenario has no free space")
    reached_fraction = float(scenario.reach.reached.sum()) / free_cells
    if reached_fraction < 0.5:
        raise GeometryError(
            f"only {reached_fraction:.0%} of free space can reach an exit; "
            "the exits are sealed off from the room"
        )
    for i, e in enumerate(scenario.exits):
        if not _exit_has_free_cell(scenario.reach, e):
            raise GeometryError(f"exit {i} is enclosed by walls/obstacles (no free cell adjacent)")
        if scenario.spawn is not None and not _exit_reaches_spawn(scenario, e):
            raise GeometryError(f"exit {i} is not reachable from the spawn region")


def compute_reachability(
    scenario: Scenario, resolution: float = REACH_RESOLUTION, exits=None
) -> ReachabilityGrid:
    """Flood fill free space from the given exits (default: all) on an occupancy grid."""
    xmin, ymin, xmax, ymax = scenario.bounds
    nx = max(1, int(np.ceil((xmax - xmin) / resolution)))
    ny = max(1, int(np.ceil((ymax - ymin) / resolution)))
    xs = xmin + (np.arange(nx) + 0.5) * resolution
    ys = ymin + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])

    blocked = np.zeros(len(centers), dtype=bool)
    clearance = resolution / 2.0
    for seg in scenario.wall_segments:
        blocked |= distance_to_segment(centers, seg[0], seg[1]) < clearance
    for poly in scenario.obstacles:
        blocked |= polygon_contains(poly, centers)
    free = (~blocked).reshape(ny, nx)

    seeds = np.zeros(len(centers), dtype=bool)
    for e in scenario.exits if exits is None else exits:
        seeds |= distance_to_segment(centers, e.segment[0], e.segment[1]) < resolution
    reached = (seeds.reshape(ny, nx)) & free

    # Iterative 4-neighbour dilation to a fixed point.
    while True:
        grown = reached.copy()
        grown[1:, :] |= reached[:-1, :]
        grown[:-1, :] |= reached[1:, :]
        grown[:, 1:] |= reached[:, :-1]
        grown[:, :-1] |= reached[:, 1:]
        grown &= free
        if np.array_equal(grown, reached):
            break
        reached = grown

    return ReachabilityGrid(
        origin=np.array([xmin, ymin]), resolution=resolution, free=free, reached=reached
    )


def _exit_reaches_spawn(scenario: Scenario, exit_: Exit) -> bool:
    """True when a flood fill seeded at this exit touches the spawn rectangle."""
    reach = compute_reachability(scenario, exits=[exit_])
    ny, nx = reach.free.shape
    xs = reach.origin[0] + (np.arange(nx) + 0.5) * reach.resolution
    ys = reach.origin[1] + (np.arange(ny) + 0.5) * reach.resolution
    gx, gy = np.meshgrid(xs, ys)
    x0, y0, x1, y1 = scenario.spawn_rect
    inside = (gx >= x0) & (gx <= x1) & (gy >= y0) & (gy <= y1)
    return bool((inside & reach.reached).any())


def _exit_has_free_cell(reach: ReachabilityGrid, exit_: Exit) -> bool:
    ny, nx = reach.free.shape
    xs = reach.origin[0] + (np.arange(nx) + 0.5) * reach.resolution
    ys = reach.origin[1] + (np.arange(ny) + 0.5) * reach.resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    near = distance_to_segment(centers, exit_.segment[0], exit_.segment[1]) < 2 * reach.resolution
    return bool((near.reshape(ny, nx) & reach.free).any())


def load_scenario(path) -> Scenario:
    """Load and validate a scenario YAML file."""
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ParseError(f"{path}: invalid YAML: {e}") from e
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e
    return build_scenario(doc)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scenario.to_dict(), f, sort_keys=False)
