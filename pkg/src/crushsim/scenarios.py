"""Canonical benchmark scenarios and a rectangular-room construction helper."""

from __future__ import annotations

import numpy as np

from .errors import GeometryError
from .scenario import Scenario, build_scenario


def room_walls(bounds, exit_segments) -> list[list[float]]:
    """Boundary wall segments for a rectangular room, with gaps at the exits.

    Exits must lie on the boundary; each side is split around the exit spans
    that are collinear with it.
    """
    xmin, ymin, xmax, ymax = bounds
    sides = [
        (np.array([xmin, ymin]), np.array([xmax, ymin])),  # south
        (np.array([xmax, ymin]), np.array([xmax, ymax])),  # east
        (np.array([xmax, ymax]), np.array([xmin, ymax])),  # north
        (np.array([xmin, ymax]), np.array([xmin, ymin])),  # west
    ]
    walls = []
    matched = [False] * len(exit_segments)
    for a, b in sides:
        direction = b - a
        length = float(np.hypot(*direction))
        d_hat = direction / length
        gaps = []
        for k, seg in enumerate(exit_segments):
            p0 = np.asarray(seg[:2], dtype=float)
            p1 = np.asarray(seg[2:], dtype=float)
            # Collinear with this side and within its span?
            cross0 = d_hat[0] * (p0 - a)[1] - d_hat[1] * (p0 - a)[0]
            cross1 = d_hat[0] * (p1 - a)[1] - d_hat[1] * (p1 - a)[0]
            if abs(cross0) > 1e-9 or abs(cross1) > 1e-9:
                continue
            t0, t1 = sorted([float((p0 - a) @ d_hat), float((p1 - a) @ d_hat)])
            if t1 < -1e-9 or t0 > length + 1e-9:
                continue
            matched[k] = True
            gaps.append((max(t0, 0.0), min(t1, length)))
        gaps.sort()
        cursor = 0.0
        for g0, g1 in gaps:
            if g0 - cursor > 1e-9:
                s, e = a + cursor * d_hat, a + g0 * d_hat
                walls.append([s[0], s[1], e[0], e[1]])
            cursor = max(cursor, g1)
        if length - cursor > 1e-9:
            s, e = a + cursor * d_hat, a + length * d_hat
            walls.append([s[0], s[1], e[0], e[1]])
    for k, seg in enumerate(exit_segments):
        if not matched[k]:
            raise GeometryError(f"exit segment {list(seg)} does not lie on the room boundary")
    return [[float(v) for v in w] for w in walls]


def room_scenario(
    name: str,
    bounds,
    exits,
    obstacles=(),
    aset: float | None = None,
    spawn=None,
) -> Scenario:
    """A rectangular room whose boundary walls are derived from the exits.

    ``exits`` is a list of ``(segment, familiarity)`` pairs with segments as
    ``[x1, y1, x2, y2]`` on the boundary.
    """
    doc = {
        "schema": 1,
        "name": name,
        "bounds": list(bounds),
        "walls": room_walls(bounds, [seg for seg, _ in exits]),
        "obstacles": [list(map(list, poly)) for poly in obstacles],
        "exits": [{"segment": list(seg), "familiarity": fam} for seg, fam in exits],
    }
    if aset is not None:
        doc["aset"] = aset
    if spawn is not None:
        doc["spawn"] = list(spawn)
    return build_scenario(doc)


def empty_room() -> Scenario:
    """10 x 10 m room with one 2 m exit on the east wall."""
    return room_scenario(
        "empty-room",
        bounds=(0.0, 0.0, 10.0, 10.0),
        exits=[([10.0, 4.0, 10.0, 6.0], 1.0)],
        aset=120.0,
        spawn=(0.5, 0.5, 8.0, 9.5),
    )


def corridor() -> Scenario:
    """20 x 2 m corridor, fully open east end; the ordered-flow fixture."""
    return room_scenario(
        "corridor",
        bounds=(0.0, 0.0, 20.0, 2.0),
        exits=[([20.0, 0.0, 20.0, 2.0], 1.0)],
        spawn=(0.5, 0.3, 12.0, 1.7),
    )


def bottleneck() -> Scenario:
    """10 x 10 m room, single 0.8 m exit; the congestion/crush fixture.

    The spawn region stops 3 m short of the exit wall: the crowd is staged
    across the room and converges on the exit, so congestion builds after
    the analysis pipeline has a full observation window.
    """
    return room_scenario(
        "bottleneck",
        bounds=(0.0, 0.0, 10.0, 10.0),
        exits=[([10.0, 4.6, 10.0, 5.4], 1.0)],
        spawn=(0.5, 0.5, 7.0, 9.5),
    )


CANONICAL = {
    "empty-room": empty_room,
    "corridor": corridor,
    "bottleneck": bottleneck,
}
