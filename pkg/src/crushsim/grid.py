"""Dynamic locale partition: a spatial hash grid over agent positions.

Locales are cells of a uniform grid; each is analysed as an independent
sub-system. Cell assignment uses the floor convention, so an agent exactly on
a boundary x = k * cell_size belongs to cell index k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LocaleId = tuple[int, int]


@dataclass
class LocaleGrid:
    cell_size: float  # m
    cells: dict[LocaleId, np.ndarray] = field(default_factory=dict)  # (i, j) -> agent ids
    generation: int = 0

    def members(self, locale: LocaleId) -> np.ndarray:
        return self.cells.get(locale, np.empty(0, dtype=int))

    def halo(self, locale: LocaleId) -> np.ndarray:
        """Agents in the eight neighbouring cells (members excluded)."""
        i, j = locale
        parts = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ids = self.cells.get((i + di, j + dj))
                if ids is not None:
                    parts.append(ids)
        if not parts:
            return np.empty(0, dtype=int)
        return np.sort(np.concatenate(parts))

    def locale_of(self, position) -> LocaleId:
        return (
            int(np.floor(position[0] / self.cell_size)),
            int(np.floor(position[1] / self.cell_size)),
        )

    def sorted_locales(self) -> list[LocaleId]:
        return sorted(self.cells.keys())

    @property
    def population(self) -> int:
        return sum(len(v) for v in self.cells.values())


def partition_locales(
    positions: np.ndarray, active_ids: np.ndarray, cell_size: float, generation: int = 0
) -> LocaleGrid:
    """Assign active agents to grid cells; empty cells are omitted.

    ``positions`` is the full (n, 2) position array; ``active_ids`` selects the
    agents to place.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    grid = LocaleGrid(cell_size=cell_size, generation=generation)
    if len(active_ids) == 0:
        return grid
    active_ids = np.asarray(active_ids, dtype=int)
    ij = np.floor(positions[active_ids] / cell_size).astype(int)
    order = np.lexsort((active_ids, ij[:, 1], ij[:, 0]))
    sorted_ids = active_ids[order]
    sorted_ij = ij[order]
    boundaries = np.nonzero(np.any(np.diff(sorted_ij, axis=0) != 0, axis=1))[0] + 1
    for chunk_ids, chunk_ij in zip(
        np.split(sorted_ids, boundaries), np.split(sorted_ij, boundaries)
    ):
        grid.cells[(int(chunk_ij[0, 0]), int(chunk_ij[0, 1]))] = np.sort(chunk_ids)
    return grid
