"""Locale partition: floor-convention cells, membership, halo."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crushsim.grid import LocaleGrid, partition_locales


def make_grid(points, cell=2.0, ids=None):
    pos = np.asarray(points, dtype=float)
    if ids is None:
        ids = np.arange(len(pos))
    return partition_locales(pos, np.asarray(ids), cell)


class TestAssignment:
    def test_floor_convention(self):
        g = make_grid([[0.5, 0.5], [1.9, 1.9], [2.0, 0.0], [3.9, 5.9]])
        assert g.locale_of([0.5, 0.5]) == (0, 0)
        assert list(g.members((0, 0))) == [0, 1]
        # exactly on the boundary belongs to the upper cell
        assert list(g.members((1, 0))) == [2]
        assert list(g.members((1, 2))) == [3]

    def test_negative_coordinates(self):
        g = make_grid([[-0.1, 0.5], [-2.1, -2.1], [-1.9, -0.1]])
        assert list(g.members((-1, 0))) == [0]
        assert list(g.members((-1, -1))) == [2]
        assert list(g.members((-2, -2))) == [1]

    def test_members_sorted(self):
        pts = [[0.5, 0.5]] * 5
        g = make_grid(pts, ids=[4, 2, 0, 3, 1])
        assert list(g.members((0, 0))) == [0, 1, 2, 3, 4]

    def test_empty_cell_lookup(self):
        g = make_grid([[0.5, 0.5]])
        got = g.members((7, 7))
        assert len(got) == 0
        assert got.dtype == np.dtype(int)

    def test_subset_of_agents(self):
        pos = np.array([[0.5, 0.5], [0.6, 0.6], [4.5, 4.5]])
        g = partition_locales(pos, np.array([0, 2]), 2.0)
        assert g.population == 2
        assert list(g.members((0, 0))) == [0]

    def test_no_agents(self):
        g = partition_locales(np.empty((0, 2)), np.empty(0, dtype=int), 2.0)
        assert g.population == 0
        assert g.sorted_locales() == []

    def test_bad_cell_size(self):
        with pytest.raises(ValueError):
            partition_locales(np.array([[0.0, 0.0]]), np.array([0]), 0.0)

    def test_generation_carried(self):
        g = partition_locales(np.array([[0.0, 0.0]]), np.array([0]), 1.0, generation=5)
        assert g.generation == 5


class TestQueries:
    def test_population_counts_all_cells(self):
        g = make_grid([[0.5, 0.5], [2.5, 0.5], [2.6, 0.5], [4.5, 4.5]])
        assert g.population == 4

    def test_sorted_locales_lexicographic(self):
        g = make_grid([[4.5, 0.5], [0.5, 4.5], [0.5, 0.5], [4.5, 4.5]])
        assert g.sorted_locales() == [(0, 0), (0, 2), (2, 0), (2, 2)]

    def test_halo_excludes_own_members(self):
        # centre cell (1,1) with neighbours in all 8 surrounding cells
        pts = [[3.0, 3.0]]
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    pts.append([3.0 + 2 * di, 3.0 + 2 * dj])
        g = make_grid(pts)
        assert list(g.members((1, 1))) == [0]
        assert list(g.halo((1, 1))) == list(range(1, 9))

    def test_halo_ignores_distant_cells(self):
        g = make_grid([[1.0, 1.0], [9.0, 9.0]])
        assert len(g.halo((0, 0))) == 0

    def test_halo_sorted(self):
        pos = np.zeros((10, 2))
        pos[5] = [3.0, 3.0]
        pos[9] = [5.0, 3.0]
        pos[1] = [1.0, 3.0]
        g = partition_locales(pos, np.array([5, 9, 1]), 2.0)
        assert list(g.halo((1, 1))) == [1, 9]


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=-50, max_value=50, allow_nan=False),
            st.floats(min_value=-50, max_value=50, allow_nan=False),
        ),
        min_size=1,
        max_size=40,
    ),
    st.floats(min_value=0.1, max_value=5.0, allow_nan=False),
)
def test_partition_is_exact_and_exhaustive(points, cell):
    pos = np.asarray(points, dtype=float)
    g = partition_locales(pos, np.arange(len(pos)), cell)
    assert g.population == len(points)
    seen = set()
    for loc in g.sorted_locales():
        for a in g.members(loc):
            assert loc == (int(np.floor(pos[a, 0] / cell)), int(np.floor(pos[a, 1] / cell)))
            seen.add(int(a))
    assert seen == set(range(len(points)))
