import numpy as np
import pytest

from crushsim.errors import GeometryError, ParseError
from crushsim.scenario import build_scenario, load_scenario, save_scenario, validate_scenario
from crushsim.scenarios import CANONICAL, bottleneck, corridor, empty_room, room_walls


def square_doc(**overrides):
    doc = {
        "schema": 1,
        "name": "unit-square",
        "bounds": [0.0, 0.0, 10.0, 10.0],
        "walls": room_walls((0.0, 0.0, 10.0, 10.0), [[10.0, 4.0, 10.0, 6.0]]),
        "exits": [{"segment": [10.0, 4.0, 10.0, 6.0], "familiarity": 1.0}],
    }
    doc.update(overrides)
    return doc


class TestBuild:
    def test_builds_and_validates(self):
        s = build_scenario(square_doc())
        assert s.name == "unit-square"
        assert len(s.exits) == 1
        assert s.exits[0].width == pytest.approx(2.0)
        assert s.reach is not None

    def test_rejects_non_mapping(self):
        with pytest.raises(ParseError):
            build_scenario([1, 2, 3])

    def test_rejects_unknown_keys(self):
        with pytest.raises(ParseError, match="unknown"):
            build_scenario(square_doc(extra_field=1))

    def test_rejects_bad_schema(self):
        with pytest.raises(ParseError, match="schema"):
            build_scenario(square_doc(schema=99))

    def test_rejects_malformed_segment(self):
        doc = square_doc()
        doc["exits"][0]["segment"] = [1.0, 2.0, 3.0]
        with pytest.raises(ParseError):
            build_scenario(doc)


class TestValidation:
    def test_no_exits(self):
        doc = square_doc(exits=[])
        with pytest.raises(GeometryError, match="no exits"):
            build_scenario(doc)

    def test_degenerate_exit(self):
        doc = square_doc(exits=[{"segment": [10.0, 5.0, 10.0, 5.0], "familiarity": 1.0}])
        with pytest.raises(GeometryError, match="degenerate"):
            build_scenario(doc)

    def test_exit_outside_bounds(self):
        doc = square_doc(exits=[{"segment": [15.0, 4.0, 15.0, 6.0], "familiarity": 1.0}])
        with pytest.raises(GeometryError, match="outside bounds"):
            build_scenario(doc)

    def test_zero_familiarity_everywhere(self):
        doc = square_doc(exits=[{"segment": [10.0, 4.0, 10.0, 6.0], "familiarity": 0.0}])
        with pytest.raises(GeometryError, match="familiarity"):
            build_scenario(doc)

    def test_walled_off_exit_unreachable(self):
        # A second wall immediately inside the exit seals it into a pocket
        # that the spawn region cannot reach.
        doc = square_doc()
        doc["spawn"] = [0.5, 0.5, 8.0, 9.5]
        doc["walls"].append([9.5, 3.5, 9.5, 6.5])
        doc["walls"].append([9.5, 3.5, 10.0, 3.5])
        doc["walls"].append([9.5, 6.5, 10.0, 6.5])
        with pytest.raises(GeometryError, match="not reachable|sealed off|enclosed"):
            build_scenario(doc)

    def test_sealed_exit_without_spawn_rect(self):
        # With no spawn rectangle the coverage check still catches a sealed
        # room: almost no free space can reach the pocketed exit.
        doc = square_doc()
        doc["walls"].append([9.5, 3.5, 9.5, 6.5])
        doc["walls"].append([9.5, 3.5, 10.0, 3.5])
        doc["walls"].append([9.5, 6.5, 10.0, 6.5])
        with pytest.raises(GeometryError, match="sealed off"):
            build_scenario(doc)

    def test_obstacle_blocks_nothing_fatal(self):
        doc = square_doc(obstacles=[[[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0]]])
        s = build_scenario(doc)
        assert len(s.obstacles) == 1
        # obstacle edges appear in the combined wall segments
        assert len(s.wall_segments) == len(s.walls) + 4


class TestRoundTrip:
    def test_yaml_round_trip(self, tmp_path):
        s = build_scenario(square_doc(aset=90.0, spawn=[1.0, 1.0, 5.0, 9.0]))
        path = tmp_path / "scn.yaml"
        save_scenario(s, path)
        s2 = load_scenario(path)
        assert s2.to_dict() == s.to_dict()

    def test_canonical_round_trip(self, tmp_path):
        for name, factory in CANONICAL.items():
            s = factory()
            save_scenario(s, tmp_path / f"{name}.yaml")
            s2 = load_scenario(tmp_path / f"{name}.yaml")
            assert s2.to_dict() == s.to_dict(), name


class TestCanonical:
    def test_empty_room_shape(self):
        s = empty_room()
        assert s.bounds == (0.0, 0.0, 10.0, 10.0)
        assert s.exits[0].width == pytest.approx(2.0)
        assert s.aset == pytest.approx(120.0)

    def test_corridor_shape(self):
        s = corridor()
        assert s.bounds == (0.0, 0.0, 20.0, 2.0)
        assert s.exits[0].width == pytest.approx(2.0)

    def test_bottleneck_narrow_exit(self):
        s = bottleneck()
        assert s.exits[0].width == pytest.approx(0.8)

    def test_walls_leave_exit_gaps(self):
        s = empty_room()
        # no wall segment may cross the exit span on the east side
        for seg in s.walls:
            if np.allclose(seg[:, 0], 10.0):  # east wall pieces
                ys = sorted(seg[:, 1])
                assert ys[1] <= 4.0 + 1e-9 or ys[0] >= 6.0 - 1e-9

    def test_room_walls_reject_off_boundary_exit(self):
        with pytest.raises(GeometryError):
            room_walls((0.0, 0.0, 10.0, 10.0), [[5.0, 5.0, 6.0, 5.0]])

    def test_all_canonical_validate(self):
        for factory in CANONICAL.values():
            validate_scenario(factory())
