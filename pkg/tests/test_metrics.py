"""Service metrics: level-of-service bands, density criterion, egress times."""

import pytest

from crushsim.errors import IncompleteRun
from crushsim.metrics import (
    NOT_EVALUATED,
    SAFE,
    UNSAFE,
    DensityHistory,
    egress_times,
    fruin_level,
    fruin_timeline,
    imo_check,
    summarize,
    worst_fruin,
)


class TestFruinLevel:
    def test_crush_boundary(self):
        # 0.40 m^2 per person is level F, 0.46 exactly is still level E
        assert fruin_level(1 / 0.40) == ("F", pytest.approx(0.40, abs=0))
        letter, space = fruin_level(1 / 0.46)
        assert letter == "E"
        assert space == 0.46

    def test_all_band_floors_inclusive(self):
        for space, letter in ((3.24, "A"), (2.32, "B"), (1.39, "C"), (0.93, "D"), (0.46, "E")):
            assert fruin_level(1 / space)[0] == letter

    def test_just_below_a_floor_drops_a_band(self):
        assert fruin_level(1 / 3.23)[0] == "B"
        assert fruin_level(1 / 0.45)[0] == "F"

    def test_zero_density_is_unlimited_space(self):
        letter, space = fruin_level(0.0)
        assert letter == "A"
        assert space == float("inf")

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            fruin_level(-0.1)


def history_from_rows(rows, dt=0.05, cell_area=4.0, complete=True):
    """rows: list of {locale: density} dicts, one per tick."""
    h = DensityHistory(dt=dt, cell_area=cell_area)
    for tick, densities in enumerate(rows):
        h.record(tick, densities)
    h.complete = complete
    return h


class TestDensityHistory:
    def test_record_tracks_worst_and_skips_zeros(self):
        h = history_from_rows([{(0, 0): 2.0, (1, 0): 0.0}, {(0, 0): 3.5, (1, 0): 1.0}])
        assert h.total_ticks == 2
        assert (1, 0) not in {loc for loc, entries in h.series.items() if len(entries) == 2}
        assert h.series[(1, 0)] == [(1, 1.0)]
        assert h.worst == [(0, 2.0), (1, 3.5)]

    def test_fraction_is_inclusive_and_over_all_ticks(self):
        h = history_from_rows([{(0, 0): 4.0}, {(0, 0): 3.9}, {}, {}])
        assert h.fraction_at_or_above((0, 0), 4.0) == 0.25
        assert h.fraction_at_or_above((0, 0), 3.9) == 0.5
        assert h.fraction_at_or_above((9, 9), 1.0) == 0.0

    def test_empty_history_fraction(self):
        h = DensityHistory(dt=0.05, cell_area=4.0)
        assert h.fraction_at_or_above((0, 0), 1.0) == 0.0


class TestImoCheck:
    def test_boundary_exactly_counts_as_failure(self):
        # exactly 4 persons/m^2 for exactly 10% of the run fails
        rows = [{(2, 2): 4.0}] * 10 + [{(2, 2): 1.0}] * 90
        res = imo_check(history_from_rows(rows))
        assert res.passed is False
        assert res.worst_fraction == pytest.approx(0.10)
        assert res.worst_locale == (2, 2)

    def test_just_under_fraction_passes(self):
        rows = [{(2, 2): 4.0}] * 9 + [{(2, 2): 1.0}] * 91
        res = imo_check(history_from_rows(rows))
        assert res.passed is True
        assert res.worst_fraction == pytest.approx(0.09)

    def test_just_under_density_passes(self):
        rows = [{(2, 2): 3.999}] * 50 + [{}] * 50
        res = imo_check(history_from_rows(rows))
        assert res.passed is True
        assert res.worst_fraction == 0.0
        assert res.worst_locale is None

    def test_incomplete_run_rejected(self):
        h = history_from_rows([{(0, 0): 5.0}], complete=False)
        with pytest.raises(IncompleteRun):
            imo_check(h)

    def test_per_locale_reports_only_offenders(self):
        rows = [{(0, 0): 4.5, (1, 1): 2.0}] * 30 + [{(0, 0): 1.0, (1, 1): 2.0}] * 70
        res = imo_check(history_from_rows(rows))
        assert set(res.per_locale) == {(0, 0)}
        assert res.per_locale[(0, 0)] == pytest.approx(0.30)

    def test_custom_thresholds(self):
        rows = [{(0, 0): 2.0}] * 50 + [{}] * 50
        res = imo_check(history_from_rows(rows), density_threshold=2.0, fraction_threshold=0.6)
        assert res.passed is True
        assert res.worst_fraction == pytest.approx(0.5)


class TestEgressTimes:
    def test_rset_is_slowest_exit(self):
        out = egress_times({0: 12.0, 1: 30.5, 2: 8.0}, population=3, aset=60.0)
        assert out.rset == 30.5
        assert out.verdict == SAFE
        assert out.evacuated == 3
        assert list(out.exit_times) == [0, 1, 2]

    def test_partial_evacuation_not_evaluated(self):
        out = egress_times({0: 12.0}, population=3, aset=60.0)
        assert out.rset is None
        assert out.verdict == NOT_EVALUATED

    def test_no_budget_not_evaluated(self):
        out = egress_times({0: 12.0}, population=1, aset=None)
        assert out.rset == 12.0
        assert out.verdict == NOT_EVALUATED

    def test_budget_equal_to_rset_is_unsafe(self):
        assert egress_times({0: 60.0}, 1, 60.0).verdict == UNSAFE
        assert egress_times({0: 59.9}, 1, 60.0).verdict == SAFE

    def test_empty_population(self):
        out = egress_times({}, population=0, aset=10.0)
        assert out.rset is None
        assert out.verdict == NOT_EVALUATED


class TestSummaries:
    def test_fruin_timeline_letters(self):
        h = history_from_rows([{(0, 0): 0.2}, {(0, 0): 2.5}, {}])
        line = fruin_timeline(h)
        assert line == [(0, 0.2, "A"), (1, 2.5, "F"), (2, 0.0, "A")]

    def test_worst_fruin(self):
        h = history_from_rows([{(0, 0): 1.2}, {(0, 0): 2.3}])
        letter, density = worst_fruin(h)
        assert (letter, density) == ("F", 2.3)

    def test_summarize_shape(self):
        h = history_from_rows([{(2, 2): 4.0}] * 20 + [{}] * 80)
        egress = egress_times({0: 5.0, 1: 7.5}, population=2, aset=10.0)
        doc = summarize(h, egress)
        assert doc["schema"] == 1
        assert doc["egress"]["rset"] == 7.5
        assert doc["egress"]["verdict"] == SAFE
        assert doc["density_criterion"]["passed"] is False
        assert doc["density_criterion"]["per_locale"] == {"2,2": pytest.approx(0.2)}
        assert doc["density_criterion"]["worst_locale"] == [2, 2]
        assert doc["fruin"]["worst_level"] == "F"

    def test_summarize_incomplete_run(self):
        h = history_from_rows([{(0, 0): 5.0}], complete=False)
        egress = egress_times({}, population=5, aset=None)
        doc = summarize(h, egress)
        assert doc["density_criterion"]["passed"] is None
        assert doc["egress"]["verdict"] == NOT_EVALUATED
