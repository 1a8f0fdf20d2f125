"""Escalation state machine, work planning, and contact-check enumeration."""

import numpy as np
import pytest

from crushsim.config import DetectorConfig, EscalationConfig
from crushsim.errors import ModeError, ProtocolError
from crushsim.grid import partition_locales
from crushsim.hybrid import (
    L1,
    L2,
    L3,
    HybridController,
    LocaleAnalysis,
    TRIGGER_CALM,
    TRIGGER_CONFIRMED,
    TRIGGER_DISORDER,
    TRIGGER_ORDERED,
    advance,
    enumerate_contact_checks,
)
from crushsim.identify import DISORDERED, ORDERED, TransitionVerdict
from crushsim.qualify import CONFIRMED, UNCONFIRMED, QualifyOutcome
from crushsim.quantify import QuantifySummary

CELL = (0, 0)
POLICY = EscalationConfig(cooldown=3, l3_exit_force=50.0)


def verdict(state, stagnant=False):
    return TransitionVerdict(
        locale=CELL, state=state, confidence=0.8, phi_mean=0.4, mi_value=0.3, stagnant=stagnant
    )


def qualify(status):
    return QualifyOutcome(
        locale=CELL, status=status, fraction=1.0, mean_probability=0.9, n_windows=4
    )


def summary(member_peak):
    return QuantifySummary(
        locale=CELL, peak_contact_force=member_peak, contact_count=2, member_peak=member_peak
    )


class TestAdvance:
    def test_disorder_escalates_l1_to_l2(self):
        a = LocaleAnalysis(locale=CELL)
        ev = advance(a, verdict(DISORDERED), None, None, POLICY, tick=7)
        assert (ev.from_level, ev.to_level, ev.trigger, ev.tick) == (L1, L2, TRIGGER_DISORDER, 7)
        assert a.level == L2
        assert a.dwell == 0

    def test_ordered_keeps_l1(self):
        a = LocaleAnalysis(locale=CELL)
        assert advance(a, verdict(ORDERED), None, None, POLICY, tick=1) is None
        assert a.level == L1
        assert a.dwell == 1

    def test_confirmed_escalates_l2_to_l3(self):
        a = LocaleAnalysis(locale=CELL, level=L2)
        ev = advance(a, verdict(DISORDERED), qualify(CONFIRMED), None, POLICY, tick=9)
        assert (ev.from_level, ev.to_level, ev.trigger) == (L2, L3, TRIGGER_CONFIRMED)

    def test_confirmed_wins_over_ordered_verdict(self):
        a = LocaleAnalysis(locale=CELL, level=L2, ordered_streak=2)
        ev = advance(a, verdict(ORDERED), qualify(CONFIRMED), None, POLICY, tick=9)
        assert ev.to_level == L3

    def test_unconfirmed_does_not_block_ordered_streak(self):
        a = LocaleAnalysis(locale=CELL, level=L2)
        for tick in range(POLICY.cooldown - 1):
            assert advance(a, verdict(ORDERED), qualify(UNCONFIRMED), None, POLICY, tick) is None
        ev = advance(a, verdict(ORDERED), qualify(UNCONFIRMED), None, POLICY, POLICY.cooldown)
        assert (ev.from_level, ev.to_level, ev.trigger) == (L2, L1, TRIGGER_ORDERED)

    def test_disordered_verdict_resets_ordered_streak(self):
        a = LocaleAnalysis(locale=CELL, level=L2)
        advance(a, verdict(ORDERED), None, None, POLICY, 0)
        advance(a, verdict(ORDERED), None, None, POLICY, 1)
        advance(a, verdict(DISORDERED), None, None, POLICY, 2)
        assert a.ordered_streak == 0
        for tick in range(3, 3 + POLICY.cooldown - 1):
            assert advance(a, verdict(ORDERED), None, None, POLICY, tick) is None
        assert advance(a, verdict(ORDERED), None, None, POLICY, 99) is not None

    def test_l3_calm_deescalates_after_cooldown(self):
        a = LocaleAnalysis(locale=CELL, level=L3)
        for tick in range(POLICY.cooldown - 1):
            assert advance(a, None, None, summary(10.0), POLICY, tick) is None
        ev = advance(a, None, None, summary(10.0), POLICY, POLICY.cooldown)
        assert (ev.from_level, ev.to_level, ev.trigger) == (L3, L2, TRIGGER_CALM)

    def test_l3_loud_tick_resets_calm_streak(self):
        a = LocaleAnalysis(locale=CELL, level=L3)
        advance(a, None, None, summary(10.0), POLICY, 0)
        advance(a, None, None, summary(10.0), POLICY, 1)
        advance(a, None, None, summary(500.0), POLICY, 2)
        assert a.calm_streak == 0

    def test_l3_boundary_force_is_loud(self):
        a = LocaleAnalysis(locale=CELL, level=L3)
        for tick in range(POLICY.cooldown + 2):
            assert advance(a, None, None, summary(POLICY.l3_exit_force), POLICY, tick) is None
        assert a.level == L3

    def test_l3_ignores_detector_and_classifier_outcomes(self):
        a = LocaleAnalysis(locale=CELL, level=L3)
        for tick in range(POLICY.cooldown + 2):
            advance(a, verdict(ORDERED), qualify(UNCONFIRMED), summary(500.0), POLICY, tick)
        assert a.level == L3

    def test_qualify_outcome_below_l2_rejected(self):
        a = LocaleAnalysis(locale=CELL)
        with pytest.raises(ProtocolError, match="classifier outcome"):
            advance(a, None, qualify(CONFIRMED), None, POLICY, 0)

    def test_force_summary_below_l3_rejected(self):
        a = LocaleAnalysis(locale=CELL, level=L2)
        with pytest.raises(ProtocolError, match="force summary"):
            advance(a, None, None, summary(100.0), POLICY, 0)

    def test_transition_resets_streaks_and_dwell(self):
        a = LocaleAnalysis(locale=CELL, level=L2, ordered_streak=2, dwell=40)
        advance(a, None, qualify(CONFIRMED), None, POLICY, 5)
        assert a.ordered_streak == 0
        assert a.calm_streak == 0
        assert a.dwell == 0

    def test_outcomes_are_remembered(self):
        a = LocaleAnalysis(locale=CELL, level=L2)
        v, q = verdict(DISORDERED), qualify(UNCONFIRMED)
        advance(a, v, q, None, POLICY, 0)
        assert a.last_verdict is v
        assert a.last_qualify is q


def make_grid(positions, cell_size=1.0):
    positions = np.asarray(positions, dtype=float)
    return partition_locales(positions, np.arange(len(positions)), cell_size)


class TestController:
    DET = DetectorConfig(window=4)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ModeError, match="mode"):
            HybridController("turbo", POLICY, self.DET, seed=1, model_loaded=True)

    def test_hybrid_requires_model(self):
        with pytest.raises(ModeError, match="model"):
            HybridController("hybrid", POLICY, self.DET, seed=1, model_loaded=False)

    def test_pinned_levels(self):
        imp = HybridController("implicit", POLICY, self.DET, seed=1, model_loaded=False)
        ful = HybridController("full-force", POLICY, self.DET, seed=1, model_loaded=False)
        hyb = HybridController("hybrid", POLICY, self.DET, seed=1, model_loaded=True)
        assert imp.level_of((5, 5)) == L1
        assert ful.level_of((5, 5)) == L3
        assert hyb.level_of((5, 5)) == L1

    def test_implicit_plans_no_analysis_work(self):
        grid = make_grid([[0.5, 0.5], [0.6, 0.5], [2.5, 2.5]])
        ctl = HybridController("implicit", POLICY, self.DET, seed=1, model_loaded=False, n_walls=4)
        plan = ctl.plan_tick(grid, {})
        assert plan.cost.as_dict() == {
            "detector_updates": 0,
            "mi_evaluations": 0,
            "classifier_passes": 0,
            "force_pair_checks": 0,
        }
        assert all(not w.run_detector and not w.quantify for w in plan.items)

    def test_full_force_quantifies_everywhere(self):
        grid = make_grid([[0.5, 0.5], [0.6, 0.5], [2.5, 2.5]])
        ctl = HybridController("full-force", POLICY, self.DET, seed=1, model_loaded=False, n_walls=2)
        plan = ctl.plan_tick(grid, {})
        assert all(w.quantify for w in plan.items)
        # all three agents covered, one in-cell pair plus the cross-cell pair
        # (0,0) to (2,2) is farther than one cell so only (0,1) qualifies
        assert plan.checks.pairs.tolist() == [[0, 1]]
        assert plan.checks.agents.tolist() == [0, 1, 2]
        assert plan.cost.force_pair_checks == 1 + 3 * 2

    def test_hybrid_detector_costs(self):
        grid = make_grid([[0.5, 0.5], [0.6, 0.5], [2.5, 2.5]])
        ctl = HybridController("hybrid", POLICY, self.DET, seed=1, model_loaded=True)
        plan = ctl.plan_tick(grid, {})
        assert plan.cost.detector_updates == 2
        # window 4 warms after 2 pushes; fresh detectors are one push away
        assert plan.cost.mi_evaluations == 0
        assert plan.cost.classifier_passes == 0
        assert plan.cost.force_pair_checks == 0

    def test_classifier_passes_counted_at_l2(self):
        grid = make_grid([[0.5, 0.5], [0.6, 0.5]])
        ctl = HybridController("hybrid", POLICY, self.DET, seed=1, model_loaded=True)
        ctl._analysis((0, 0)).level = L2
        plan = ctl.plan_tick(grid, {(0, 0): np.array([0, 1])})
        assert plan.cost.classifier_passes == 2
        work = [w for w in plan.items if w.locale == (0, 0)][0]
        assert work.classify.tolist() == [0, 1]
        assert not work.quantify

    def test_l3_work_includes_halo(self):
        grid = make_grid([[0.5, 0.5], [1.5, 0.5], [3.5, 3.5]])
        ctl = HybridController("hybrid", POLICY, self.DET, seed=1, model_loaded=True, n_walls=3)
        ctl._analysis((0, 0)).level = L3
        plan = ctl.plan_tick(grid, {})
        work = [w for w in plan.items if w.locale == (0, 0)][0]
        assert work.quantify
        assert work.halo_members.tolist() == [1]
        assert plan.checks.agents.tolist() == [0, 1]
        assert plan.cost.force_pair_checks == 1 + 2 * 3


class TestEnumerateContactChecks:
    def test_no_l3_is_empty(self):
        grid = make_grid([[0.5, 0.5], [0.6, 0.6]])
        checks = enumerate_contact_checks(grid, [])
        assert len(checks.pairs) == 0
        assert len(checks.agents) == 0

    def test_empty_l3_cell_with_occupied_halo(self):
        grid = make_grid([[1.5, 0.5]])
        checks = enumerate_contact_checks(grid, [(0, 0)])
        assert checks.agents.tolist() == [0]
        assert len(checks.pairs) == 0
        assert checks.agent_owner.tolist() == [[0, 0]]

    def test_pair_requires_l3_endpoint(self):
        # two agents in adjacent halo cells flanking the L3 cell: both are
        # covered for wall checks but the pair between them has no L3 endpoint
        grid = make_grid([[0.5, 0.5], [2.5, 0.5]])
        checks = enumerate_contact_checks(grid, [(1, 0)])
        assert checks.agents.tolist() == [0, 1]
        assert checks.pairs.tolist() == []

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        positions = rng.uniform(0, 6, (40, 2))
        grid = make_grid(positions, cell_size=1.0)
        occupied = grid.sorted_locales()
        l3 = [occupied[i] for i in rng.choice(len(occupied), size=4, replace=False)]
        checks = enumerate_contact_checks(grid, l3)
        cell_of = {a: tuple(np.floor(positions[a]).astype(int)) for a in range(40)}
        l3set = set(l3)

        def cheb(c1, c2):
            return max(abs(c1[0] - c2[0]), abs(c1[1] - c2[1]))

        covered = sorted(
            a for a, c in cell_of.items() if any(cheb(c, l) <= 1 for l in l3set)
        )
        expect = [
            [a, b]
            for a in range(40)
            for b in range(a + 1, 40)
            if a in covered and b in covered
            and cheb(cell_of[a], cell_of[b]) <= 1
            and (cell_of[a] in l3set or cell_of[b] in l3set)
        ]
        assert checks.agents.tolist() == covered
        assert checks.pairs.tolist() == expect

    def test_pair_owner_prefers_lower_agents_l3_cell(self):
        # agent 0 in L3 cell (0,0), agent 1 in L3 cell (1,0): owner is (0,0)
        grid = make_grid([[0.5, 0.5], [1.5, 0.5]])
        checks = enumerate_contact_checks(grid, [(0, 0), (1, 0)])
        assert checks.pairs.tolist() == [[0, 1]]
        assert checks.pair_owner.tolist() == [[0, 0]]

    def test_pair_owner_falls_to_higher_agent_when_lower_is_halo(self):
        # agent 0 sits in a halo cell, agent 1 in the L3 cell
        grid = make_grid([[0.5, 0.5], [1.5, 0.5]])
        checks = enumerate_contact_checks(grid, [(1, 0)])
        assert checks.pairs.tolist() == [[0, 1]]
        assert checks.pair_owner.tolist() == [[1, 0]]

    def test_halo_agent_owner_is_first_adjacent_l3(self):
        # halo cell (1,1) touches L3 cells (0,0) and (2,2); (0,0) sorts first
        grid = make_grid([[1.5, 1.5], [0.5, 0.5], [2.5, 2.5]])
        checks = enumerate_contact_checks(grid, [(0, 0), (2, 2)])
        owners = {int(a): tuple(o) for a, o in zip(checks.agents, checks.agent_owner)}
        assert owners[0] == (0, 0)
        assert owners[1] == (0, 0)
        assert owners[2] == (2, 2)

    def test_pairs_unique_with_adjacent_l3_cells(self):
        # both cells L3, shared neighbourhood: the cross pair appears once
        grid = make_grid([[0.5, 0.5], [1.5, 0.5], [1.6, 0.6]])
        checks = enumerate_contact_checks(grid, [(0, 0), (1, 0)])
        assert checks.pairs.tolist() == [[0, 1], [0, 2], [1, 2]]
