"""Per-locale escalation control between the three analysis levels.

L1 runs only the cheap order detector; L2 adds the learned classifier; L3
adds full contact-force resolution for the locale and its halo. Escalation
is driven by stage outcomes, de-escalation by sustained calm, and levels are
never skipped in either direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DetectorConfig, EscalationConfig
from .errors import ModeError, ProtocolError
from .grid import LocaleGrid, LocaleId
from .identify import DISORDERED, ORDERED, LocaleDetector, TransitionVerdict
from .qualify import CONFIRMED, QualifyOutcome
from .quantify import QuantifySummary

L1, L2, L3 = 1, 2, 3

TRIGGER_DISORDER = "identify-disordered"
TRIGGER_CONFIRMED = "qualify-confirmed"
TRIGGER_ORDERED = "identify-ordered-sustained"
TRIGGER_CALM = "force-clear-sustained"

MODE_LEVELS = {"implicit": L1, "full-force": L3, "hybrid": None}


@dataclass
class Transition:
    """One escalation or de-escalation event."""

    tick: int
    locale: LocaleId
    from_level: int
    to_level: int
    trigger: str


@dataclass
class LocaleAnalysis:
    """Escalation state for one locale."""

    locale: LocaleId
    level: int = L1
    dwell: int = 0  # ticks since the last level change
    ordered_streak: int = 0  # consecutive Ordered verdicts while at L2
    calm_streak: int = 0  # consecutive sub-threshold force ticks while at L3
    last_verdict: TransitionVerdict | None = None
    last_qualify: QualifyOutcome | None = None
    detector: LocaleDetector | None = None


def advance(
    analysis: LocaleAnalysis,
    verdict: TransitionVerdict | None,
    qualify_outcome: QualifyOutcome | None,
    quantify_summary: QuantifySummary | None,
    policy: EscalationConfig,
    tick: int,
) -> Transition | None:
    """Apply one tick of stage outcomes to a locale's escalation state.

    Outcomes must match the level that produced them: classifier output
    implies L2+, force summaries imply L3. Moves at most one level.
    """
    if qualify_outcome is not None and analysis.level < L2:
        raise ProtocolError(
            f"locale {analysis.locale}: classifier outcome delivered at L{analysis.level}"
        )
    if quantify_summary is not None and analysis.level < L3:
        raise ProtocolError(
            f"locale {analysis.locale}: force summary delivered at L{analysis.level}"
        )
    if verdict is not None:
        analysis.last_verdict = verdict
    if qualify_outcome is not None:
        analysis.last_qualify = qualify_outcome

    new_level = analysis.level
    trigger = None

    if analysis.level == L1:
        if verdict is not None and verdict.state == DISORDERED:
            new_level, trigger = L2, TRIGGER_DISORDER
    elif analysis.level == L2:
        if qualify_outcome is not None and qualify_outcome.status == CONFIRMED:
            new_level, trigger = L3, TRIGGER_CONFIRMED
        elif verdict is not None and verdict.state == ORDERED:
            analysis.ordered_streak += 1
            if analysis.ordered_streak >= policy.cooldown:
                new_level, trigger = L1, TRIGGER_ORDERED
        elif verdict is not None:
            analysis.ordered_streak = 0
    else:  # L3
        if quantify_summary is not None:
            if quantify_summary.member_peak < policy.l3_exit_force:
                analysis.calm_streak += 1
                if analysis.calm_streak >= policy.cooldown:
                    new_level, trigger = L2, TRIGGER_CALM
            else:
                analysis.calm_streak = 0

    if new_level != analysis.level:
        event = Transition(
            tick=tick,
            locale=analysis.locale,
            from_level=analysis.level,
            to_level=new_level,
            trigger=trigger,
        )
        analysis.level = new_level
        analysis.dwell = 0
        analysis.ordered_streak = 0
        analysis.calm_streak = 0
        return event
    analysis.dwell += 1
    return None


@dataclass
class LocaleWork:
    """What to run for one locale this tick."""

    locale: LocaleId
    level: int
    members: np.ndarray
    run_detector: bool
    classify: np.ndarray  # member ids with complete feature windows
    quantify: bool
    halo_members: np.ndarray  # agents pulled in from neighbouring cells at L3


@dataclass
class PlanCost:
    """Predicted work for one tick; must match the executed counters exactly."""

    detector_updates: int = 0
    mi_evaluations: int = 0
    classifier_passes: int = 0
    force_pair_checks: int = 0

    def as_dict(self) -> dict:
        return {
            "detector_updates": self.detector_updates,
            "mi_evaluations": self.mi_evaluations,
            "classifier_passes": self.classifier_passes,
            "force_pair_checks": self.force_pair_checks,
        }


@dataclass
class ContactChecks:
    """Deduped contact-candidate work across all L3 locales for one tick.

    A pair is a candidate when the two agents sit within one cell of each
    other and at least one belongs to an L3 locale; that covers every
    possible member contact because bodies are smaller than a cell. Every
    covered agent (L3 members plus halo) is checked against every wall.
    """

    pairs: np.ndarray  # (m, 2) agent id pairs, a < b, lexicographically sorted
    pair_owner: np.ndarray  # (m, 2) owning locale per pair
    agents: np.ndarray  # covered agent ids, sorted
    agent_owner: np.ndarray  # (k, 2) owning locale per covered agent

    @staticmethod
    def empty() -> "ContactChecks":
        return ContactChecks(
            pairs=np.empty((0, 2), dtype=int),
            pair_owner=np.empty((0, 2), dtype=int),
            agents=np.empty(0, dtype=int),
            agent_owner=np.empty((0, 2), dtype=int),
        )


@dataclass
class WorkPlan:
    items: list[LocaleWork]
    cost: PlanCost
    checks: ContactChecks


def enumerate_contact_checks(grid: LocaleGrid, l3_locales: list[LocaleId]) -> ContactChecks:
    """Candidate contact work for the given L3 locales, deduped and canonical.

    Ownership for the counters: a pair belongs to the lower agent's locale
    when that locale is L3, else to the higher agent's; a covered agent's
    wall checks belong to its own locale when L3, else to the lexicographically
    first adjacent L3 locale.
    """
    l3 = set(l3_locales)
    if not l3:
        return ContactChecks.empty()
    covered_cells: dict[LocaleId, np.ndarray] = {}
    for ci, cj in sorted(l3):
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                cell = (ci + di, cj + dj)
                if cell not in covered_cells:
                    ids = grid.members(cell)
                    if len(ids):
                        covered_cells[cell] = ids
    if not covered_cells:
        return ContactChecks.empty()

    ids = np.concatenate([covered_cells[c] for c in sorted(covered_cells)])
    cells = np.concatenate(
        [np.tile(np.array(c, dtype=int), (len(covered_cells[c]), 1)) for c in sorted(covered_cells)]
    )
    order = np.argsort(ids)
    ids = ids[order]
    cells = cells[order]
    in_l3 = np.array([(int(i), int(j)) in l3 for i, j in cells], dtype=bool)

    def adjacent_l3(cell: tuple[int, int]) -> tuple[int, int]:
        i, j = cell
        for ni, nj in sorted(
            (i + di, j + dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)
        ):
            if (ni, nj) in l3:
                return (ni, nj)
        raise AssertionError(f"covered cell {cell} has no adjacent L3 locale")

    halo_owner = {c: adjacent_l3(c) for c in covered_cells if c not in l3}
    agent_owner = np.array(
        [
            (int(ci), int(cj)) if flag else halo_owner[(int(ci), int(cj))]
            for (ci, cj), flag in zip(cells, in_l3)
        ],
        dtype=int,
    ).reshape(len(ids), 2)

    if len(ids) >= 2:
        ia, ib = np.triu_indices(len(ids), k=1)
        near = np.maximum(
            np.abs(cells[ia, 0] - cells[ib, 0]), np.abs(cells[ia, 1] - cells[ib, 1])
        ) <= 1
        keep = near & (in_l3[ia] | in_l3[ib])
        ia, ib = ia[keep], ib[keep]
        pairs = np.column_stack([ids[ia], ids[ib]])
        pair_owner = np.where(in_l3[ia][:, None], cells[ia], cells[ib])
    else:
        pairs = np.empty((0, 2), dtype=int)
        pair_owner = np.empty((0, 2), dtype=int)
    return ContactChecks(pairs=pairs, pair_owner=pair_owner, agents=ids, agent_owner=agent_owner)


class HybridController:
    """Owns the per-locale analysis states and decides each tick's work."""

    def __init__(
        self,
        mode: str,
        policy: EscalationConfig,
        detector_config: DetectorConfig,
        seed: int,
        model_loaded: bool,
        n_walls: int = 0,
    ):
        if mode not in MODE_LEVELS:
            raise ModeError(f"unknown analysis mode '{mode}'")
        if mode == "hybrid" and not model_loaded:
            raise ModeError("hybrid mode needs a classifier model to confirm escalations")
        self.mode = mode
        self.policy = policy
        self.detector_config = detector_config
        self.seed = seed
        self.model_loaded = model_loaded
        self.n_walls = n_walls
        self.analyses: dict[LocaleId, LocaleAnalysis] = {}

    def _analysis(self, locale: LocaleId) -> LocaleAnalysis:
        a = self.analyses.get(locale)
        if a is None:
            pinned = MODE_LEVELS[self.mode]
            a = LocaleAnalysis(
                locale=locale,
                level=pinned if pinned is not None else L1,
                detector=LocaleDetector(locale, self.detector_config, self.seed),
            )
            self.analyses[locale] = a
        return a

    def level_of(self, locale: LocaleId) -> int:
        a = self.analyses.get(locale)
        if a is not None:
            return a.level
        pinned = MODE_LEVELS[self.mode]
        return pinned if pinned is not None else L1

    def plan_tick(self, grid: LocaleGrid, window_ready: dict[LocaleId, np.ndarray]) -> WorkPlan:
        """Decide the work for every occupied locale and cost it in advance.

        window_ready maps each locale to the member ids that have a complete
        feature window this tick.
        """
        items: list[LocaleWork] = []
        cost = PlanCost()
        analyses_on = self.mode != "implicit"
        l3_locales: list[LocaleId] = []
        for locale in grid.sorted_locales():
            analysis = self._analysis(locale)
            members = grid.members(locale)
            run_detector = analyses_on and len(members) > 0
            classify = np.zeros(0, dtype=int)
            quantify = False
            if run_detector:
                cost.detector_updates += 1
                if len(analysis.detector.signal.phi) + 1 >= max(1, self.detector_config.window // 2):
                    cost.mi_evaluations += 1
            if analyses_on and analysis.level >= L2 and self.model_loaded:
                classify = window_ready.get(locale, np.zeros(0, dtype=int))
                cost.classifier_passes += len(classify)
            if analyses_on and analysis.level >= L3:
                quantify = True
                l3_locales.append(locale)
            items.append(
                LocaleWork(
                    locale=locale,
                    level=analysis.level,
                    members=members,
                    run_detector=run_detector,
                    classify=classify,
                    quantify=quantify,
                    halo_members=grid.halo(locale) if quantify else np.empty(0, dtype=int),
                )
            )
        checks = enumerate_contact_checks(grid, l3_locales)
        cost.force_pair_checks = len(checks.pairs) + len(checks.agents) * self.n_walls
        return WorkPlan(items=items, cost=cost, checks=checks)
