"""Fixed-timestep world model and tick loop.

Every tick: repartition locales, compute per-agent features, plan per-locale
analysis work at each locale's escalation level, execute it (optionally on a
thread pool), resolve measured contact forces for covered agents, advance the
escalation state machines, then integrate motion and handle evacuations.

Motion is driven by the movement model alone; contact forces are measurement.
That keeps trajectories identical across analysis modes, which is what makes
hybrid-vs-full-force comparisons meaningful. The one feedback is the fall
rule: an agent whose measured compression stays critical for the configured
sustain collapses and becomes a static obstacle.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentState, seed_agents
from .config import RunConfig
from .errors import NumericError, ParseError
from .grid import LocaleGrid, LocaleId, partition_locales
from .hybrid import (
    L2,
    HybridController,
    Transition,
    advance,
)
from .identify import TransitionVerdict, compute_feature_rows
from .metrics import DensityHistory, EgressTimes, egress_times
from .movement import (
    crowd_forces,
    desired_directions,
    effective_desired_speed,
    integrate_arrays,
    relax_threat,
)
from .qualify import Classifier, QualifyOutcome, qualify_locale
from .quantify import (
    ExposureRecord,
    QuantifySummary,
    find_contacts,
    resolve_forces,
)
from .scenario import Scenario

N_FEATURES = 7


@dataclass
class CostCounters:
    """Work actually performed, total and per locale; monotone within a run."""

    force_pair_evaluations: int = 0
    mi_evaluations: int = 0
    classifier_forward_passes: int = 0
    detector_updates: int = 0
    per_locale: dict = field(default_factory=dict)

    def add(self, counter: str, amount: int, locale: LocaleId | None = None) -> None:
        if amount < 0:
            raise ValueError("counters only increase")
        setattr(self, counter, getattr(self, counter) + int(amount))
        if locale is not None and amount:
            bucket = self.per_locale.setdefault((int(locale[0]), int(locale[1])), {})
            bucket[counter] = bucket.get(counter, 0) + int(amount)

    def totals(self) -> dict:
        return {
            "force_pair_evaluations": self.force_pair_evaluations,
            "mi_evaluations": self.mi_evaluations,
            "classifier_forward_passes": self.classifier_forward_passes,
            "detector_updates": self.detector_updates,
        }

    def to_dict(self) -> dict:
        return {
            "totals": self.totals(),
            "per_locale": {
                f"{i},{j}": dict(sorted(v.items())) for (i, j), v in sorted(self.per_locale.items())
            },
        }


class ExposureLedger:
    """Vectorized exposure accounting for the whole population.

    Mirrors ExposureRecord semantics over (n,) arrays so the per-tick cost
    stays flat; individual ExposureRecord objects are materialized on demand.
    """

    def __init__(self, n: int, dt: float, tiers: tuple[float, ...], extra_thresholds=()):
        self.n = n
        self.dt = dt
        self.tiers = tuple(tiers)
        self.thresholds = tuple(sorted(set(self.tiers) | set(extra_thresholds)))
        self.history: list[np.ndarray] = []
        self.first_tick = 0
        self.peak = np.zeros(n)
        self.integrals = {t: np.zeros(n) for t in self.tiers}
        self.streaks = {t: np.zeros(n, dtype=int) for t in self.thresholds}
        self.max_streaks = {t: np.zeros(n, dtype=int) for t in self.thresholds}
        self.last_active_tick = np.full(n, -1, dtype=int)

    def accumulate(self, tick: int, force: np.ndarray, active: np.ndarray) -> None:
        row = np.zeros(self.n)
        row[active] = force[active]
        self.history.append(row)
        self.last_active_tick[active] = tick
        np.maximum(self.peak, row, out=self.peak)
        for tier in self.tiers:
            over = row >= tier
            self.integrals[tier][over] += (row[over] - tier) * self.dt
        for thr in self.thresholds:
            over = row >= thr
            s = self.streaks[thr]
            s[~over] = 0
            s[over] += 1
            np.maximum(self.max_streaks[thr], s, out=self.max_streaks[thr])

    def sustained_ticks(self, threshold: float) -> np.ndarray:
        return self.streaks[threshold]

    def record(self, agent_id: int) -> ExposureRecord:
        last = self.last_active_tick[agent_id]
        history = [float(row[agent_id]) for row in self.history[: last + 1]]
        rec = ExposureRecord(
            agent_id=agent_id,
            dt=self.dt,
            tiers=self.tiers,
            thresholds=self.thresholds,
            history=history,
            peak=float(self.peak[agent_id]),
        )
        rec.integrals = {t: float(self.integrals[t][agent_id]) for t in self.tiers}
        rec.streaks = {t: int(self.streaks[t][agent_id]) for t in self.thresholds}
        rec.max_streaks = {t: int(self.max_streaks[t][agent_id]) for t in self.thresholds}
        return rec


class NullRecorder:
    """Sink for runs that do not need an on-disk archive."""

    def trajectory(self, tick, time, ids, pos, vel, cells, levels):
        pass

    def verdicts(self, tick, verdicts):
        pass

    def transition(self, event):
        pass

    def features(self, tick, ids, rows):
        pass

    def exposure(self, tick, ids, totals, peaks):
        pass

    def exits(self, tick, time, ids):
        pass


@dataclass
class RunResult:
    scenario: Scenario
    config: RunConfig
    population: int
    ticks: int
    completed: bool
    timed_out: bool
    exit_times: dict[int, float]
    egress: EgressTimes
    density: DensityHistory
    transitions: list[Transition]
    cost: CostCounters
    exposure: list[ExposureRecord]
    fallen: list[int]

    @property
    def status(self) -> str:
        return "completed" if self.completed else "timeout"


@dataclass
class SimulationState:
    """Spec-level snapshot of the world (agent objects built on demand)."""

    time: float
    tick: int
    agents: list[AgentState]
    rng_seed: int
    locales: LocaleGrid
    analyses: dict
    cost_counters: CostCounters


class Simulation:
    """One seeded run of a scenario under a config."""

    def __init__(
        self,
        scenario: Scenario,
        config: RunConfig,
        model: Classifier | None = None,
        recorder=None,
        on_tick=None,
    ):
        self.scenario = scenario
        self.config = config
        self.model = model
        self.recorder = recorder or NullRecorder()
        self.on_tick = on_tick

        agents = seed_agents(
            scenario, config.agents.count, config.agents.placement, config.seed, config.agents
        )
        self.n = len(agents)
        self.pos = np.array([a.position for a in agents]).reshape(self.n, 2)
        self.vel = np.array([a.velocity for a in agents]).reshape(self.n, 2)
        self.mass = np.array([a.mass for a in agents])
        self.radius = np.array([a.radius for a in agents])
        self.v0 = np.array([a.desired_speed for a in agents])
        self.threat = np.array([a.perceived_threat for a in agents])
        self.comp = np.array([a.competitiveness for a in agents])
        self.target_exit = np.array([a.target_exit for a in agents], dtype=int)
        self.evacuated_at = np.full(self.n, np.nan)
        self.fallen = np.zeros(self.n, dtype=bool)
        self.walls = scenario.wall_segments

        self._validate_timestep()

        self.tick = 0
        self.last_dir = desired_directions(
            self.pos, self.target_exit, scenario, np.zeros((self.n, 2))
        ) if self.n else np.zeros((0, 2))

        self.window = model.window if model is not None else config.qualify.window
        self.ring = np.zeros((self.n, self.window, N_FEATURES))
        self.fill = np.zeros(self.n, dtype=int)

        self.controller = HybridController(
            mode=config.mode,
            policy=config.escalation,
            detector_config=config.detector,
            seed=config.seed,
            model_loaded=model is not None,
            n_walls=len(self.walls),
        )
        self.cost = CostCounters()
        self.ledger = ExposureLedger(
            self.n,
            config.dt,
            tiers=tuple(config.injury.tiers),
            extra_thresholds=(config.injury.at_risk_force, config.injury.critical_force),
        )
        self.density = DensityHistory(dt=config.dt, cell_area=config.cell_size**2)
        self.transitions: list[Transition] = []
        self.grid = LocaleGrid(cell_size=config.cell_size)
        self._fall_ticks = max(1, int(round(config.injury.critical_sustain / config.dt)))
        self._pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None

    # -- validation ------------------------------------------------------

    def _validate_timestep(self) -> None:
        cfg = self.config
        if self.n:
            r_min = float(self.radius.min())
            r_max = float(self.radius.max())
        else:
            r_min = r_max = cfg.agents.radius if np.isscalar(cfg.agents.radius) else 0.25
        max_disp = cfg.speed_cap * cfg.dt
        bound = min(r_min, cfg.cell_size / 2.0)
        if max_disp >= bound:
            raise ParseError(
                f"dt {cfg.dt} allows {max_disp:.3f} m per tick, at or over the "
                f"tunnelling bound min(radius, cell_size/2) = {bound:.3f} m"
            )
        if cfg.cell_size < 2.0 * r_max:
            raise ParseError(
                f"cell_size {cfg.cell_size} must be at least one body diameter "
                f"({2 * r_max:.2f} m) for locale-halo contact coverage"
            )
        if cfg.movement.neighbor_cutoff < 2.0 * r_max:
            raise ParseError(
                f"neighbor_cutoff {cfg.movement.neighbor_cutoff} below one body "
                f"diameter ({2 * r_max:.2f} m)"
            )

    # -- public views ----------------------------------------------------

    @property
    def time(self) -> float:
        return self.tick * self.config.dt

    @property
    def active_ids(self) -> np.ndarray:
        return np.nonzero(np.isnan(self.evacuated_at))[0]

    @property
    def agents(self) -> list[AgentState]:
        out = []
        for i in range(self.n):
            ev = self.evacuated_at[i]
            out.append(
                AgentState(
                    id=i,
                    position=self.pos[i].copy(),
                    velocity=self.vel[i].copy(),
                    mass=float(self.mass[i]),
                    radius=float(self.radius[i]),
                    desired_speed=float(self.v0[i]),
                    perceived_threat=float(self.threat[i]),
                    competitiveness=float(self.comp[i]),
                    target_exit=int(self.target_exit[i]),
                    evacuated_at=None if np.isnan(ev) else float(ev),
                )
            )
        return out

    @property
    def state(self) -> SimulationState:
        return SimulationState(
            time=self.time,
            tick=self.tick,
            agents=self.agents,
            rng_seed=self.config.seed,
            locales=self.grid,
            analyses=self.controller.analyses,
            cost_counters=self.cost,
        )

    # -- tick loop -------------------------------------------------------

    def step(self) -> None:
        """Advance the world by one tick."""
        cfg = self.config
        t = self.tick
        active = self.active_ids
        grid = partition_locales(self.pos, active, cfg.cell_size, generation=t)
        self.grid = grid
        if grid.population != len(active):
            raise NumericError(
                f"locale coverage broken: {grid.population} placed of {len(active)} active",
                tick=t,
            )

        cell_area = cfg.cell_size**2
        densities: dict[LocaleId, float] = {}
        loc_density = np.zeros(self.n)
        mean_mass = np.ones(self.n)
        agent_cell = np.zeros((self.n, 2), dtype=int)
        for loc in grid.sorted_locales():
            ids = grid.members(loc)
            d = len(ids) / cell_area
            densities[loc] = d
            loc_density[ids] = d
            mean_mass[ids] = self.mass[ids].mean()
            agent_cell[ids] = loc
        self.density.record(t, densities)

        if t % cfg.log_interval == 0:
            self._log_trajectory(t, active, agent_cell)

        dirs = desired_directions(self.pos, self.target_exit, self.scenario, self.last_dir)
        self.last_dir = dirs

        speed_ratio = np.zeros(self.n)
        alignment = np.zeros(self.n)
        if len(active):
            rows = compute_feature_rows(
                self.vel[active],
                dirs[active],
                self.v0[active],
                self.radius[active],
                self.mass[active],
                self.threat[active],
                self.comp[active],
                loc_density[active],
                mean_mass[active],
                cfg.detector.v_eps,
            )
            self.ring[active, t % self.window, :] = rows
            self.fill[active] += 1
            speed_ratio[active] = rows[:, 0]
            alignment[active] = rows[:, 1]
            if cfg.mode == "full-force":
                self.recorder.features(t, active, rows)

        window_ready: dict[LocaleId, np.ndarray] = {}
        if self.model is not None and cfg.mode != "implicit":
            for loc in grid.sorted_locales():
                if self.controller.level_of(loc) >= L2:
                    ids = grid.members(loc)
                    window_ready[loc] = ids[self.fill[ids] >= self.window]
        plan = self.controller.plan_tick(grid, window_ready)

        win_order = np.arange(t + 1, t + 1 + self.window) % self.window

        def analyse(item):
            verdict = None
            outcome = None
            if item.run_detector:
                det = self.controller.analyses[item.locale].detector
                verdict = det.update(item.members, self.vel, speed_ratio, alignment)
            if len(item.classify):
                vectors = self.ring[item.classify][:, win_order, :].reshape(len(item.classify), -1)
                outcome = qualify_locale(
                    self.model,
                    vectors,
                    cfg.qualify.p_crit,
                    cfg.qualify.quorum,
                    locale=item.locale,
                )
            return verdict, outcome

        if self._pool is not None:
            results = list(self._pool.map(analyse, plan.items))
        else:
            results = [analyse(item) for item in plan.items]

        verdicts: list[TransitionVerdict] = []
        for item, (verdict, _) in zip(plan.items, results):
            if item.run_detector:
                self.cost.add("detector_updates", 1, item.locale)
            if verdict is not None:
                self.cost.add("mi_evaluations", 1, item.locale)
                verdicts.append(verdict)
            if len(item.classify):
                self.cost.add("classifier_forward_passes", len(item.classify), item.locale)
        if verdicts:
            self.recorder.verdicts(t, verdicts)

        contact_totals, summaries, contacts, resolved = self._run_contacts(plan, agent_cell)

        if cfg.mode != "implicit":
            self.ledger.accumulate(t, contact_totals, active)
            hot = active[contact_totals[active] > 0]
            if len(hot):
                self.recorder.exposure(t, hot, contact_totals[hot], self.ledger.peak[hot])
            crushed = self.ledger.sustained_ticks(cfg.injury.critical_force) >= self._fall_ticks
            newly_fallen = np.nonzero(crushed & ~self.fallen)[0]
            if len(newly_fallen):
                self.fallen[newly_fallen] = True
                self.vel[newly_fallen] = 0.0

        if cfg.mode == "hybrid":
            for item, (verdict, outcome) in zip(plan.items, results):
                analysis = self.controller.analyses[item.locale]
                event = advance(
                    analysis, verdict, outcome, summaries.get(item.locale), cfg.escalation, tick=t
                )
                if event is not None:
                    self.transitions.append(event)
                    self.recorder.transition(event)
        else:
            for item, (verdict, outcome) in zip(plan.items, results):
                analysis = self.controller.analyses[item.locale]
                if verdict is not None:
                    analysis.last_verdict = verdict
                if outcome is not None:
                    analysis.last_qualify = outcome
                analysis.dwell += 1

        if self.on_tick is not None:
            self.on_tick(self, plan, verdicts, contacts, resolved)

        v0_eff = effective_desired_speed(self.v0, self.threat, self.comp, cfg.speed_cap)
        forces, dist = crowd_forces(
            self.pos,
            self.vel,
            self.mass,
            self.radius,
            v0_eff,
            dirs,
            self.walls,
            cfg.movement,
            active,
            seed=cfg.seed,
            tick=t,
        )
        bad = active[~np.isfinite(forces[active]).all(axis=1)] if len(active) else np.empty(0, int)
        if len(bad):
            raise NumericError(
                "non-finite movement force", tick=t, agent_ids=[int(b) for b in bad]
            )

        mobile = active[~self.fallen[active]]
        new_pos, new_vel = integrate_arrays(
            self.pos, self.vel, self.mass, forces, cfg.dt, cfg.speed_cap, mobile
        )
        bad = active[~np.isfinite(new_pos[active]).all(axis=1)] if len(active) else np.empty(0, int)
        if len(bad):
            raise NumericError("non-finite position", tick=t, agent_ids=[int(b) for b in bad])

        exited = self._exit_crossings(self.pos, new_pos, mobile)
        if len(exited):
            out_time = (t + 1) * cfg.dt
            self.evacuated_at[exited] = out_time
            new_vel[exited] = 0.0
            self.recorder.exits(t + 1, out_time, exited)

        self.threat = relax_threat(
            self.threat, dist, active, cfg.movement.neighbor_cutoff, cfg.dt, cfg.movement.tau_threat
        )
        self.pos, self.vel = new_pos, new_vel
        self.tick = t + 1

    def _run_contacts(self, plan, agent_cell):
        """Execute the planned contact checks; returns per-agent normal totals,
        per-L3-locale summaries, and the raw contact list."""
        cfg = self.config
        checks = plan.checks
        contact_totals = np.zeros(self.n)
        summaries: dict[LocaleId, QuantifySummary] = {}
        contacts = []
        resolved = None
        l3_items = [item for item in plan.items if item.quantify]
        if len(checks.agents):
            contacts = find_contacts(
                self.pos, self.vel, self.radius, checks.pairs, checks.agents, self.walls
            )
            resolved = resolve_forces(contacts, self.n, len(self.walls), cfg.contact)
            contact_totals = resolved.normal_total
            self.cost.add("force_pair_evaluations", len(checks.pairs))
            if len(checks.pairs):
                owners, counts = np.unique(checks.pair_owner, axis=0, return_counts=True)
                for (i, j), c in zip(owners, counts):
                    bucket = self.cost.per_locale.setdefault((int(i), int(j)), {})
                    bucket["force_pair_evaluations"] = (
                        bucket.get("force_pair_evaluations", 0) + int(c)
                    )
            n_walls = len(self.walls)
            self.cost.add("force_pair_evaluations", len(checks.agents) * n_walls)
            if n_walls:
                owners, counts = np.unique(checks.agent_owner, axis=0, return_counts=True)
                for (i, j), c in zip(owners, counts):
                    bucket = self.cost.per_locale.setdefault((int(i), int(j)), {})
                    bucket["force_pair_evaluations"] = (
                        bucket.get("force_pair_evaluations", 0) + int(c) * n_walls
                    )
            l3_set = {item.locale for item in l3_items}
            owned_counts: dict[LocaleId, int] = {}
            owned_peak: dict[LocaleId, float] = {}
            for c in contacts:
                if c.kind == "agent-agent":
                    cell_a = (int(agent_cell[c.a, 0]), int(agent_cell[c.a, 1]))
                    owner = cell_a if cell_a in l3_set else (
                        int(agent_cell[c.b, 0]),
                        int(agent_cell[c.b, 1]),
                    )
                else:
                    cell_a = (int(agent_cell[c.a, 0]), int(agent_cell[c.a, 1]))
                    owner = cell_a
                if owner not in l3_set:
                    continue
                owned_counts[owner] = owned_counts.get(owner, 0) + 1
                fn = cfg.contact.body_stiffness * c.penetration
                if fn > owned_peak.get(owner, 0.0):
                    owned_peak[owner] = fn
        for item in l3_items:
            members = item.members
            member_peak = float(contact_totals[members].max()) if len(members) else 0.0
            summaries[item.locale] = QuantifySummary(
                locale=item.locale,
                peak_contact_force=owned_peak.get(item.locale, 0.0) if len(checks.agents) else 0.0,
                contact_count=owned_counts.get(item.locale, 0) if len(checks.agents) else 0,
                member_peak=member_peak,
            )
        return contact_totals, summaries, contacts, resolved

    def _exit_crossings(self, old_pos, new_pos, mobile: np.ndarray) -> np.ndarray:
        if len(mobile) == 0:
            return np.empty(0, dtype=int)
        p0 = old_pos[mobile]
        p1 = new_pos[mobile]
        crossed = np.zeros(len(mobile), dtype=bool)
        for e in self.scenario.exits:
            a, b = e.segment[0], e.segment[1]
            ab = b - a
            d1 = ab[0] * (p0[:, 1] - a[1]) - ab[1] * (p0[:, 0] - a[0])
            d2 = ab[0] * (p1[:, 1] - a[1]) - ab[1] * (p1[:, 0] - a[0])
            seg = p1 - p0
            d3 = seg[:, 0] * (a[1] - p0[:, 1]) - seg[:, 1] * (a[0] - p0[:, 0])
            d4 = seg[:, 0] * (b[1] - p0[:, 1]) - seg[:, 1] * (b[0] - p0[:, 0])
            crossed |= (d1 * d2 <= 0) & (d3 * d4 <= 0) & ((d1 != 0) | (d2 != 0))
        return mobile[crossed]

    def _log_trajectory(self, t: int, active: np.ndarray, agent_cell: np.ndarray) -> None:
        if len(active) == 0:
            return
        levels = np.array(
            [self.controller.level_of((int(i), int(j))) for i, j in agent_cell[active]], dtype=int
        )
        self.recorder.trajectory(
            t, t * self.config.dt, active, self.pos, self.vel, agent_cell, levels
        )

    # -- whole-run driver --------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.config
        max_ticks = int(round(cfg.max_time / cfg.dt))
        try:
            while self.tick < max_ticks and len(self.active_ids) > 0:
                self.step()
            completed = len(self.active_ids) == 0
            if not completed:
                # terminal snapshot for timed-out runs
                active = self.active_ids
                agent_cell = np.floor(self.pos / cfg.cell_size).astype(int)
                self._log_trajectory(self.tick, active, agent_cell)
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None
        self.density.complete = True
        exit_times = {
            int(i): float(self.evacuated_at[i])
            for i in range(self.n)
            if not np.isnan(self.evacuated_at[i])
        }
        egress = egress_times(exit_times, self.n, self.scenario.aset)
        exposure = (
            [self.ledger.record(i) for i in range(self.n)] if cfg.mode != "implicit" else []
        )
        return RunResult(
            scenario=self.scenario,
            config=cfg,
            population=self.n,
            ticks=self.tick,
            completed=completed,
            timed_out=not completed,
            exit_times=exit_times,
            egress=egress,
            density=self.density,
            transitions=self.transitions,
            cost=self.cost,
            exposure=exposure,
            fallen=[int(i) for i in np.nonzero(self.fallen)[0]],
        )


def run_simulation(
    scenario: Scenario,
    config: RunConfig,
    model: Classifier | None = None,
    recorder=None,
    on_tick=None,
) -> RunResult:
    """Build and drive a Simulation to completion or timeout."""
    sim = Simulation(scenario, config, model=model, recorder=recorder, on_tick=on_tick)
    return sim.run()
