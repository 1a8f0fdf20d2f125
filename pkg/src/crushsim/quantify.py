"""Stage three: ground-truth contact forces and compression exposure.

Overlapping bodies get a linear penalty force along the contact normal plus
a sliding-friction term proportional to overlap and tangential speed. The
resolution order is canonical (sorted contacts, fixed accumulation order) so
identical states give bitwise identical forces regardless of which locales
requested the work or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ContactForceParams, InjuryConfig
from .geometry import closest_point_on_segment, perp

AGENT_CONTACT = "agent-agent"
WALL_CONTACT = "agent-wall"


@dataclass
class Contact:
    """One overlapping pair, canonically oriented.

    For agent-agent contacts `a < b` and the normal points from a to b.
    For wall contacts `a` is the agent, `b` the wall segment index, and the
    normal points from the wall into the agent.
    """

    kind: str
    a: int
    b: int
    penetration: float  # m, > 0
    normal: np.ndarray  # unit vector
    tangential_speed: float  # m/s, relative slip along the contact tangent

    def sort_key(self) -> tuple:
        return (self.kind, self.a, self.b)


def find_contacts(
    positions: np.ndarray,
    velocities: np.ndarray,
    radii: np.ndarray,
    pairs: np.ndarray,
    wall_ids: np.ndarray,
    walls: np.ndarray,
) -> list[Contact]:
    """Evaluate candidate agent pairs and agent-wall pairs for overlap.

    `pairs` is an (m, 2) array of agent id pairs with a < b; `wall_ids` lists
    agents to test against every wall segment. Output is sorted canonically.
    """
    contacts: list[Contact] = []
    if len(pairs):
        pa = positions[pairs[:, 0]]
        pb = positions[pairs[:, 1]]
        diff = pb - pa
        dist = np.hypot(diff[:, 0], diff[:, 1])
        rsum = radii[pairs[:, 0]] + radii[pairs[:, 1]]
        hit = np.nonzero(dist < rsum)[0]
        for i in hit:
            d = float(dist[i])
            if d < 1e-12:
                # Coincident centres are separated by the psychological force
                # path before penalties matter; skip rather than divide by zero.
                continue
            normal = diff[i] / d
            tangent = perp(normal)
            a, b = int(pairs[i, 0]), int(pairs[i, 1])
            slip = float(np.dot(velocities[b] - velocities[a], tangent))
            contacts.append(
                Contact(
                    kind=AGENT_CONTACT,
                    a=a,
                    b=b,
                    penetration=float(rsum[i] - d),
                    normal=normal,
                    tangential_speed=slip,
                )
            )
    if len(wall_ids) and len(walls):
        pos = positions[wall_ids]
        for w, seg in enumerate(walls):
            cp = closest_point_on_segment(pos, seg[0], seg[1])
            d = pos - cp
            dist = np.hypot(d[:, 0], d[:, 1])
            hit = np.nonzero(dist < radii[wall_ids])[0]
            for i in hit:
                dd = float(dist[i])
                if dd < 1e-12:
                    continue
                normal = d[i] / dd
                tangent = perp(normal)
                agent = int(wall_ids[i])
                slip = float(np.dot(velocities[agent], tangent))
                contacts.append(
                    Contact(
                        kind=WALL_CONTACT,
                        a=agent,
                        b=w,
                        penetration=float(radii[agent] - dd),
                        normal=normal,
                        tangential_speed=slip,
                    )
                )
    contacts.sort(key=Contact.sort_key)
    return contacts


def contact_pairs(
    ids: np.ndarray,
    positions: np.ndarray,
    velocities: np.ndarray,
    radii: np.ndarray,
    walls: np.ndarray,
) -> list[Contact]:
    """All contacts among the given agents and between them and the walls."""
    ids = np.sort(np.asarray(ids, dtype=int))
    if len(ids) >= 2:
        ii, jj = np.triu_indices(len(ids), k=1)
        pairs = np.column_stack([ids[ii], ids[jj]])
    else:
        pairs = np.zeros((0, 2), dtype=int)
    return find_contacts(positions, velocities, radii, pairs, ids, walls)


@dataclass
class ContactForces:
    """Resolved per-agent contact forces for one tick."""

    force: np.ndarray  # (n, 2) net contact force
    normal_total: np.ndarray  # (n,) scalar sum of normal force magnitudes
    normal_magnitudes: list[float]  # per contact, same order as input list
    wall_reaction: np.ndarray  # (n_walls, 2) force exerted on each wall
    peak_normal: float  # largest single-contact normal force


def resolve_forces(
    contacts: list[Contact],
    n_agents: int,
    n_walls: int,
    params: ContactForceParams,
) -> ContactForces:
    """Turn a canonical contact list into per-agent forces.

    Accumulation walks the sorted list in a plain Python loop so the floating
    point sum order never depends on how the contacts were discovered.
    """
    force = np.zeros((n_agents, 2))
    normal_total = np.zeros(n_agents)
    wall_reaction = np.zeros((max(n_walls, 1), 2))
    magnitudes: list[float] = []
    peak = 0.0
    k = params.body_stiffness
    kappa = params.friction_coefficient
    for c in contacts:
        fn = k * c.penetration
        tangent = perp(c.normal)
        friction = -kappa * c.penetration * c.tangential_speed
        fvec = fn * c.normal + friction * tangent
        magnitudes.append(fn)
        if fn > peak:
            peak = fn
        if c.kind == AGENT_CONTACT:
            force[c.b] += fvec
            force[c.a] -= fvec
            normal_total[c.a] += fn
            normal_total[c.b] += fn
        else:
            force[c.a] += fvec
            normal_total[c.a] += fn
            wall_reaction[c.b] -= fvec
    return ContactForces(
        force=force,
        normal_total=normal_total,
        normal_magnitudes=magnitudes,
        wall_reaction=wall_reaction[:n_walls],
        peak_normal=peak,
    )


@dataclass
class ExposureRecord:
    """Per-agent compression history: peak, per-tier dose and streaks.

    Dose above a tier accumulates as integral of (force - tier) dt while the
    force holds at or above the tier. Streaks count consecutive ticks at or
    above each threshold; `max_streaks` keeps the longest run seen.
    """

    agent_id: int
    dt: float
    tiers: tuple[float, ...]
    thresholds: tuple[float, ...] = ()
    history: list[float] = field(default_factory=list)
    peak: float = 0.0
    integrals: dict[float, float] = field(default_factory=dict)
    streaks: dict[float, int] = field(default_factory=dict)
    max_streaks: dict[float, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.thresholds:
            self.thresholds = tuple(sorted(set(self.tiers)))
        for t in self.tiers:
            self.integrals.setdefault(t, 0.0)
        for t in self.thresholds:
            self.streaks.setdefault(t, 0)
            self.max_streaks.setdefault(t, 0)

    def sustained_seconds(self, threshold: float) -> float:
        """Longest run at or above threshold, in seconds."""
        return self.max_streaks.get(threshold, 0) * self.dt

    def current_sustained(self, threshold: float) -> float:
        return self.streaks.get(threshold, 0) * self.dt


def accumulate_exposure(record: ExposureRecord, normal_force: float, dt: float) -> ExposureRecord:
    """Fold one tick of total normal force into an exposure record."""
    f = float(normal_force)
    record.history.append(f)
    if f > record.peak:
        record.peak = f
    for tier in record.tiers:
        if f >= tier:
            record.integrals[tier] += (f - tier) * dt
    for thr in record.thresholds:
        if f >= thr:
            record.streaks[thr] += 1
            if record.streaks[thr] > record.max_streaks[thr]:
                record.max_streaks[thr] = record.streaks[thr]
        else:
            record.streaks[thr] = 0
    return record


def injury_report(records: list[ExposureRecord], config: InjuryConfig) -> dict:
    """Per-agent exposure summary, worst first, with the thresholds echoed."""
    rows = []
    for r in records:
        rows.append(
            {
                "agent_id": r.agent_id,
                "peak_force": r.peak,
                "integrals": {str(t): r.integrals[t] for t in r.tiers},
                "at_risk": r.sustained_seconds(config.at_risk_force) >= config.at_risk_sustain,
                "critical": r.sustained_seconds(config.critical_force) >= config.critical_sustain,
            }
        )
    rows.sort(key=lambda row: (-row["peak_force"], row["agent_id"]))
    return {
        "thresholds": {
            "tiers": list(config.tiers),
            "at_risk_force": config.at_risk_force,
            "at_risk_sustain": config.at_risk_sustain,
            "critical_force": config.critical_force,
            "critical_sustain": config.critical_sustain,
        },
        "agents": rows,
        "n_at_risk": sum(1 for row in rows if row["at_risk"]),
        "n_critical": sum(1 for row in rows if row["critical"]),
    }


@dataclass
class QuantifySummary:
    """Per-locale digest of one tick of contact resolution."""

    locale: tuple[int, int]
    peak_contact_force: float
    contact_count: int
    member_peak: float  # largest normal-force total on a member this tick
