"""Per-tick driving and social forces, exit choice, and kinematic integration.

The driving term relaxes an agent toward its desired velocity in time tau;
psychological repulsion decays exponentially with surface separation. Contact
(body/friction) forces are handled by the contact engine, not here.
"""

from __future__ import annotations

import numpy as np

from .agents import AgentState
from .config import MovementParams
from .errors import DegenerateError, NumericError
from .geometry import closest_point_on_segment, hash_direction, unit
from .scenario import Scenario

COINCIDENT_EPS = 1e-9  # m; below this, centres count as coincident


def choose_exit(agent: AgentState, scenario: Scenario) -> int:
    """Most attractive exit: argmax of familiarity / (1 + distance), lowest index on ties."""
    best, best_score = 0, -np.inf
    for i, e in enumerate(scenario.exits):
        cp = closest_point_on_segment(agent.position[None, :], e.segment[0], e.segment[1])[0]
        dist = float(np.hypot(*(agent.position - cp)))
        score = e.familiarity / (1.0 + dist)
        if score > best_score + 1e-12:
            best, best_score = i, score
    return best


def desired_direction(
    agent: AgentState, scenario: Scenario, previous: np.ndarray | None = None
) -> np.ndarray:
    """Unit vector toward the nearest point of the agent's target exit segment."""
    e = scenario.exits[agent.target_exit]
    cp = closest_point_on_segment(agent.position[None, :], e.segment[0], e.segment[1])[0]
    d = cp - agent.position
    n = float(np.hypot(*d))
    if n < COINCIDENT_EPS:
        if previous is not None:
            return np.asarray(previous, dtype=float)
        raise DegenerateError(f"agent {agent.id} lies exactly on its exit segment")
    return d / n


def effective_desired_speed(v0, threat, competitiveness, speed_cap: float):
    """Competitive speed-up: v0 * (1 + competitiveness * threat), capped."""
    return np.minimum(v0 * (1.0 + competitiveness * threat), speed_cap)


def desired_directions(positions: np.ndarray, target_exit: np.ndarray, scenario: Scenario,
                       previous: np.ndarray) -> np.ndarray:
    """Vectorized desired_direction for all agents; falls back to previous on degeneracy."""
    dirs = np.array(previous, dtype=float, copy=True)
    for ei, e in enumerate(scenario.exits):
        sel = np.nonzero(target_exit == ei)[0]
        if len(sel) == 0:
            continue
        cp = closest_point_on_segment(positions[sel], e.segment[0], e.segment[1])
        d = cp - positions[sel]
        n = np.hypot(d[:, 0], d[:, 1])
        ok = n > COINCIDENT_EPS
        dirs[sel[ok]] = d[ok] / n[ok, None]
    return dirs


def crowd_forces(
    positions: np.ndarray,
    velocities: np.ndarray,
    mass: np.ndarray,
    radius: np.ndarray,
    v0_eff: np.ndarray,
    dirs: np.ndarray,
    walls: np.ndarray,
    params: MovementParams,
    active: np.ndarray,
    seed: int = 0,
    tick: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Driving + agent + wall psychological repulsion for every active agent.

    Returns (forces (n, 2) in newtons, pairwise distance matrix over active
    agents). Inactive rows are zero. The distance matrix is reused by the
    threat-propagation update.
    """
    n = len(positions)
    forces = np.zeros((n, 2))
    idx = np.asarray(active, dtype=int)
    m = len(idx)
    if m == 0:
        return forces, np.zeros((0, 0))

    pos = positions[idx]
    vel = velocities[idx]

    # Driving term m (v0 e - v) / tau.
    forces[idx] = (mass[idx, None] * (v0_eff[idx, None] * dirs[idx] - vel)) / params.tau

    # Agent-agent psychological repulsion A exp((r_ij - d_ij) / B) n_ij.
    diff = pos[:, None, :] - pos[None, :, :]  # points from j to i
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    rsum = radius[idx][:, None] + radius[idx][None, :]
    near = dist < params.neighbor_cutoff
    coincident = dist < COINCIDENT_EPS
    safe = np.where(dist > COINCIDENT_EPS, dist, 1.0)
    mag = np.where(near & ~coincident, params.repulsion_strength * np.exp((rsum - dist) / params.repulsion_range), 0.0)
    rep = (mag / safe)[..., None] * diff
    forces[idx] += rep.sum(axis=1)

    if coincident.any():
        ii, jj = np.nonzero(np.triu(coincident, k=1))
        for a, b in zip(ii, jj):
            lo, hi = sorted((int(idx[a]), int(idx[b])))
            d_hat = hash_direction(seed, tick, lo, hi)
            forces[hi] += params.repulsion_strength * d_hat
            forces[lo] -= params.repulsion_strength * d_hat

    # Wall repulsion, same exponential form, summed over every segment.
    for w, seg in enumerate(walls):
        cp = closest_point_on_segment(pos, seg[0], seg[1])
        d = pos - cp
        dw = np.hypot(d[:, 0], d[:, 1])
        degenerate = dw < COINCIDENT_EPS
        if degenerate.any():
            for a in np.nonzero(degenerate)[0]:
                d[a] = hash_direction(seed, tick, int(idx[a]), n + w)
                dw[a] = 1.0
        mag_w = params.wall_strength * np.exp((radius[idx] - dw) / params.wall_range)
        forces[idx] += (mag_w / dw)[:, None] * d

    return forces, dist


def social_force(
    agent: AgentState,
    neighbors: list[AgentState],
    walls: np.ndarray,
    params: MovementParams,
    scenario: Scenario | None = None,
    direction: np.ndarray | None = None,
    speed_cap: float = np.inf,
    seed: int = 0,
    tick: int = 0,
) -> np.ndarray:
    """Net driving + psychological force on one agent, in newtons.

    The desired direction is taken from ``direction`` or derived from the
    agent's target exit when a scenario is given.
    """
    if direction is None:
        direction = desired_direction(agent, scenario) if scenario is not None else np.zeros(2)
    group = [agent] + list(neighbors)
    positions = np.array([a.position for a in group])
    velocities = np.array([a.velocity for a in group])
    mass = np.array([a.mass for a in group])
    radius = np.array([a.radius for a in group])
    v0_eff = np.array(
        [
            effective_desired_speed(a.desired_speed, a.perceived_threat, a.competitiveness, speed_cap)
            for a in group
        ]
    )
    dirs = np.zeros((len(group), 2))
    dirs[0] = direction
    walls = np.asarray(walls, dtype=float).reshape(-1, 2, 2) if len(walls) else np.zeros((0, 2, 2))
    forces, _ = crowd_forces(
        positions, velocities, mass, radius, v0_eff, dirs, walls, params,
        active=np.arange(len(group)), seed=seed, tick=tick,
    )
    if not np.all(np.isfinite(forces[0])):
        raise NumericError(f"non-finite social force on agent {agent.id}", tick=tick, agent_ids=[agent.id])
    return forces[0]


def integrate_arrays(
    positions: np.ndarray,
    velocities: np.ndarray,
    mass: np.ndarray,
    forces: np.ndarray,
    dt: float,
    speed_cap: float,
    idx: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Semi-implicit Euler: v' = clamp(v + F/m dt), x' = x + v' dt, for rows idx."""
    pos = positions.copy()
    vel = velocities.copy()
    v_new = vel[idx] + forces[idx] * (dt / mass[idx, None])
    speed = np.hypot(v_new[:, 0], v_new[:, 1])
    over = speed > speed_cap
    if over.any():
        v_new[over] *= (speed_cap / speed[over])[:, None]
    vel[idx] = v_new
    pos[idx] = pos[idx] + v_new * dt
    return pos, vel


def integrate(agent: AgentState, net_force: np.ndarray, dt: float, speed_cap: float) -> AgentState:
    """Advance one agent one tick under net_force; modifies a copy."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    net_force = np.asarray(net_force, dtype=float)
    if not np.all(np.isfinite(net_force)):
        raise NumericError(f"non-finite force on agent {agent.id}", agent_ids=[agent.id])
    out = agent.copy()
    pos, vel = integrate_arrays(
        agent.position[None, :], agent.velocity[None, :], np.array([agent.mass]),
        net_force[None, :], dt, speed_cap, np.array([0]),
    )
    out.position, out.velocity = pos[0], vel[0]
    return out


def relax_threat(
    threat: np.ndarray,
    dist: np.ndarray,
    active: np.ndarray,
    cutoff: float,
    dt: float,
    tau_threat: float,
) -> np.ndarray:
    """Relax each agent's perceived threat toward its neighbourhood maximum.

    Models slow information propagation: agents learn of bad conditions from
    those around them at rate 1/tau_threat. Agents with no neighbours within
    the cutoff are unchanged.
    """
    out = threat.copy()
    idx = np.asarray(active, dtype=int)
    if len(idx) == 0:
        return out
    near = dist < cutoff  # diagonal is inf, so self is excluded
    t_act = threat[idx]
    neigh_max = np.where(near, t_act[None, :], -np.inf).max(axis=1)
    has_neighbor = np.isfinite(neigh_max)
    rate = min(1.0, dt / tau_threat)
    updated = t_act + rate * (neigh_max - t_act)
    out[idx] = np.clip(np.where(has_neighbor, updated, t_act), 0.0, 1.0)
    return out
