"""Stage one: spot locales whose flow has gone disordered.

Works entirely on cheap per-agent kinematics. A locale is flagged when its
velocity order parameter drops below threshold while the mutual information
between dimensionless flow features rises, or immediately when everyone in
the sampled subset has stalled.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentState
from .config import DetectorConfig
from .errors import InsufficientData
from .geometry import stable_hash_u64
from .grid import LocaleId

ORDERED = "Ordered"
DISORDERED = "Disordered"

FEATURE_NAMES = (
    "speed_ratio",
    "alignment",
    "density_star",
    "mass_ratio",
    "threat",
    "competitiveness",
)


def order_parameter(velocities: np.ndarray, v_eps: float = 0.05) -> tuple[float, bool]:
    """Vicsek order parameter of a velocity set and a stagnation flag.

    phi = |sum of unit velocities of moving agents| / group size, in [0, 1].
    Agents slower than v_eps contribute nothing; if nobody moves the group is
    stagnant and phi is 0.
    """
    velocities = np.asarray(velocities, dtype=float)
    if velocities.ndim != 2 or len(velocities) == 0:
        raise InsufficientData("order parameter needs at least one velocity")
    speed = np.hypot(velocities[:, 0], velocities[:, 1])
    moving = speed > v_eps
    if not moving.any():
        return 0.0, True
    unit_sum = (velocities[moving] / speed[moving, None]).sum(axis=0)
    return float(np.hypot(*unit_sum) / len(velocities)), False


def mutual_information(xs: np.ndarray, ys: np.ndarray, bins: int = 8) -> float:
    """Plug-in mutual information of two series, in nats.

    Equal-width binning over the observed range of each series. Constant
    series carry no information and give exactly 0.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    if len(xs) < 2:
        raise InsufficientData("mutual information needs at least two samples")
    joint, _, _ = np.histogram2d(xs, ys, bins=bins)
    p = joint / joint.sum()
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    nz = p > 0
    outer = px[:, None] * py[None, :]
    mi = float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))
    return max(0.0, mi)


@dataclass
class PiFeatures:
    """Dimensionless per-agent flow descriptors."""

    speed_ratio: float
    alignment: float
    density_star: float
    mass_ratio: float
    threat: float
    competitiveness: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.speed_ratio,
                self.alignment,
                self.density_star,
                self.mass_ratio,
                self.threat,
                self.competitiveness,
            ]
        )


def pi_features(
    agent: AgentState,
    locale_density: float,
    mean_mass: float,
    direction: np.ndarray,
    v_eps: float = 0.05,
) -> PiFeatures:
    """Dimensionless features for one agent.

    density_star scales crowd density by the agent's own body scale (2r)^2,
    so the value 1.0 marks the point where bodies of that size tile the
    locale completely.
    """
    speed = float(np.hypot(*agent.velocity))
    if speed > v_eps:
        alignment = float(np.dot(agent.velocity, direction) / speed)
    else:
        alignment = 0.0
    return PiFeatures(
        speed_ratio=speed / agent.desired_speed,
        alignment=alignment,
        density_star=locale_density * (2.0 * agent.radius) ** 2,
        mass_ratio=agent.mass / mean_mass,
        threat=agent.perceived_threat,
        competitiveness=agent.competitiveness,
    )


def compute_feature_rows(
    velocities: np.ndarray,
    dirs: np.ndarray,
    v0: np.ndarray,
    radius: np.ndarray,
    mass: np.ndarray,
    threat: np.ndarray,
    competitiveness: np.ndarray,
    locale_density: np.ndarray,
    mean_mass: np.ndarray,
    v_eps: float,
) -> np.ndarray:
    """Vectorized pi features plus locale density, one row per agent, (n, 7)."""
    speed = np.hypot(velocities[:, 0], velocities[:, 1])
    moving = speed > v_eps
    dots = (velocities * dirs).sum(axis=1)
    alignment = np.where(moving, dots / np.where(moving, speed, 1.0), 0.0)
    return np.column_stack(
        [
            speed / v0,
            alignment,
            locale_density * (2.0 * radius) ** 2,
            mass / mean_mass,
            threat,
            competitiveness,
            locale_density,
        ]
    )


def sample_subset(members: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic k-subset of a locale's members.

    The draw is keyed by the seed and the membership itself, so the same
    locale contents always yield the same subset regardless of tick or
    call order. Returns sorted ids.
    """
    members = np.sort(np.asarray(members, dtype=int))
    if len(members) <= k:
        return members
    key = stable_hash_u64(seed, len(members), *members.tolist())
    rng = np.random.default_rng(key)
    pick = rng.choice(len(members), size=k, replace=False)
    return np.sort(members[pick])


@dataclass
class TransitionVerdict:
    """Detector output for one locale at one tick."""

    locale: LocaleId
    state: str  # ORDERED or DISORDERED
    confidence: float
    phi_mean: float
    mi_value: float
    stagnant: bool = False


@dataclass
class OrderSignal:
    """Rolling order-parameter and feature history for one locale."""

    locale: LocaleId
    window: int
    phi: deque = field(default_factory=deque)
    stagnant: deque = field(default_factory=deque)
    speed_samples: deque = field(default_factory=deque)
    align_samples: deque = field(default_factory=deque)
    state: str = ORDERED
    revert_streak: int = 0

    def __post_init__(self):
        for name in ("phi", "stagnant", "speed_samples", "align_samples"):
            d = getattr(self, name)
            setattr(self, name, deque(d, maxlen=self.window))

    @property
    def warm(self) -> bool:
        return len(self.phi) >= max(1, self.window // 2)

    def push(self, phi: float, stagnant: bool, speeds: np.ndarray, aligns: np.ndarray,
             phi_crit: float, hysteresis: float) -> None:
        self.phi.append(phi)
        self.stagnant.append(stagnant)
        self.speed_samples.append(np.asarray(speeds, dtype=float))
        self.align_samples.append(np.asarray(aligns, dtype=float))
        if phi > phi_crit + hysteresis:
            self.revert_streak += 1
        else:
            self.revert_streak = 0


def detect_transition(signal: OrderSignal, thresholds: DetectorConfig) -> TransitionVerdict:
    """Classify one locale as Ordered or Disordered from its rolling signal.

    Disordered when mean phi is below phi_crit while the mutual information
    between speed ratio and alignment exceeds mi_crit, or unconditionally
    when the current tick is stagnant. Once disordered, reverting requires
    phi to stay above phi_crit + hysteresis for a full window.
    """
    if not signal.warm:
        raise InsufficientData(
            f"locale {signal.locale}: {len(signal.phi)} ticks of history, "
            f"need {max(1, signal.window // 2)}"
        )
    phi_mean = float(np.mean(signal.phi))
    pooled_speed = np.concatenate([s for s in signal.speed_samples]) if signal.speed_samples else np.zeros(0)
    pooled_align = np.concatenate([s for s in signal.align_samples]) if signal.align_samples else np.zeros(0)
    if len(pooled_speed) >= 2:
        mi = mutual_information(pooled_speed, pooled_align, bins=thresholds.bins)
    else:
        mi = 0.0

    stagnant_now = bool(signal.stagnant[-1])
    if stagnant_now:
        state = DISORDERED
    elif signal.state == DISORDERED:
        state = ORDERED if signal.revert_streak >= signal.window else DISORDERED
    else:
        state = DISORDERED if (phi_mean < thresholds.phi_crit and mi > thresholds.mi_crit) else ORDERED

    if state == DISORDERED:
        confidence = float(np.clip((thresholds.phi_crit - phi_mean) / thresholds.phi_crit, 0.0, 1.0))
        if stagnant_now:
            confidence = max(confidence, float(np.mean(signal.stagnant)))
    else:
        confidence = float(
            np.clip((phi_mean - thresholds.phi_crit) / (1.0 - thresholds.phi_crit), 0.0, 1.0)
        )
    return TransitionVerdict(
        locale=signal.locale,
        state=state,
        confidence=confidence,
        phi_mean=phi_mean,
        mi_value=mi,
        stagnant=stagnant_now,
    )


class LocaleDetector:
    """Stateful order/disorder detector for a single locale.

    Owns the rolling signal, the sampled member subset, and the hysteresis
    state. One update per tick; returns a verdict once warmed up.
    """

    def __init__(self, locale: LocaleId, config: DetectorConfig, seed: int):
        self.locale = locale
        self.config = config
        self.seed = seed
        self.signal = OrderSignal(locale=locale, window=config.window)
        self.subset: np.ndarray = np.zeros(0, dtype=int)
        self._sampled_from: set[int] = set()

    def _refresh_subset(self, members: np.ndarray) -> None:
        member_set = set(int(a) for a in members)
        want = min(self.config.subset_k, len(members))
        if self._sampled_from:
            churn = len(member_set ^ self._sampled_from) / max(len(member_set), len(self._sampled_from))
        else:
            churn = 1.0
        if churn > 0.5:
            self.subset = sample_subset(members, self.config.subset_k, self.seed)
            self._sampled_from = member_set
            return
        kept = np.array(sorted(a for a in self.subset if int(a) in member_set), dtype=int)
        if len(kept) > want:
            self.subset = kept[:want]
        elif len(kept) < want:
            pool = np.array(sorted(member_set - set(kept.tolist())), dtype=int)
            extra = sample_subset(pool, want - len(kept), self.seed)
            self.subset = np.sort(np.concatenate([kept, extra]))
        else:
            self.subset = kept

    def update(
        self,
        members: np.ndarray,
        velocities: np.ndarray,
        speed_ratio: np.ndarray,
        alignment: np.ndarray,
    ) -> TransitionVerdict | None:
        """Ingest one tick of locale data; returns None until warmed up.

        velocities, speed_ratio and alignment are full-population arrays
        indexed by agent id.
        """
        self._refresh_subset(np.asarray(members, dtype=int))
        sub = self.subset
        phi, stagnant = order_parameter(velocities[sub], self.config.v_eps)
        self.signal.push(
            phi, stagnant, speed_ratio[sub], alignment[sub],
            self.config.phi_crit, self.config.hysteresis,
        )
        if not self.signal.warm:
            return None
        verdict = detect_transition(self.signal, self.config)
        self.signal.state = verdict.state
        return verdict
