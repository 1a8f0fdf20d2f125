"""Crowd-safety service metrics computed alongside any run, whatever the mode.

Space-per-person bands follow Fruin's level-of-service scale; the density
criterion flags runs where any locale spends a tenth of the run at or above
four persons per square metre; the egress verdict compares the slowest exit
time against the available time budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteRun
from .grid import LocaleId

# Fruin level-of-service thresholds for walkways, m^2 per person.
FRUIN_BANDS = (
    ("A", 3.24),
    ("B", 2.32),
    ("C", 1.39),
    ("D", 0.93),
    ("E", 0.46),
)

IMO_DENSITY = 4.0  # persons / m^2
IMO_FRACTION = 0.10

SAFE = "safe"
UNSAFE = "unsafe"
NOT_EVALUATED = "not-evaluated"


def fruin_level(density: float) -> tuple[str, float]:
    """Level-of-service letter and space per person for a local density.

    Zero density means unlimited space: level A. Level F is strictly below
    0.46 m^2 per person.
    """
    if density < 0:
        raise ValueError("density cannot be negative")
    if density == 0:
        return "A", float("inf")
    space = 1.0 / density
    for letter, floor in FRUIN_BANDS:
        if space >= floor:
            return letter, space
    return "F", space


@dataclass
class DensityHistory:
    """Per-locale density time series for one run."""

    dt: float
    cell_area: float
    total_ticks: int = 0
    complete: bool = False
    series: dict[LocaleId, list[tuple[int, float]]] = field(default_factory=dict)
    worst: list[tuple[int, float]] = field(default_factory=list)  # (tick, max density)

    def record(self, tick: int, densities: dict[LocaleId, float]) -> None:
        self.total_ticks += 1
        worst = 0.0
        for locale, d in densities.items():
            if d > 0:
                self.series.setdefault(locale, []).append((tick, d))
            if d > worst:
                worst = d
        self.worst.append((tick, worst))

    def fraction_at_or_above(self, locale: LocaleId, density: float) -> float:
        """Fraction of all ticks this locale held at least the given density."""
        if self.total_ticks == 0:
            return 0.0
        entries = self.series.get(locale, [])
        return sum(1 for _, d in entries if d >= density) / self.total_ticks


@dataclass
class ImoResult:
    passed: bool
    worst_fraction: float
    worst_locale: LocaleId | None
    threshold_density: float
    threshold_fraction: float
    per_locale: dict[LocaleId, float]


def imo_check(
    history: DensityHistory,
    density_threshold: float = IMO_DENSITY,
    fraction_threshold: float = IMO_FRACTION,
) -> ImoResult:
    """Fail when any locale spends too much of the run at crush density.

    The boundary counts: exactly the threshold density for exactly the
    threshold fraction of ticks is a failure.
    """
    if not history.complete:
        raise IncompleteRun("density criterion needs a completed run")
    fractions: dict[LocaleId, float] = {}
    worst_locale = None
    worst = 0.0
    for locale in sorted(history.series):
        frac = history.fraction_at_or_above(locale, density_threshold)
        if frac > 0:
            fractions[locale] = frac
        if frac > worst:
            worst, worst_locale = frac, locale
    return ImoResult(
        passed=worst < fraction_threshold,
        worst_fraction=worst,
        worst_locale=worst_locale,
        threshold_density=density_threshold,
        threshold_fraction=fraction_threshold,
        per_locale=fractions,
    )


@dataclass
class EgressTimes:
    """Exit-time roll-up: required time vs available time."""

    rset: float | None  # time of the last exit, s
    aset: float | None  # available budget from the scenario, s
    verdict: str
    exit_times: dict[int, float]
    evacuated: int
    population: int


def egress_times(exit_times: dict[int, float], population: int, aset: float | None) -> EgressTimes:
    """Required safe egress time and the safe/unsafe verdict.

    The required time is the slowest agent's exit time, defined only when
    everyone got out. Without a full evacuation or without a budget the
    verdict stays not-evaluated.
    """
    evacuated = len(exit_times)
    rset = max(exit_times.values()) if evacuated == population and population > 0 else None
    if rset is None or aset is None:
        verdict = NOT_EVALUATED
    else:
        verdict = SAFE if aset > rset else UNSAFE
    return EgressTimes(
        rset=rset,
        aset=aset,
        verdict=verdict,
        exit_times=dict(sorted(exit_times.items())),
        evacuated=evacuated,
        population=population,
    )


def fruin_timeline(history: DensityHistory) -> list[tuple[int, float, str]]:
    """(tick, worst density, Fruin level) per tick, from the worst-cell series."""
    out = []
    for tick, density in history.worst:
        letter, _ = fruin_level(density)
        out.append((tick, density, letter))
    return out


def worst_fruin(history: DensityHistory) -> tuple[str, float]:
    """Worst level-of-service letter reached and the density that caused it."""
    worst_density = max((d for _, d in history.worst), default=0.0)
    letter, _ = fruin_level(worst_density)
    return letter, worst_density


def summarize(history: DensityHistory, egress: EgressTimes) -> dict:
    """metrics.json payload: egress, density criterion, level-of-service."""
    letter, worst_density = worst_fruin(history)
    try:
        imo = imo_check(history)
        imo_doc = {
            "passed": imo.passed,
            "worst_fraction": imo.worst_fraction,
            "worst_locale": list(imo.worst_locale) if imo.worst_locale else None,
            "density_threshold": imo.threshold_density,
            "fraction_threshold": imo.threshold_fraction,
            "per_locale": {f"{i},{j}": v for (i, j), v in imo.per_locale.items()},
        }
    except IncompleteRun:
        imo_doc = {"passed": None, "reason": "run incomplete"}
    return {
        "schema": 1,
        "egress": {
            "rset": egress.rset,
            "aset": egress.aset,
            "verdict": egress.verdict,
            "evacuated": egress.evacuated,
            "population": egress.population,
        },
        "density_criterion": imo_doc,
        "fruin": {
            "worst_level": letter,
            "worst_density": worst_density,
        },
    }
