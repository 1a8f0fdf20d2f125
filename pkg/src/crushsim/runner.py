"""Whole-run drivers: archive-producing runs and the two-mode benchmark."""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

from .archive import ArchiveWriter, RunArchive
from .config import RunConfig
from .engine import RunResult, run_simulation
from .errors import CrushSimError, ModeError
from .qualify import Classifier, load_model
from .scenario import Scenario


def resolve_model(config: RunConfig, model_path=None) -> Classifier | None:
    """Load the window classifier named on the command line or in the config."""
    path = model_path or config.qualify.model
    if path is None:
        return None
    return load_model(path)


def run_to_archive(
    scenario: Scenario,
    config: RunConfig,
    out_dir,
    model: Classifier | None = None,
    force: bool = False,
    extra_meta: dict | None = None,
    on_tick=None,
) -> RunResult:
    """Run one simulation, streaming artifacts into ``out_dir``.

    ``on_tick`` is forwarded to the simulation and observes each tick after
    the analyses run. On a numeric failure the partial archive is closed out
    with an error status before the exception propagates.
    """
    writer = ArchiveWriter(out_dir, scenario, config, force=force)
    try:
        result = run_simulation(scenario, config, model=model, recorder=writer, on_tick=on_tick)
    except CrushSimError as e:
        writer.abort(f"{type(e).__name__}: {e}", extra_meta)
        raise
    writer.finalize(result, extra_meta=extra_meta)
    return result


def _trajectory_lines(path: Path) -> list[str]:
    with open(path / "trajectory.csv") as f:
        next(f)
        return [line.rstrip("\n") for line in f]


def first_divergence_tick(full_dir, hybrid_dir) -> int | None:
    """First tick where the two runs' trajectories differ, None if identical.

    The analysis-level column is excluded: levels legitimately differ across
    modes, positions and velocities must not.
    """
    full = _trajectory_lines(Path(full_dir))
    hyb = _trajectory_lines(Path(hybrid_dir))
    for a, b in zip(full, hyb):
        if a.rsplit(",", 1)[0] != b.rsplit(",", 1)[0]:
            return int(a.split(",", 1)[0])
    if len(full) != len(hyb):
        longer = full if len(full) > len(hyb) else hyb
        return int(longer[min(len(full), len(hyb))].split(",", 1)[0])
    return None


def _exposure_strings(archive: RunArchive) -> dict[tuple[int, int], str]:
    """(tick, agent) -> normal-force total as the exact text written to disk."""
    out = {}
    with open(archive.path / "exposure.csv") as f:
        next(f)
        for line in f:
            parts = line.rstrip("\n").split(",")
            out[(int(parts[0]), int(parts[1]))] = parts[2]
    return out


def _hybrid_levels(archive: RunArchive) -> dict[tuple[int, int], int]:
    traj = archive.trajectory()
    return {
        (int(t), int(a)): int(lvl)
        for t, a, lvl in zip(traj["tick"], traj["agent_id"], traj["analysis_level"])
    }


def escalated_force_agreement(full: RunArchive, hybrid: RunArchive) -> dict:
    """Compare measured per-agent forces wherever the hybrid run was at L3.

    The comparison is textual, so "agree" means bit-for-bit equal numbers.
    Absent rows on both sides (zero force) also count as agreement.
    """
    levels = _hybrid_levels(hybrid)
    full_forces = _exposure_strings(full)
    hyb_forces = _exposure_strings(hybrid)
    total = 0
    agree = 0
    first_mismatch = None
    for key, level in sorted(levels.items()):
        if level != 3:
            continue
        total += 1
        a = full_forces.get(key)
        b = hyb_forces.get(key)
        if a == b:
            agree += 1
        elif first_mismatch is None:
            first_mismatch = {"tick": key[0], "agent_id": key[1], "full": a, "hybrid": b}
    return {
        "compared": total,
        "agree": agree,
        "fraction": (agree / total) if total else 1.0,
        "first_mismatch": first_mismatch,
    }


def label_crossing_events(archive: RunArchive) -> list[tuple[int, int]]:
    """(tick, agent) moments where sustained exposure first satisfies the label.

    An event fires at tick t when the label condition holds ending at t but
    not at t-1, i.e. one event per onset, not per tick spent above threshold.
    """
    cfg = archive.config
    dt = cfg.dt
    force = cfg.qualify.label_force
    sustain = cfg.qualify.label_sustain
    need = max(1, int(round(sustain / dt)))
    events = []
    for agent, series in sorted(archive.force_series().items()):
        above = series >= force
        run = 0
        for t, flag in enumerate(above):
            run = run + 1 if flag else 0
            if run == need:
                events.append((t, agent))
            # longer runs keep run > need; only the onset counts
    return events


def l3_hit_rate(full: RunArchive, hybrid: RunArchive) -> dict:
    """Fraction of ground-truth label onsets caught inside an L3 locale."""
    events = label_crossing_events(full)
    levels = _hybrid_levels(hybrid)
    hits = sum(1 for t, a in events if levels.get((t, a)) == 3)
    return {
        "events": len(events),
        "hits": hits,
        "rate": (hits / len(events)) if events else None,
    }


def benchmark(
    scenario: Scenario,
    config: RunConfig,
    out_dir,
    model: Classifier | None = None,
    force: bool = False,
) -> dict:
    """Run the same seeded scenario in full-force and hybrid modes and compare.

    Produces two archives under ``out_dir`` plus benchmark.json with cost
    ratios, escalated-region force agreement, trajectory divergence, and the
    ground-truth hit rate of L3 coverage.
    """
    if model is None:
        raise ModeError("benchmark needs a window classifier model (both modes use it)")
    out = Path(out_dir)
    reports = {}
    results: dict[str, RunResult] = {}
    for mode in ("full-force", "hybrid"):
        cfg = dataclasses.replace(config, mode=mode)
        t0 = time.perf_counter()
        results[mode] = run_to_archive(scenario, cfg, out / mode, model=model, force=force)
        wall = time.perf_counter() - t0
        reports[mode] = {
            "status": results[mode].status,
            "ticks": results[mode].ticks,
            "wall_seconds": wall,
            "cost": results[mode].cost.totals(),
        }
    full = RunArchive(out / "full-force")
    hybrid = RunArchive(out / "hybrid")
    full_pairs = reports["full-force"]["cost"]["force_pair_evaluations"]
    hyb_pairs = reports["hybrid"]["cost"]["force_pair_evaluations"]
    doc = {
        "schema": 1,
        "scenario": scenario.name,
        "seed": config.seed,
        "runs": reports,
        "force_pair_ratio": (hyb_pairs / full_pairs) if full_pairs else None,
        "first_divergence_tick": first_divergence_tick(full.path, hybrid.path),
        "escalated_force_agreement": escalated_force_agreement(full, hybrid),
        "l3_hit_rate": l3_hit_rate(full, hybrid),
    }
    with open(out / "benchmark.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc
