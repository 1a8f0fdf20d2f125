"""On-disk run archives: a streaming writer and a validating reader.

An archive is a directory of plain-text artifacts. Everything except
meta.json is deterministic given (scenario, config): two runs with the same
inputs produce byte-identical CSV/YAML/JSON content. Wall-clock timestamps
live only in meta.json.
"""

from __future__ import annotations

import csv
import json
import shutil
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, save_config
from .errors import IncompleteArchive, ParseError
from .metrics import summarize
from .qualify import WINDOW_FEATURES
from .quantify import injury_report
from .scenario import Scenario, load_scenario, save_scenario

ARCHIVE_SCHEMA = 1

TRAJECTORY_HEADER = "tick,time,agent_id,x,y,vx,vy,locale_i,locale_j,analysis_level"
VERDICTS_HEADER = "tick,locale_i,locale_j,state,phi,mi,confidence"
TRANSITIONS_HEADER = "tick,locale_i,locale_j,from_level,to_level,trigger"
EXPOSURE_HEADER = "tick,agent_id,normal_force_total,peak_to_date"
FEATURES_HEADER = "tick,agent_id," + ",".join(WINDOW_FEATURES)

ALWAYS_REQUIRED = (
    "meta.json",
    "config.yaml",
    "scenario.yaml",
    "trajectory.csv",
    "verdicts.csv",
    "transitions.csv",
    "metrics.json",
    "cost_summary.json",
)


def _f(x) -> str:
    """Shortest round-trip decimal form; keeps comparisons bit-exact."""
    return repr(float(x))


class ArchiveWriter:
    """Streams run artifacts into a directory as the run progresses.

    Implements the recorder interface the engine calls into. Row-bearing
    files get their headers eagerly so an empty run still reads cleanly;
    exposure.csv exists only for modes that measure forces, features.csv
    only for instrumented (full-force) runs.
    """

    def __init__(self, path, scenario: Scenario, config: RunConfig, force: bool = False):
        self.path = Path(path)
        if self.path.exists():
            if not force:
                raise ParseError(f"{self.path}: output directory already exists")
            shutil.rmtree(self.path)
        self.path.mkdir(parents=True)
        self.scenario = scenario
        self.config = config
        self._started = datetime.now(timezone.utc)
        self._handles: dict[str, object] = {}
        self._rows = {"trajectory": 0, "verdicts": 0, "transitions": 0, "exposure": 0, "features": 0}
        self._exit_rows: list[tuple[int, float, int]] = []
        self._finalized = False
        save_config(config, self.path / "config.yaml")
        save_scenario(scenario, self.path / "scenario.yaml")
        self._open("trajectory", TRAJECTORY_HEADER)
        self._open("verdicts", VERDICTS_HEADER)
        self._open("transitions", TRANSITIONS_HEADER)
        if config.mode != "implicit":
            self._open("exposure", EXPOSURE_HEADER)
        if config.mode == "full-force":
            self._open("features", FEATURES_HEADER)

    def _open(self, name: str, header: str) -> None:
        handle = open(self.path / f"{name}.csv", "w")
        handle.write(header + "\n")
        self._handles[name] = handle

    def _writerow(self, name: str, parts: list[str]) -> None:
        self._handles[name].write(",".join(parts) + "\n")
        self._rows[name] += 1

    # -- recorder interface -------------------------------------------------

    def trajectory(self, tick, time, ids, pos, vel, cells, levels) -> None:
        t = str(int(tick))
        ts = _f(time)
        write = self._handles["trajectory"].write
        for k, i in enumerate(ids):
            write(
                f"{t},{ts},{int(i)},{_f(pos[i, 0])},{_f(pos[i, 1])},"
                f"{_f(vel[i, 0])},{_f(vel[i, 1])},{int(cells[i, 0])},{int(cells[i, 1])},"
                f"{int(levels[k])}\n"
            )
        self._rows["trajectory"] += len(ids)

    def verdicts(self, tick, verdicts) -> None:
        for v in verdicts:
            self._writerow(
                "verdicts",
                [
                    str(int(tick)),
                    str(int(v.locale[0])),
                    str(int(v.locale[1])),
                    v.state,
                    _f(v.phi_mean),
                    _f(v.mi_value),
                    _f(v.confidence),
                ],
            )

    def transition(self, event) -> None:
        self._writerow(
            "transitions",
            [
                str(int(event.tick)),
                str(int(event.locale[0])),
                str(int(event.locale[1])),
                str(int(event.from_level)),
                str(int(event.to_level)),
                event.trigger,
            ],
        )

    def features(self, tick, ids, rows) -> None:
        t = str(int(tick))
        write = self._handles["features"].write
        for k, i in enumerate(ids):
            write(f"{t},{int(i)}," + ",".join(_f(x) for x in rows[k]) + "\n")
        self._rows["features"] += len(ids)

    def exposure(self, tick, ids, totals, peaks) -> None:
        t = str(int(tick))
        write = self._handles["exposure"].write
        for k, i in enumerate(ids):
            write(f"{t},{int(i)},{_f(totals[k])},{_f(peaks[k])}\n")
        self._rows["exposure"] += len(ids)

    def exits(self, tick, time, ids) -> None:
        for i in ids:
            self._exit_rows.append((int(tick), float(time), int(i)))

    # -- closing out ----------------------------------------------------

    def _close_handles(self) -> None:
        for handle in self._handles.values():
            handle.close()
        self._handles = {}

    def _write_json(self, name: str, doc: dict) -> None:
        with open(self.path / name, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")

    def _meta(self, status: str, error: str | None, extra: dict | None) -> dict:
        finished = datetime.now(timezone.utc)
        doc = {
            "schema": ARCHIVE_SCHEMA,
            "package": "crushsim",
            "version": __version__,
            "mode": self.config.mode,
            "status": status,
            "error": error,
            "started_at": self._started.isoformat(),
            "finished_at": finished.isoformat(),
            "wall_seconds": (finished - self._started).total_seconds(),
            "rows": dict(self._rows),
        }
        if extra:
            doc.update(extra)
        return doc

    def finalize(self, result, status: str | None = None, extra_meta: dict | None = None) -> None:
        """Write the summary artifacts for a run that produced a RunResult."""
        if self._finalized:
            return
        self._close_handles()
        status = status or result.status
        doc = summarize(result.density, result.egress)
        doc["run"] = {
            "status": status,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "dt": self.config.dt,
            "ticks": result.ticks,
            "population": result.population,
        }
        doc["exit_times"] = {str(i): t for i, t in sorted(result.exit_times.items())}
        by_trigger: dict[str, int] = {}
        for ev in result.transitions:
            by_trigger[ev.trigger] = by_trigger.get(ev.trigger, 0) + 1
        doc["transitions"] = {"count": len(result.transitions), "by_trigger": by_trigger}
        doc["fallen"] = result.fallen
        if self.config.mode != "implicit":
            doc["exposure"] = injury_report(result.exposure, self.config.injury)
        self._write_json("metrics.json", doc)
        self._write_json("cost_summary.json", result.cost.to_dict())
        self._write_json("meta.json", self._meta(status, None, extra_meta))
        self._finalized = True

    def abort(self, error: str, extra_meta: dict | None = None) -> None:
        """Close out after a mid-run failure, preserving rows written so far."""
        if self._finalized:
            return
        self._close_handles()
        self._write_json("meta.json", self._meta("error", error, extra_meta))
        self._finalized = True


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        return header, list(reader)


class RunArchive:
    """Read-side view of an archive directory with derived accessors."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise IncompleteArchive([str(self.path)])
        missing = [name for name in ALWAYS_REQUIRED if not (self.path / name).exists()]
        if "config.yaml" not in missing:
            self.config = load_config(self.path / "config.yaml")
            if self.config.mode != "implicit" and not (self.path / "exposure.csv").exists():
                missing.append("exposure.csv")
            if self.config.mode == "full-force" and not (self.path / "features.csv").exists():
                missing.append("features.csv")
        if missing:
            raise IncompleteArchive(sorted(missing))
        self.scenario = load_scenario(self.path / "scenario.yaml")
        with open(self.path / "meta.json") as f:
            self.meta = json.load(f)
        with open(self.path / "metrics.json") as f:
            self.metrics = json.load(f)
        with open(self.path / "cost_summary.json") as f:
            self.cost = json.load(f)

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def n_ticks(self) -> int:
        return int(self.metrics["run"]["ticks"])

    def trajectory(self) -> dict[str, np.ndarray]:
        header, rows = _read_csv(self.path / "trajectory.csv")
        if header != TRAJECTORY_HEADER.split(","):
            raise ParseError(f"{self.path}/trajectory.csv: unexpected header {header}")
        if not rows:
            return {name: np.empty(0) for name in header}
        data = np.array(rows, dtype=object)
        out = {}
        for k, name in enumerate(header):
            col = data[:, k]
            if name in ("tick", "agent_id", "locale_i", "locale_j", "analysis_level"):
                out[name] = col.astype(int)
            else:
                out[name] = col.astype(float)
        return out

    def verdict_rows(self) -> list[dict]:
        header, rows = _read_csv(self.path / "verdicts.csv")
        out = []
        for r in rows:
            out.append(
                {
                    "tick": int(r[0]),
                    "locale": (int(r[1]), int(r[2])),
                    "state": r[3],
                    "phi": float(r[4]),
                    "mi": float(r[5]),
                    "confidence": float(r[6]),
                }
            )
        return out

    def transition_rows(self) -> list[dict]:
        header, rows = _read_csv(self.path / "transitions.csv")
        out = []
        for r in rows:
            out.append(
                {
                    "tick": int(r[0]),
                    "locale": (int(r[1]), int(r[2])),
                    "from_level": int(r[3]),
                    "to_level": int(r[4]),
                    "trigger": r[5],
                }
            )
        return out

    def exposure_rows(self) -> list[tuple[int, int, float, float]]:
        header, rows = _read_csv(self.path / "exposure.csv")
        return [(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows]

    def features_by_agent(self) -> dict[int, tuple[int, np.ndarray]]:
        """Per-agent feature history: id -> (first_tick, matrix of shape (ticks, features)).

        Rows for one agent cover consecutive ticks from its first appearance
        until it leaves, so the matrix index is (tick - first_tick).
        """
        header, rows = _read_csv(self.path / "features.csv")
        n_feat = len(header) - 2
        ticks: dict[int, list[int]] = {}
        values: dict[int, list[list[float]]] = {}
        for r in rows:
            agent = int(r[1])
            ticks.setdefault(agent, []).append(int(r[0]))
            values.setdefault(agent, []).append([float(x) for x in r[2:]])
        out = {}
        for agent in sorted(ticks):
            ts = ticks[agent]
            first = ts[0]
            if ts != list(range(first, first + len(ts))):
                raise ParseError(
                    f"{self.path}/features.csv: agent {agent} has non-contiguous tick rows"
                )
            out[agent] = (first, np.array(values[agent]).reshape(len(ts), n_feat))
        return out

    def force_series(self) -> dict[int, np.ndarray]:
        """Zero-filled per-agent normal-force-total series over the whole run."""
        n = self.n_ticks
        out: dict[int, np.ndarray] = {}
        for tick, agent, total, _peak in self.exposure_rows():
            if agent not in out:
                out[agent] = np.zeros(n)
            if tick < n:
                out[agent][tick] = total
        return out

    def exit_times(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in self.metrics.get("exit_times", {}).items()}

    def validate(self) -> list[str]:
        """Integrity scan; returns a list of problems (empty when clean)."""
        problems: list[str] = []
        checks = {
            "trajectory.csv": TRAJECTORY_HEADER,
            "verdicts.csv": VERDICTS_HEADER,
            "transitions.csv": TRANSITIONS_HEADER,
        }
        if self.config.mode != "implicit":
            checks["exposure.csv"] = EXPOSURE_HEADER
        if self.config.mode == "full-force":
            checks["features.csv"] = FEATURES_HEADER
        tables: dict[str, list[list[str]]] = {}
        for name, expected in checks.items():
            try:
                header, rows = _read_csv(self.path / name)
            except (OSError, ParseError) as e:
                problems.append(f"{name}: {e}")
                continue
            if header != expected.split(","):
                problems.append(f"{name}: unexpected header {','.join(header)}")
                continue
            width = len(expected.split(","))
            for lineno, row in enumerate(rows, start=2):
                if len(row) != width:
                    problems.append(f"{name}:{lineno}: expected {width} fields, got {len(row)}")
                    break
            tables[name] = rows
        rows = tables.get("trajectory.csv", [])
        last_tick = -1
        for r in rows:
            try:
                tick = int(r[0])
                level = int(r[9])
            except ValueError:
                problems.append(f"trajectory.csv: non-numeric tick or level near {r[:3]}")
                break
            if tick < last_tick:
                problems.append(f"trajectory.csv: ticks not monotone at tick {tick}")
                break
            last_tick = tick
            if level not in (1, 2, 3):
                problems.append(f"trajectory.csv: invalid analysis level {level} at tick {tick}")
                break
        for r in tables.get("transitions.csv", []):
            a, b = int(r[3]), int(r[4])
            if abs(a - b) != 1 or not (1 <= a <= 3 and 1 <= b <= 3):
                problems.append(f"transitions.csv: non-adjacent level change {a}->{b} at tick {r[0]}")
                break
        if self.meta.get("status") not in ("completed", "timeout", "error"):
            problems.append(f"meta.json: unknown status {self.meta.get('status')!r}")
        if "run" not in self.metrics:
            problems.append("metrics.json: missing run block")
        return problems
