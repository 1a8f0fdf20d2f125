"""Human-readable run reports: a text summary plus rendered figures."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .archive import RunArchive
from .metrics import FRUIN_BANDS, IMO_DENSITY

LEVEL_NAMES = {1: "watch", 2: "classify", 3: "measure"}


def _fmt_seconds(value) -> str:
    return "n/a" if value is None else f"{value:.1f} s"


def build_text(archive: RunArchive) -> str:
    """Plain-text digest of one archived run."""
    m = archive.metrics
    run = m.get("run", {})
    lines = []
    lines.append(f"scenario: {archive.scenario.name}")
    lines.append(
        f"run: mode={run.get('mode')} seed={run.get('seed')} "
        f"population={run.get('population')} ticks={run.get('ticks')} "
        f"dt={run.get('dt')} status={run.get('status')}"
    )
    egress = m.get("egress", {})
    lines.append(
        f"egress: evacuated {egress.get('evacuated')}/{egress.get('population')}, "
        f"rset={_fmt_seconds(egress.get('rset'))}, aset={_fmt_seconds(egress.get('aset'))}, "
        f"verdict={egress.get('verdict')}"
    )
    fruin = m.get("fruin", {})
    lines.append(
        f"level of service: worst {fruin.get('worst_level')} "
        f"({fruin.get('worst_density', 0.0):.2f} p/m^2)"
    )
    imo = m.get("density_criterion", {})
    if imo.get("passed") is None:
        lines.append(f"density criterion: not evaluated ({imo.get('reason', 'unknown')})")
    else:
        worst = imo.get("worst_fraction", 0.0)
        locale = imo.get("worst_locale")
        where = f" at locale {tuple(locale)}" if locale else ""
        lines.append(
            f"density criterion: {'pass' if imo['passed'] else 'FAIL'} "
            f"(worst fraction {worst:.3f} of run at >= {imo.get('density_threshold')} p/m^2{where})"
        )
    trans = m.get("transitions", {})
    by_trigger = trans.get("by_trigger", {})
    if trans.get("count"):
        detail = ", ".join(f"{k}={v}" for k, v in sorted(by_trigger.items()))
        lines.append(f"escalation transitions: {trans['count']} ({detail})")
    else:
        lines.append("escalation transitions: none")
    exposure = m.get("exposure")
    if exposure is None:
        lines.append("contact forces: no force data collected (implicit mode)")
    else:
        agents = exposure.get("agents", [])
        peaked = [a for a in agents if a["peak_force"] > 0]
        if not peaked:
            lines.append("contact forces: no agent experienced measured contact force")
        else:
            lines.append(
                f"contact forces: {len(peaked)} agents measured, "
                f"{exposure.get('n_at_risk', 0)} at-risk, {exposure.get('n_critical', 0)} critical"
            )
            lines.append("highest sustained-load agents (peak normal-force total):")
            for row in peaked[:10]:
                lines.append(f"  agent {row['agent_id']:>4}: {row['peak_force']:.1f} N")
    fallen = m.get("fallen", [])
    if fallen:
        lines.append(f"fallen agents: {fallen}")
    return "\n".join(lines) + "\n"


def _locale_level_counts(archive: RunArchive) -> tuple[np.ndarray, np.ndarray]:
    """Per-tick count of distinct locales at each analysis level (ticks, 3)."""
    traj = archive.trajectory()
    if len(traj["tick"]) == 0:
        return np.empty(0, dtype=int), np.zeros((0, 3), dtype=int)
    ticks = traj["tick"]
    keys = np.stack([ticks, traj["locale_i"], traj["locale_j"], traj["analysis_level"]], axis=1)
    uniq = np.unique(keys, axis=0)
    tick_values = np.unique(ticks)
    index = {t: k for k, t in enumerate(tick_values)}
    counts = np.zeros((len(tick_values), 3), dtype=int)
    for t, _i, _j, level in uniq:
        counts[index[t], level - 1] += 1
    return tick_values, counts


def render_figures(archive: RunArchive, out_dir) -> list[Path]:
    """Render the standard figure set as PNG files; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    dt = archive.config.dt

    # 1. floor plan with final agent positions
    fig, ax = plt.subplots(figsize=(6, 6))
    for seg in archive.scenario.walls:
        ax.plot([seg[0][0], seg[1][0]], [seg[0][1], seg[1][1]], color="black", lw=2)
    for e in archive.scenario.exits:
        ax.plot(
            [e.segment[0][0], e.segment[1][0]],
            [e.segment[0][1], e.segment[1][1]],
            color="tab:green",
            lw=4,
        )
    traj = archive.trajectory()
    if len(traj["tick"]):
        last = traj["tick"].max()
        mask = traj["tick"] == last
        ax.scatter(traj["x"][mask], traj["y"][mask], s=12, color="tab:red", label=f"tick {last}")
        ax.legend(loc="upper left", fontsize=8)
    ax.set_aspect("equal")
    ax.set_title(f"{archive.scenario.name}: layout and last logged positions")
    path = out / "layout.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # 2. worst locale density over time with reference bands
    fig, ax = plt.subplots(figsize=(8, 4))
    history = _worst_density_series(archive)
    if len(history):
        ax.plot(np.arange(len(history)) * dt, history, color="tab:blue", lw=1)
    for letter, cutoff in FRUIN_BANDS:
        if cutoff > 0:
            ax.axhline(cutoff, color="gray", lw=0.5, ls=":")
            ax.annotate(letter, xy=(0.0, cutoff), fontsize=7, color="gray")
    ax.axhline(IMO_DENSITY, color="tab:red", lw=1, ls="--", label="density criterion")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("worst locale density (p/m^2)")
    ax.set_title("crowding over time")
    ax.legend(loc="upper right", fontsize=8)
    path = out / "density_timeline.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # 3. locale analysis-level counts over time
    fig, ax = plt.subplots(figsize=(8, 4))
    ticks, counts = _locale_level_counts(archive)
    colors = ["tab:green", "tab:orange", "tab:red"]
    for level in (1, 2, 3):
        ax.plot(
            ticks * dt,
            counts[:, level - 1],
            color=colors[level - 1],
            label=f"L{level} ({LEVEL_NAMES[level]})",
        )
    ax.set_xlabel("time (s)")
    ax.set_ylabel("locales")
    ax.set_title("analysis effort by level")
    ax.legend(loc="upper right", fontsize=8)
    path = out / "levels_timeline.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # 4. top exposure bar chart
    exposure = archive.metrics.get("exposure")
    if exposure and exposure.get("agents"):
        top = [a for a in exposure["agents"] if a["peak_force"] > 0][:10]
        if top:
            fig, ax = plt.subplots(figsize=(6, 4))
            names = [str(a["agent_id"]) for a in top]
            peaks = [a["peak_force"] for a in top]
            ax.bar(names, peaks, color="tab:red")
            ax.set_xlabel("agent")
            ax.set_ylabel("peak normal-force total (N)")
            ax.set_title("highest measured compression")
            path = out / "exposure_top.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written


def _worst_density_series(archive: RunArchive) -> np.ndarray:
    """Max locale density per tick, reconstructed from trajectory occupancy."""
    traj = archive.trajectory()
    if len(traj["tick"]) == 0:
        return np.empty(0)
    cell_area = archive.config.cell_size**2
    keys = np.stack([traj["tick"], traj["locale_i"], traj["locale_j"]], axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    n_ticks = int(traj["tick"].max()) + 1
    worst = np.zeros(n_ticks)
    np.maximum.at(worst, uniq[:, 0], counts / cell_area)
    return worst


def write_report(archive: RunArchive, out_dir=None, figures: bool = True) -> str:
    """Write report.txt (and figures) under the archive; returns the text."""
    out = Path(out_dir) if out_dir is not None else archive.path / "report"
    out.mkdir(parents=True, exist_ok=True)
    text = build_text(archive)
    with open(out / "report.txt", "w") as f:
        f.write(text)
    if figures:
        render_figures(archive, out)
    return text
