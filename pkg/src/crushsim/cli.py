"""Command-line interface.

Exit codes: 0 success, 2 validation or input problem, 3 numeric failure,
4 run incomplete (time cap hit before full evacuation).
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .archive import RunArchive
from .config import RunConfig, dump_config, load_config
from .errors import (
    CrushSimError,
    DivergenceError,
    IncompleteRun,
    NumericError,
)
from .qualify import (
    TrainHyper,
    evaluate,
    extract_dataset,
    save_model,
    train,
)
from .runner import benchmark as run_benchmark
from .runner import resolve_model, run_to_archive
from .scenario import load_scenario, validate_scenario
from .scenarios import CANONICAL

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_INCOMPLETE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    """Run a command body, mapping simulator errors to exit codes."""
    try:
        return fn(*args, **kwargs)
    except (NumericError, DivergenceError) as e:
        _fail(EXIT_NUMERIC, str(e))
    except IncompleteRun as e:
        _fail(EXIT_INCOMPLETE, str(e))
    except CrushSimError as e:
        _fail(EXIT_INVALID, str(e))


def _load_scenario_arg(value: str):
    if value in CANONICAL:
        return CANONICAL[value]()
    path = Path(value)
    if path.exists():
        return load_scenario(path)
    raise click.BadParameter(
        f"{value!r} is neither a canonical scenario ({', '.join(sorted(CANONICAL))}) "
        f"nor an existing file"
    )


def _build_config(config_path, seed, mode, agents, max_time, workers) -> RunConfig:
    config = load_config(config_path) if config_path else RunConfig()
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if mode is not None:
        overrides["mode"] = mode
    if max_time is not None:
        overrides["max_time"] = max_time
    if workers is not None:
        overrides["workers"] = workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if agents is not None:
        config = dataclasses.replace(
            config, agents=dataclasses.replace(config.agents, count=agents)
        )
    return config


@click.group(context_settings={"auto_envvar_prefix": "CRUSHSIM", "show_default": True})
@click.version_option(__version__, prog_name="crushsim")
def main():
    """Evacuation simulator with staged crowd-crush detection."""


@main.command()
@click.option("--scenario", "scenario_arg", required=True, help="Canonical name or scenario YAML path.")
@click.option("--config", "config_path", type=click.Path(exists=True), help="Run config YAML.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Archive directory to create.")
@click.option("--mode", type=click.Choice(["implicit", "full-force", "hybrid"]), help="Override config mode.")
@click.option("--seed", type=int, help="Override config seed.")
@click.option("--agents", type=int, help="Override population size.")
@click.option("--max-time", type=float, help="Override simulated time cap (s).")
@click.option("--workers", type=int, help="Override analysis thread count.")
@click.option("--model", "model_path", type=click.Path(exists=True), help="Window classifier (.crushnet).")
@click.option("--force", is_flag=True, help="Overwrite an existing archive directory.")
@click.option("--quiet", is_flag=True, help="Suppress the summary lines.")
def run(scenario_arg, config_path, out_dir, mode, seed, agents, max_time, workers, model_path, force, quiet):
    """Simulate one run and write its archive."""

    def body():
        scenario = _load_scenario_arg(scenario_arg)
        config = _build_config(config_path, seed, mode, agents, max_time, workers)
        model = resolve_model(config, model_path)
        result = run_to_archive(
            scenario,
            config,
            out_dir,
            model=model,
            force=force,
            extra_meta={"model": str(model_path or config.qualify.model or "")} if model else None,
        )
        if not quiet:
            click.echo(f"archive: {out_dir}")
            click.echo(
                f"status: {result.status} after {result.ticks} ticks "
                f"({result.ticks * config.dt:.1f} s simulated)"
            )
            click.echo(
                f"evacuated: {result.egress.evacuated}/{result.population}, "
                f"rset={result.egress.rset if result.egress.rset is not None else 'n/a'}"
            )
            click.echo(f"transitions: {len(result.transitions)}, fallen: {len(result.fallen)}")
        return result

    result = _guard(body)
    if result.timed_out:
        sys.exit(EXIT_INCOMPLETE)


@main.command(name="train")
@click.option("--archive", "archive_dir", required=True, type=click.Path(exists=True), help="Instrumented (full-force) run archive.")
@click.option("--out", "model_out", required=True, type=click.Path(), help="Where to write the .crushnet model.")
@click.option("--window", type=int, default=40, help="Feature window length (ticks).")
@click.option("--stride", type=int, default=10, help="Ticks between extracted windows.")
@click.option("--label-force", type=float, default=250.0, help="Ground-truth force threshold (N).")
@click.option("--label-sustain", type=float, default=1.0, help="Ground-truth sustain (s).")
@click.option("--hidden", type=int, default=16, help="Hidden layer width.")
@click.option("--epochs", type=int, default=40)
@click.option("--learning-rate", type=float, default=0.5)
@click.option("--batch-size", type=int, default=32)
@click.option("--seed", type=int, default=7, help="Init and shuffle seed.")
@click.option("--holdout", type=float, default=0.2, help="Fraction of agents held out for evaluation.")
def train_cmd(archive_dir, model_out, window, stride, label_force, label_sustain, hidden, epochs, learning_rate, batch_size, seed, holdout):
    """Fit the window classifier on a full-force archive."""

    def body():
        archive = RunArchive(archive_dir)
        samples, balance = extract_dataset(
            archive,
            window=window,
            stride=stride,
            label_force=label_force,
            label_sustain=label_sustain,
        )
        click.echo(
            f"dataset: {balance['samples']} windows, "
            f"{balance['positive']} positive ({balance['positive_fraction']:.1%})"
        )
        rng = np.random.default_rng(seed)
        agent_ids = sorted({s.agent_id for s in samples})
        shuffled = [agent_ids[i] for i in rng.permutation(len(agent_ids))]
        n_hold = int(round(holdout * len(shuffled)))
        held = set(shuffled[:n_hold])
        train_set = [s for s in samples if s.agent_id not in held]
        hold_set = [s for s in samples if s.agent_id in held]
        hyper = TrainHyper(
            hidden=hidden,
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
            seed=seed,
        )
        model, training = train(train_set, hyper)
        model.meta["source_archive"] = str(archive.path)
        model.meta["label_force"] = label_force
        model.meta["label_sustain"] = label_sustain
        save_model(model, model_out)
        click.echo(f"model: {model_out} ({hidden} hidden units, window {window})")
        click.echo(
            f"training: {len(train_set)} windows, final loss {training.loss_curve[-1]:.4f}"
        )
        scores = evaluate(model, train_set)
        click.echo(f"train AUC {scores['auc']:.3f}, accuracy {scores['accuracy']:.3f}")
        if hold_set:
            scores = evaluate(model, hold_set)
            click.echo(
                f"holdout ({len(held)} agents, {len(hold_set)} windows): "
                f"AUC {scores['auc']:.3f}, accuracy {scores['accuracy']:.3f}"
            )

    _guard(body)


@main.command(name="benchmark")
@click.option("--scenario", "scenario_arg", default="bottleneck", help="Canonical name or scenario YAML path.")
@click.option("--config", "config_path", type=click.Path(exists=True), help="Run config YAML.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Directory for the two archives and benchmark.json.")
@click.option("--model", "model_path", type=click.Path(exists=True), help="Window classifier (.crushnet).")
@click.option("--seed", type=int, help="Override config seed.")
@click.option("--agents", type=int, help="Override population size.")
@click.option("--max-time", type=float, help="Override simulated time cap (s).")
@click.option("--force", is_flag=True, help="Overwrite existing archives.")
def benchmark_cmd(scenario_arg, config_path, out_dir, model_path, seed, agents, max_time, force):
    """Full-force vs hybrid on the same seed: cost, agreement, coverage."""

    def body():
        scenario = _load_scenario_arg(scenario_arg)
        config = _build_config(config_path, seed, None, agents, max_time, None)
        model = resolve_model(config, model_path)
        doc = run_benchmark(scenario, config, out_dir, model=model, force=force)
        ratio = doc["force_pair_ratio"]
        agreement = doc["escalated_force_agreement"]
        hits = doc["l3_hit_rate"]
        click.echo(f"benchmark: {out_dir}/benchmark.json")
        click.echo(
            "force pair evaluations: hybrid/full = "
            f"{ratio:.4f}" if ratio is not None else "force pair evaluations: full run had none"
        )
        click.echo(
            f"escalated-region force agreement: {agreement['agree']}/{agreement['compared']}"
            f" ({agreement['fraction']:.1%})"
        )
        if hits["rate"] is None:
            click.echo("label onsets: none in this run")
        else:
            click.echo(
                f"label onsets inside L3: {hits['hits']}/{hits['events']} ({hits['rate']:.1%})"
            )
        div = doc["first_divergence_tick"]
        click.echo(
            "trajectories: identical" if div is None else f"trajectories: DIVERGE at tick {div}"
        )

    _guard(body)


@main.command(name="report")
@click.option("--archive", "archive_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), help="Report directory (default: <archive>/report).")
@click.option("--figures/--no-figures", default=True, help="Render PNG figures.")
def report_cmd(archive_dir, out_dir, figures):
    """Summarize an archive as text and figures."""

    def body():
        from .report import write_report

        archive = RunArchive(archive_dir)
        text = write_report(archive, out_dir, figures=figures)
        click.echo(text, nl=False)

    _guard(body)


@main.command(name="config-dump")
@click.option("--config", "config_path", type=click.Path(exists=True), help="Normalize and echo this file instead of defaults.")
def config_dump(config_path):
    """Print the effective run config as YAML."""

    def body():
        config = load_config(config_path) if config_path else None
        click.echo(dump_config(config), nl=False)

    _guard(body)


@main.command(name="validate")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), help="Scenario YAML to validate.")
@click.option("--config", "config_path", type=click.Path(exists=True), help="Run config YAML to validate.")
@click.option("--archive", "archive_dir", type=click.Path(exists=True), help="Run archive to validate.")
def validate_cmd(scenario_path, config_path, archive_dir):
    """Check scenario, config, or archive inputs without running anything."""
    if not (scenario_path or config_path or archive_dir):
        _fail(EXIT_INVALID, "nothing to validate: pass --scenario, --config, or --archive")

    def body():
        if scenario_path:
            scenario = load_scenario(scenario_path)
            validate_scenario(scenario)
            click.echo(f"scenario {scenario.name}: ok")
        if config_path:
            load_config(config_path)
            click.echo("config: ok")
        if archive_dir:
            archive = RunArchive(archive_dir)
            problems = archive.validate()
            if problems:
                for p in problems:
                    click.echo(f"archive: {p}", err=True)
                sys.exit(EXIT_INVALID)
            click.echo(f"archive: ok ({archive.meta.get('status')})")

    _guard(body)


if __name__ == "__main__":
    main()
