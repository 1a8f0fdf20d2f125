"""Session fixtures for the seeded runs behind the acceptance checks.

The expensive artifacts (a training run, a trained classifier, a paired
benchmark, and the default-settings scenario runs) are built once per
session and shared; every fixture is lazy, so the fast unit suites never
pay for them.
"""

import dataclasses
import time
from types import SimpleNamespace

import numpy as np
import pytest

from crushsim.archive import RunArchive
from crushsim.config import RunConfig
from crushsim.qualify import TrainHyper, extract_dataset, train
from crushsim.runner import benchmark, run_to_archive
from crushsim.scenarios import bottleneck, corridor

TRAIN_SEED = 101
HELDOUT_SEED = 202

TRAIN_HYPER = TrainHyper(batch_size=256, learning_rate=0.2, epochs=30)
QUALIFY_WINDOW = 40
LABEL_SUSTAIN = 0.5


def pipeline_config(seed, mode, max_time=150.0):
    """Pinned settings for the trained-pipeline checks.

    A 1 m analysis grid and a 20-tick identify window localize escalation
    tightly around the exit; counts and thresholds are otherwise defaults.
    """
    cfg = RunConfig(mode=mode, seed=seed, max_time=max_time, cell_size=1.0)
    cfg = dataclasses.replace(cfg, agents=dataclasses.replace(cfg.agents, count=150))
    return dataclasses.replace(cfg, detector=dataclasses.replace(cfg.detector, window=20))


def default_config(seed, mode, count, max_time=150.0):
    """Package-default settings with only seed, mode, and head count pinned."""
    cfg = RunConfig(mode=mode, seed=seed, max_time=max_time)
    return dataclasses.replace(cfg, agents=dataclasses.replace(cfg.agents, count=count))


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def training_run(acceptance_dir):
    """Full-force bottleneck run (seed 101) with per-tick force-balance audit.

    Records the worst Newton residual |sum of contact forces + wall
    reactions| seen on any tick, and the wall-clock cost of the run.
    """
    residuals = []

    def record(sim, plan, verdicts, contacts, resolved):
        if resolved is None:
            return
        net = resolved.force.sum(axis=0) + resolved.wall_reaction.sum(axis=0)
        residuals.append(float(np.hypot(*net)))

    out = acceptance_dir / "train-run"
    t0 = time.perf_counter()
    result = run_to_archive(
        bottleneck(), pipeline_config(TRAIN_SEED, "full-force"), out, on_tick=record
    )
    wall = time.perf_counter() - t0
    return SimpleNamespace(
        path=out,
        archive=RunArchive(out),
        result=result,
        newton_worst=max(residuals) if residuals else 0.0,
        newton_ticks=len(residuals),
        wall_seconds=wall,
    )


@pytest.fixture(scope="session")
def trained_model(training_run):
    """Classifier trained on the seed-101 run.

    Labels for training use a short 0.5 s sustain so windows that end while
    compression is still forming count as positives; the classifier then
    fires on half-formed patterns instead of waiting for a mature jam.
    """
    samples, balance = extract_dataset(
        training_run.archive, window=QUALIFY_WINDOW, stride=1, label_sustain=LABEL_SUSTAIN
    )
    model, report = train(samples, TRAIN_HYPER)
    return SimpleNamespace(model=model, report=report, balance=balance)


@pytest.fixture(scope="session")
def benchmark_run(acceptance_dir, trained_model):
    """Paired full-force and hybrid runs on held-out seed 202, plus the report."""
    out = acceptance_dir / "benchmark"
    doc = benchmark(
        bottleneck(),
        pipeline_config(HELDOUT_SEED, "hybrid"),
        out,
        model=trained_model.model,
        force=True,
    )
    return SimpleNamespace(
        path=out,
        doc=doc,
        full=RunArchive(out / "full-force"),
        hybrid=RunArchive(out / "hybrid"),
    )


@pytest.fixture(scope="session")
def default_hybrid_runs(acceptance_dir, trained_model):
    """Hybrid runs of the corridor and bottleneck under package defaults."""
    corr_dir = acceptance_dir / "corridor-default"
    bot_dir = acceptance_dir / "bottleneck-default"
    run_to_archive(
        corridor(), default_config(77, "hybrid", count=30), corr_dir,
        model=trained_model.model,
    )
    run_to_archive(
        bottleneck(), default_config(42, "hybrid", count=150), bot_dir,
        model=trained_model.model,
    )
    return SimpleNamespace(
        corridor=RunArchive(corr_dir), bottleneck=RunArchive(bot_dir)
    )
