"""Stage two: confirm flagged locales with a learned crush classifier.

A small feed-forward network scores rolling per-agent feature windows for
sustained-compression risk. Training data comes from instrumented runs where
ground-truth contact forces are available; at runtime only the cheap features
are needed, so confirmation costs far less than full force computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    DegenerateDataset,
    DivergenceError,
    InsufficientData,
    InsufficientHistory,
    ModeError,
    ProtocolError,
    ShapeError,
)
from .grid import LocaleId

if TYPE_CHECKING:  # pragma: no cover
    from .archive import RunArchive

MODEL_MAGIC = "crushnet"
MODEL_VERSION = 1

WINDOW_FEATURES = (
    "speed_ratio",
    "alignment",
    "density_star",
    "mass_ratio",
    "threat",
    "competitiveness",
    "locale_density",
)

CONFIRMED = "Confirmed"
UNCONFIRMED = "Unconfirmed"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Normalization:
    """Per-feature-column standardization learned from the training set."""

    mean: np.ndarray  # (F,)
    std: np.ndarray  # (F,)

    def apply(self, vectors: np.ndarray, window: int) -> np.ndarray:
        n_feat = len(self.mean)
        shaped = vectors.reshape(-1, window, n_feat)
        z = (shaped - self.mean) / np.maximum(self.std, 1e-8)
        return z.reshape(vectors.shape)


@dataclass
class LabelledSample:
    """One flattened feature window with its force-derived label."""

    vector: np.ndarray  # (window * n_features,), tick-major
    label: bool
    agent_id: int
    end_tick: int
    source: str = ""


@dataclass
class Classifier:
    """Feed-forward net [D, H, 1] with logistic activations throughout."""

    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (1, H)
    b2: np.ndarray  # (1,)
    norm: Normalization
    window: int
    feature_names: tuple[str, ...] = WINDOW_FEATURES
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def forward_batch(self, vectors: np.ndarray) -> np.ndarray:
        """Probabilities in (0, 1) for a batch of flattened windows."""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[None, :]
        if vectors.shape[1] != self.input_dim:
            raise ShapeError(
                f"window vector has {vectors.shape[1]} values, model expects {self.input_dim}"
            )
        x = self.norm.apply(vectors, self.window)
        a1 = _sigmoid(x @ self.w1.T + self.b1)
        return _sigmoid(a1 @ self.w2.T + self.b2)[:, 0]


def forward(model: Classifier, vector: np.ndarray) -> float:
    """Score a single flattened feature window."""
    return float(model.forward_batch(np.asarray(vector, dtype=float)[None, :])[0])


@dataclass
class TrainHyper:
    hidden: int = 16
    epochs: int = 40
    learning_rate: float = 0.5
    batch_size: int = 32
    seed: int = 7


@dataclass
class TrainingReport:
    loss_curve: list[float]
    n_pos: int
    n_neg: int
    final_loss: float
    initial_loss: float


def _bce_loss(z2: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # Numerically stable binary cross-entropy straight from logits. The
    # normalizer is the sample count, not the weight sum: inverse-frequency
    # weights average to 1 over the whole dataset, so per-count batch losses
    # are unbiased estimates of the dataset loss no matter how the rare
    # class lands in each batch.
    per = np.maximum(z2, 0.0) - z2 * y + np.log1p(np.exp(-np.abs(z2)))
    return float((w * per[:, 0]).sum() / len(w))


def loss_and_grads(
    model: Classifier, x_norm: np.ndarray, y: np.ndarray, w: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted BCE loss and exact gradients for one batch of normalized inputs."""
    y2 = y.astype(float)[:, None]
    z1 = x_norm @ model.w1.T + model.b1
    a1 = _sigmoid(z1)
    z2 = a1 @ model.w2.T + model.b2
    p = _sigmoid(z2)
    loss = _bce_loss(z2, y2, w)
    delta2 = (p - y2) * w[:, None] / len(w)  # (B, 1)
    grads = {
        "w2": delta2.T @ a1,
        "b2": delta2.sum(axis=0),
    }
    delta1 = (delta2 @ model.w2) * a1 * (1.0 - a1)  # (B, H)
    grads["w1"] = delta1.T @ x_norm
    grads["b1"] = delta1.sum(axis=0)
    return loss, grads


def train(samples: list[LabelledSample], hyper: TrainHyper | None = None) -> tuple[Classifier, TrainingReport]:
    """Fit the classifier with minibatch SGD and inverse-frequency class weights.

    Deterministic for a fixed seed: weight init, epoch shuffles and batch
    order all come from one seeded generator.
    """
    hyper = hyper or TrainHyper()
    if not samples:
        raise InsufficientData("empty training set")
    x = np.array([s.vector for s in samples], dtype=float)
    y = np.array([s.label for s in samples], dtype=bool)
    n, dim = x.shape
    n_pos = int(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataset(
            f"training set has {n_pos} positive and {n_neg} negative samples; need both classes"
        )
    n_feat = len(WINDOW_FEATURES)
    if dim % n_feat != 0:
        raise ShapeError(f"window vector length {dim} is not a multiple of {n_feat} features")
    window = dim // n_feat

    cols = x.reshape(-1, n_feat)
    norm = Normalization(mean=cols.mean(axis=0), std=cols.std(axis=0))

    rng = np.random.default_rng(hyper.seed)
    model = Classifier(
        w1=rng.standard_normal((hyper.hidden, dim)) / np.sqrt(dim),
        b1=np.zeros(hyper.hidden),
        w2=rng.standard_normal((1, hyper.hidden)) / np.sqrt(hyper.hidden),
        b2=np.zeros(1),
        norm=norm,
        window=window,
    )
    xn = norm.apply(x, window)
    weights = np.where(y, n / (2.0 * n_pos), n / (2.0 * n_neg))

    def full_loss() -> float:
        z1 = xn @ model.w1.T + model.b1
        z2 = _sigmoid(z1) @ model.w2.T + model.b2
        return _bce_loss(z2, y.astype(float)[:, None], weights)

    initial = full_loss()
    curve = [initial]
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            loss, grads = loss_and_grads(model, xn[batch], y[batch], weights[batch])
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite ({loss})")
            model.w1 -= hyper.learning_rate * grads["w1"]
            model.b1 -= hyper.learning_rate * grads["b1"]
            model.w2 -= hyper.learning_rate * grads["w2"]
            model.b2 -= hyper.learning_rate * grads["b2"]
        epoch_loss = full_loss()
        if not np.isfinite(epoch_loss):
            raise DivergenceError("training loss became non-finite")
        curve.append(epoch_loss)

    model.meta = {
        "seed": hyper.seed,
        "epochs": hyper.epochs,
        "learning_rate": hyper.learning_rate,
        "batch_size": hyper.batch_size,
        "n_pos": n_pos,
        "n_neg": n_neg,
        "final_loss": curve[-1],
    }
    report = TrainingReport(
        loss_curve=curve, n_pos=n_pos, n_neg=n_neg, final_loss=curve[-1], initial_loss=initial
    )
    return model, report


def _fmt_row(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def save_model(model: Classifier, path) -> None:
    """Write the model as versioned plain text; floats round-trip exactly."""
    h, d = model.w1.shape
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"window {model.window}",
        f"features {len(model.feature_names)}",
        "feature_names " + " ".join(model.feature_names),
        f"layers {d} {h} 1",
        "norm_mean " + _fmt_row(model.norm.mean),
        "norm_std " + _fmt_row(model.norm.std),
        f"w1 {h} {d}",
        *(_fmt_row(row) for row in model.w1),
        f"b1 {h}",
        _fmt_row(model.b1),
        f"w2 1 {h}",
        _fmt_row(model.w2),
        "b2 1",
        _fmt_row(model.b2),
    ]
    for key in sorted(model.meta):
        lines.append(f"meta {key} {model.meta[key]}")
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> Classifier:
    """Read a model written by save_model; strict about format and shapes."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ProtocolError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_MAGIC:
        raise ProtocolError(f"{path}: not a {MODEL_MAGIC} model file")
    if int(head[1]) != MODEL_VERSION:
        raise ProtocolError(f"{path}: unsupported model version {head[1]}")

    pos = 1

    def take(expect: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise ProtocolError(f"{path}: truncated, expected '{expect}'")
        parts = lines[pos].split()
        if parts[0] != expect:
            raise ProtocolError(f"{path}: expected '{expect}', found '{parts[0]}'")
        pos += 1
        return parts[1:]

    def take_rows(count: int, width: int, label: str) -> np.ndarray:
        nonlocal pos
        rows = []
        for _ in range(count):
            if pos >= len(lines):
                raise ProtocolError(f"{path}: truncated inside {label}")
            vals = [float(v) for v in lines[pos].split()]
            if len(vals) != width:
                raise ShapeError(f"{path}: {label} row has {len(vals)} values, expected {width}")
            rows.append(vals)
            pos += 1
        return np.array(rows)

    window = int(take("window")[0])
    n_feat = int(take("features")[0])
    feature_names = tuple(take("feature_names"))
    if len(feature_names) != n_feat:
        raise ShapeError(f"{path}: {len(feature_names)} feature names for {n_feat} features")
    d, h, out = (int(v) for v in take("layers"))
    if out != 1:
        raise ShapeError(f"{path}: output layer must have 1 unit, found {out}")
    if d != window * n_feat:
        raise ShapeError(f"{path}: input dim {d} != window {window} x features {n_feat}")
    norm_mean = np.array([float(v) for v in take("norm_mean")])
    norm_std = np.array([float(v) for v in take("norm_std")])
    if len(norm_mean) != n_feat or len(norm_std) != n_feat:
        raise ShapeError(f"{path}: normalization stats must have {n_feat} entries")
    take("w1")
    w1 = take_rows(h, d, "w1")
    take("b1")
    b1 = take_rows(1, h, "b1")[0]
    take("w2")
    w2 = take_rows(1, h, "w2")
    take("b2")
    b2 = take_rows(1, 1, "b2")[0]
    meta: dict = {}
    while pos < len(lines) and lines[pos].startswith("meta "):
        _, key, *rest = lines[pos].split(" ")
        meta[key] = " ".join(rest)
        pos += 1
    if pos >= len(lines) or lines[pos] != "end":
        raise ProtocolError(f"{path}: missing end marker")
    return Classifier(
        w1=w1, b1=b1, w2=w2, b2=b2,
        norm=Normalization(mean=norm_mean, std=norm_std),
        window=window, feature_names=feature_names, meta=meta,
    )


@dataclass
class QualifyOutcome:
    """Aggregate classifier verdict for one locale at one tick."""

    locale: LocaleId | None
    status: str  # CONFIRMED or UNCONFIRMED
    fraction: float
    mean_probability: float
    n_windows: int


def qualify_locale(
    model: Classifier,
    window_vectors: np.ndarray,
    p_crit: float = 0.5,
    quorum: float = 0.25,
    locale: LocaleId | None = None,
) -> QualifyOutcome:
    """Confirm a locale when enough members score at or above p_crit.

    Both boundaries are inclusive: a member counts at exactly p_crit and the
    locale confirms at exactly the quorum fraction.
    """
    window_vectors = np.asarray(window_vectors, dtype=float)
    if window_vectors.ndim == 1:
        window_vectors = window_vectors.reshape(0, model.input_dim) if window_vectors.size == 0 else window_vectors[None, :]
    if len(window_vectors) == 0:
        raise InsufficientData("no complete feature windows in locale")
    p = model.forward_batch(window_vectors)
    fraction = float((p >= p_crit).mean())
    return QualifyOutcome(
        locale=locale,
        status=CONFIRMED if fraction >= quorum else UNCONFIRMED,
        fraction=fraction,
        mean_probability=float(p.mean()),
        n_windows=len(p),
    )


def label_from_force(
    force_history: np.ndarray,
    dt: float,
    force_threshold: float,
    sustain: float,
    end: int | None = None,
) -> bool:
    """True when force stayed at or above threshold for sustain seconds ending at `end`.

    force_history is the per-tick total normal contact force on one agent.
    """
    force_history = np.asarray(force_history, dtype=float)
    if end is None:
        end = len(force_history) - 1
    need = max(1, int(round(sustain / dt)))
    if end + 1 < need:
        raise InsufficientHistory(
            f"need {need} ticks of force history ending at tick {end}, have {end + 1}"
        )
    seg = force_history[end + 1 - need : end + 1]
    return bool(np.all(seg >= force_threshold))


def window_end_ticks(n_ticks: int, window: int, stride: int) -> list[int]:
    """End indices of complete windows: window-1, window-1+stride, ... < n_ticks."""
    if n_ticks < window:
        return []
    return list(range(window - 1, n_ticks, stride))


def extract_dataset(
    archive: "RunArchive",
    window: int = 40,
    stride: int = 10,
    label_force: float = 250.0,
    label_sustain: float = 1.0,
) -> tuple[list[LabelledSample], dict]:
    """Build labelled windows from an instrumented (full-force) run archive.

    One sample per agent per stride ticks wherever the agent has a complete
    window of features; the label is sustained ground-truth contact force
    ending at the window's final tick. Returns the samples and a class
    balance summary.
    """
    cfg = archive.config
    if cfg.mode != "full-force":
        raise ModeError(
            f"dataset extraction needs a full-force archive, this run used mode '{cfg.mode}'"
        )
    dt = cfg.dt
    feats = archive.features_by_agent()  # id -> (first_tick, matrix (T, F))
    forces = archive.force_series()  # id -> zero-filled (n_ticks,) array
    samples: list[LabelledSample] = []
    need = max(1, int(round(label_sustain / dt)))
    for agent_id in sorted(feats):
        first_tick, matrix = feats[agent_id]
        series = forces.get(agent_id)
        for e_local in window_end_ticks(len(matrix), window, stride):
            end_tick = first_tick + e_local
            if end_tick + 1 < need:
                continue
            if series is None:
                label = False
            else:
                label = label_from_force(series, dt, label_force, label_sustain, end=end_tick)
            samples.append(
                LabelledSample(
                    vector=matrix[e_local - window + 1 : e_local + 1].ravel(),
                    label=label,
                    agent_id=agent_id,
                    end_tick=end_tick,
                    source=str(archive.path),
                )
            )
    n_pos = sum(1 for s in samples if s.label)
    report = {
        "samples": len(samples),
        "positive": n_pos,
        "negative": len(samples) - n_pos,
        "positive_fraction": (n_pos / len(samples)) if samples else 0.0,
        "window": window,
        "stride": stride,
        "label_force": label_force,
        "label_sustain": label_sustain,
    }
    return samples, report


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Probability a random positive outranks a random negative (rank method, tie-aware)."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataset("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(model: Classifier, samples: list[LabelledSample], p_crit: float = 0.5) -> dict:
    """Held-out metrics: AUC plus thresholded accuracy, precision and recall."""
    if not samples:
        raise InsufficientData("no samples to evaluate")
    x = np.array([s.vector for s in samples])
    y = np.array([s.label for s in samples], dtype=bool)
    p = model.forward_batch(x)
    pred = p >= p_crit
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    tn = int((~pred & ~y).sum())
    return {
        "auc": roc_auc(y, p),
        "accuracy": (tp + tn) / len(y),
        "precision": tp / (tp + fp) if (tp + fp) else 0.0,
        "recall": tp / (tp + fn) if (tp + fn) else 0.0,
        "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        "n_pos": int(y.sum()),
        "n_neg": int((~y).sum()),
    }
