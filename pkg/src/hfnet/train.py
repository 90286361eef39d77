"""Training protocol: epoch loop, checkpoint cadence, selection, evaluation.

Training follows a fixed-epoch schedule (default 150 epochs, checkpoints
every 10), then the checkpoint with the best validation ACC+AUC becomes the
final classifier.  Tasks are binary with the disease class positive:
nl_ad (NL vs AD), nl_pmci (NL vs pMCI), smci_pmci (sMCI vs pMCI).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .cohort import CohortManifest
from .errors import ConfigError, DataError, DivergenceError
from .metrics import MetricsReport, evaluate_scores
from .models import ARCH_IDS, ModelGraph, build_model
from .nifti import read_volume
from .nn.layers import softmax_cross_entropy
from .optim import Adam

__all__ = [
    "TASKS",
    "TrainConfig",
    "TrainResult",
    "load_task_data",
    "run_epochs",
    "evaluate_model",
    "train",
    "select_best_checkpoint",
    "cross_task_evaluate",
]

# task -> (negative class, positive/disease class)
TASKS = {
    "nl_ad": ("NL", "AD"),
    "nl_pmci": ("NL", "pMCI"),
    "smci_pmci": ("sMCI", "pMCI"),
}

MODALITIES = ("mri", "pet")


@dataclass
class TrainConfig:
    task: str = "nl_ad"
    arch: str = "single"
    modality: str = "mri"  # input modality for the single-modality arch
    width: float = 1.0
    epochs: int = 150
    batch_size: int | None = None  # default: 16 single-modality, 8 fusion
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_p: float = 0.5
    checkpoint_interval: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {sorted(TASKS)}, got {self.task!r}")
        if self.arch not in ARCH_IDS:
            raise ConfigError(f"arch must be one of {ARCH_IDS}, got {self.arch!r}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.epochs < 1 or self.checkpoint_interval < 1:
            raise ConfigError("epochs and checkpoint_interval must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f"betas must be in (0, 1), got {self.beta1}, {self.beta2}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 16 if self.arch == "single" else 8

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)


def _input_channels(arch):
    return 1 if arch == "single" else 2


def load_task_data(manifest: CohortManifest, task, split, arch="single", modality="mri", cache=None):
    """Assemble (X, y) arrays for one task and split from processed volumes.

    X is (N, C, D, H, W) float32 with C=1 (chosen modality) for the single
    arch and C=2 (MRI, PET) for fusion archs; y holds 0 for the control
    class and 1 for the disease class.
    """
    neg, pos = TASKS[task]
    samples = [s for s in manifest.samples_in(split) if s.label in (neg, pos)]
    if not samples:
        raise DataError(f"no {neg}/{pos} samples in split {split!r}")
    cache = cache if cache is not None else {}

    def fetch(rel_path):
        if rel_path not in cache:
            cache[rel_path] = read_volume(manifest.resolve(rel_path)).voxels
        return cache[rel_path]

    xs, ys = [], []
    for s in samples:
        if arch == "single":
            channels = [fetch(s.mri_path if modality == "mri" else s.pet_path)]
        else:
            channels = [fetch(s.mri_path), fetch(s.pet_path)]
        xs.append(np.stack(channels))
        ys.append(1 if s.label == pos else 0)
    dims = {x.shape for x in xs}
    if len(dims) != 1:
        raise DataError(f"volumes in split {split!r} have mixed shapes: {sorted(dims)}")
    return np.stack(xs).astype(np.float32), np.array(ys, dtype=np.int64)


def _check_two_classes(y, task):
    if len(np.unique(y)) < 2:
        raise DataError(f"split for task {task!r} holds a single class")


def run_epochs(model: ModelGraph, X, y, config: TrainConfig, on_epoch=None):
    """The core loop: seeded shuffling, mini-batches, backprop, ADAM steps."""
    n = X.shape[0]
    bs = config.resolved_batch_size()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    model.reseed_dropout(config.seed)
    adam = Adam(
        model.distinct_parameters().values(),
        lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.eps,
    )
    eye = np.eye(2, dtype=X.dtype)
    starts = list(range(0, n, bs))
    if len(starts) > 1 and n - starts[-1] == 1:
        # a lone trailing sample cannot feed train-mode batch norm when the
        # deepest grid is a single voxel; fold it into the previous batch
        starts.pop()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i, start in enumerate(starts):
            stop = starts[i + 1] if i + 1 < len(starts) else n
            idx = order[start:stop]
            model.zero_grad()
            logits = model.forward_logits(X[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, eye[y[idx]])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            model.backward(dlogits)
            adam.step()
            total += loss * len(idx)
        if on_epoch is not None:
            on_epoch(epoch, total / n)
    return model


def evaluate_model(model: ModelGraph, X, y, threshold=0.5, batch_size=32) -> MetricsReport:
    scores = []
    for start in range(0, X.shape[0], batch_size):
        probs = model.forward(X[start:start + batch_size], train=False)
        scores.extend(zip(probs[:, 1].tolist(), y[start:start + batch_size].tolist()))
    return evaluate_scores(scores, threshold)


@dataclass
class TrainResult:
    model: ModelGraph
    checkpoint_paths: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)  # (epoch, train_loss, val_acc, val_auc)
    log_path: str | None = None


def train(config: TrainConfig, manifest: CohortManifest, out_dir, model=None) -> TrainResult:
    """Run the full protocol and leave checkpoints plus a per-epoch log in out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    cache = {}
    X_train, y_train = load_task_data(manifest, config.task, "train", config.arch, config.modality, cache)
    X_val, y_val = load_task_data(manifest, config.task, "val", config.arch, config.modality, cache)
    _check_two_classes(y_train, config.task)
    _check_two_classes(y_val, config.task)

    if model is None:
        model = build_model(
            config.arch, width=config.width, input_dims=X_train.shape[2:],
            dropout_p=config.dropout_p, seed=config.seed,
        )
    result = TrainResult(model=model)

    def on_epoch(epoch, mean_loss):
        val_report = evaluate_model(model, X_val, y_val)
        result.log_rows.append((epoch, mean_loss, val_report.acc, val_report.auc))
        if epoch % config.checkpoint_interval == 0 or epoch == config.epochs:
            path = os.path.join(out_dir, f"checkpoint_ep{epoch:04d}.hfn")
            meta = {
                "epoch": epoch,
                "seed": config.seed,
                "task": config.task,
                "arch": config.arch,
                "modality": config.modality,
            }
            save_checkpoint(model, path, meta=meta)
            result.checkpoint_paths.append(path)

    run_epochs(model, X_train, y_train, config, on_epoch)

    result.log_path = os.path.join(out_dir, "train_log.csv")
    with open(result.log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_acc", "val_auc"])
        for row in result.log_rows:
            writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    return result


def select_best_checkpoint(checkpoint_paths, X_val, y_val):
    """Pick the checkpoint maximizing validation ACC+AUC (ties: later epoch).

    Returns (path, report).  The ranking key uses only checkpoint content,
    so the choice is invariant to the order paths are given in.
    """
    if not checkpoint_paths:
        raise DataError("no checkpoints to select from")
    best = None
    for path in checkpoint_paths:
        model = load_checkpoint(path)
        report = evaluate_model(model, X_val, y_val)
        key = (report.acc + report.auc, model.meta.get("epoch", -1), os.path.basename(path))
        if best is None or key > best[0]:
            best = (key, path, report)
    return best[1], best[2]


def cross_task_evaluate(checkpoint_path, manifest: CohortManifest, task, split="test") -> MetricsReport:
    """Evaluate a trained checkpoint on another task's samples, no retraining.

    The target task decides the label mapping (positive = disease class of
    that task); the input layout follows the checkpoint's arch/modality.
    """
    if task not in TASKS:
        raise ConfigError(f"task must be one of {sorted(TASKS)}, got {task!r}")
    model = load_checkpoint(checkpoint_path)
    arch = model.arch_id
    modality = model.meta.get("modality", "mri")
    X, y = load_task_data(manifest, task, split, arch, modality)
    _check_two_classes(y, task)
    return evaluate_model(model, X, y)
