"""Epoch-loop trainer: seeded shuffling, per-epoch stimulus strength,
loss dispatch, SGD-with-momentum steps, and per-epoch metric collection.

A run is fully determined by (dataset, initial model, config): the only
randomness is the per-epoch shuffle, drawn from one generator seeded with
``cfg.seed``. Two identical runs therefore produce identical parameter
trajectories and identical metric values on a fixed kernel backend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, lambda_vector
from .losses import LossConfig, dispatch_loss, fbl_logits, schedule_alpha
from .metrics import EpochMetrics, collect
from .model import Model, OptimState, backward, forward, sgd_step

__all__ = [
    "TrainConfig",
    "RunResult",
    "NonFiniteLossError",
    "epoch_lr_schedule",
    "train",
    "evaluate",
]


class NonFiniteLossError(RuntimeError):
    """Raised when a batch produces a non-finite loss; names epoch and batch."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value


@dataclass
class TrainConfig:
    """One training run. Defaults mirror the usual small-scale recipe:
    200 epochs, batch 64, lr annealed by 100 at epochs 160 and 180."""

    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_milestones: tuple[tuple[int, float], ...] = ((160, 100.0), (180, 100.0))
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    hidden_dim: int = 64
    feat_dim: int = 16
    adjust_at_eval: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        self.lr_milestones = tuple((int(e), float(d)) for e, d in self.lr_milestones)
        epochs_list = [e for e, _ in self.lr_milestones]
        if epochs_list != sorted(epochs_list):
            raise ValueError(f"lr_milestones must be sorted by epoch, got {self.lr_milestones}")
        if any(d <= 0 for _, d in self.lr_milestones):
            raise ValueError("milestone divisors must be > 0")
        if isinstance(self.loss, dict):
            self.loss = LossConfig.from_dict(self.loss)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lr_milestones": [[e, d] for e, d in self.lr_milestones],
            "seed": self.seed,
            "loss": self.loss.to_dict(),
            "hidden_dim": self.hidden_dim,
            "feat_dim": self.feat_dim,
            "adjust_at_eval": self.adjust_at_eval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["lr_milestones"] = tuple((int(e), float(dv)) for e, dv in d.get("lr_milestones", ()))
        d["loss"] = LossConfig.from_dict(d["loss"]) if isinstance(d.get("loss"), dict) else d.get("loss", LossConfig())
        return cls(**d)


@dataclass
class RunResult:
    model: Model
    metrics: list[EpochMetrics]
    wall_time_s: float


def epoch_lr_schedule(lr: float, milestones, epochs: int) -> list[float]:
    """Learning rate for epochs 1..T; at milestone (e, d) the rate becomes
    exactly the previous rate divided by d, from epoch e on."""
    out = []
    current = lr
    for t in range(1, epochs + 1):
        for e, d in milestones:
            if e == t:
                current = current / d
        out.append(current)
    return out


def train(dataset: Dataset, model: Model, cfg: TrainConfig) -> RunResult:
    """Run the full training loop; mutates ``model`` in place.

    Per epoch t: anneal lr at milestones, fix alpha(t) from the schedule,
    shuffle the train set, sweep batches (last one may be short), update
    with SGD momentum, then record EpochMetrics. The per-class stimulus
    vector is computed from the dataset counts once, before the loop.
    """
    if model.input_dim != dataset.input_dim:
        raise ValueError(
            f"model input_dim {model.input_dim} != dataset input_dim {dataset.input_dim}"
        )
    if model.num_classes != dataset.num_classes:
        raise ValueError(
            f"model num_classes {model.num_classes} != dataset num_classes {dataset.num_classes}"
        )

    x = np.ascontiguousarray(dataset.train_x, dtype=np.float64)
    y = np.asarray(dataset.train_y, dtype=np.int64)
    n = x.shape[0]

    loss_cfg = cfg.loss.with_lambdas(lambda_vector(dataset.counts))
    lrs = epoch_lr_schedule(cfg.lr, cfg.lr_milestones, cfg.epochs)
    state = OptimState.for_model(model, lr=cfg.lr, momentum=cfg.momentum,
                                 weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)

    start = time.perf_counter()
    history: list[EpochMetrics] = []
    for t in range(1, cfg.epochs + 1):
        state.lr = lrs[t - 1]
        alpha = schedule_alpha(loss_cfg.schedule, t, cfg.epochs, loss_cfg.alpha_max)
        perm = rng.permutation(n)
        loss_sum = 0.0
        for b_idx, start_idx in enumerate(range(0, n, cfg.batch_size)):
            sel = perm[start_idx:start_idx + cfg.batch_size]
            trace = forward(model, x[sel])
            out = dispatch_loss(trace, y[sel], loss_cfg, t, cfg.epochs, dataset.counts)
            if not np.isfinite(out.loss):
                raise NonFiniteLossError(t, b_idx, out.loss)
            grads = backward(model, trace, out.dl_dz, out.dl_df_extra)
            sgd_step(model, grads, state)
            loss_sum += out.loss * sel.shape[0]
        history.append(collect(model, dataset, epoch=t, alpha=alpha, mean_loss=loss_sum / n))
    wall = time.perf_counter() - start
    return RunResult(model=model, metrics=history, wall_time_s=wall)


def evaluate(model: Model, test_x: np.ndarray, test_y: np.ndarray, *,
             lambdas: np.ndarray | None = None, alpha: float = 0.0,
             norm_eps: float = 1e-8) -> tuple[np.ndarray, float]:
    """Per-class accuracy vector and overall top-1.

    Predictions are argmax over raw logits; passing ``lambdas`` with a
    nonzero ``alpha`` instead scores the feature-balanced logits (the
    non-default `adjust_at_eval` path). Classes absent from the test set
    get NaN accuracy.
    """
    trace = forward(model, test_x)
    logits = trace.logits
    if lambdas is not None and alpha != 0.0:
        logits = fbl_logits(logits, trace.feat_norms, lambdas, alpha, norm_eps)
    pred = logits.argmax(axis=1)
    test_y = np.asarray(test_y, dtype=np.int64)
    correct = pred == test_y
    per_class = np.empty(model.num_classes)
    for j in range(model.num_classes):
        mask = test_y == j
        per_class[j] = correct[mask].mean() if mask.any() else np.nan
    return per_class, float(correct.mean())
