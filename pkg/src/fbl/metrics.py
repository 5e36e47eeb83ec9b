"""Per-epoch diagnostics: accuracies, feature norms, classifier weight norms.

Feature-norm statistics are measured on the balanced test split, per class,
every epoch; the trajectories make the head/tail norm dynamics visible and
``norm_gap_area`` integrates the gap between two runs' trajectories for one
class. Classifier weight norms track how strongly each class's weight vector
has been grown or suppressed by training.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

from . import model as model_ops
from .data import Dataset

if TYPE_CHECKING:
    from .train import RunResult

__all__ = [
    "EpochMetrics",
    "collect",
    "norm_gap_area",
    "weight_norm_rank_correlation",
    "metrics_csv_header",
    "metrics_csv_row",
    "write_metrics_csv",
]


@dataclass
class EpochMetrics:
    epoch: int
    alpha: float
    mean_loss: float
    overall_acc: float
    per_class_acc: np.ndarray
    per_class_feat_norm_mean: np.ndarray
    per_class_feat_norm_min: np.ndarray
    per_class_feat_norm_max: np.ndarray
    per_class_weight_norm: np.ndarray


def collect(model, dataset: Dataset, epoch: int, alpha: float, mean_loss: float) -> EpochMetrics:
    """Measure one epoch's diagnostics on the test split.

    Accuracies come from raw-logit argmax; feature norms are per-class
    mean/min/max of ||f|| over the class's test samples; weight norms are
    Euclidean norms of the classifier columns.
    """
    c = dataset.num_classes
    trace = model_ops.forward(model, dataset.test_x)
    pred = trace.logits.argmax(axis=1)
    correct = pred == dataset.test_y

    per_class_acc = np.empty(c)
    fnorm_mean = np.empty(c)
    fnorm_min = np.empty(c)
    fnorm_max = np.empty(c)
    for j in range(c):
        mask = dataset.test_y == j
        if mask.any():
            per_class_acc[j] = correct[mask].mean()
            norms_j = trace.feat_norms[mask]
            fnorm_mean[j] = norms_j.mean()
            fnorm_min[j] = norms_j.min()
            fnorm_max[j] = norms_j.max()
        else:
            per_class_acc[j] = np.nan
            fnorm_mean[j] = fnorm_min[j] = fnorm_max[j] = np.nan

    return EpochMetrics(
        epoch=epoch,
        alpha=float(alpha),
        mean_loss=float(mean_loss),
        overall_acc=float(correct.mean()),
        per_class_acc=per_class_acc,
        per_class_feat_norm_mean=fnorm_mean,
        per_class_feat_norm_min=fnorm_min,
        per_class_feat_norm_max=fnorm_max,
        per_class_weight_norm=np.linalg.norm(model.wc, axis=0),
    )


def norm_gap_area(run_a: "RunResult", run_b: "RunResult", class_j: int) -> float:
    """Trapezoidal integral over epochs of (fnorm_a[j] - fnorm_b[j]).

    Positive when run_a grew larger mean feature norms for class j. Both
    runs must have the same number of epochs.
    """
    if len(run_a.metrics) != len(run_b.metrics):
        raise ValueError(
            f"runs have different epoch counts: {len(run_a.metrics)} vs {len(run_b.metrics)}"
        )
    gap = np.array(
        [
            ma.per_class_feat_norm_mean[class_j] - mb.per_class_feat_norm_mean[class_j]
            for ma, mb in zip(run_a.metrics, run_b.metrics)
        ]
    )
    if gap.size == 1:
        return 0.0
    return float(np.trapezoid(gap))


def weight_norm_rank_correlation(counts, weight_norms: np.ndarray) -> float:
    """Spearman rank correlation between class sizes and classifier weight norms.

    NaN when either input is constant (balanced counts), where ranks are
    undefined.
    """
    counts_arr = counts.as_array() if hasattr(counts, "as_array") else np.asarray(counts, float)
    norms_arr = np.asarray(weight_norms, dtype=np.float64)
    if np.ptp(counts_arr) == 0 or np.ptp(norms_arr) == 0:
        return float("nan")
    return float(stats.spearmanr(counts_arr, norms_arr).statistic)


def metrics_csv_header(num_classes: int) -> str:
    cols = ["epoch", "alpha", "loss", "overall_acc"]
    cols += [f"acc_c{j}" for j in range(num_classes)]
    cols += [f"fnorm_c{j}" for j in range(num_classes)]
    cols += [f"wnorm_c{j}" for j in range(num_classes)]
    cols += [f"fnorm_min_c{j}" for j in range(num_classes)]
    cols += [f"fnorm_max_c{j}" for j in range(num_classes)]
    return ",".join(cols)


def metrics_csv_row(m: EpochMetrics) -> str:
    vals = [str(m.epoch), repr(m.alpha), repr(m.mean_loss), repr(m.overall_acc)]
    for vec in (m.per_class_acc, m.per_class_feat_norm_mean, m.per_class_weight_norm,
                m.per_class_feat_norm_min, m.per_class_feat_norm_max):
        vals += [repr(float(v)) for v in vec]
    return ",".join(vals)


def write_metrics_csv(metrics: list[EpochMetrics], path_or_buf) -> None:
    """Write the per-epoch metrics table; deterministic for equal metrics."""
    if not metrics:
        raise ValueError("no metrics to write")
    num_classes = metrics[0].per_class_acc.shape[0]
    lines = [metrics_csv_header(num_classes)]
    lines += [metrics_csv_row(m) for m in metrics]
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, io.TextIOBase):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as f:
            f.write(text)
