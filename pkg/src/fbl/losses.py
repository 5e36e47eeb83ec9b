"""Loss zoo and curriculum schedules for long-tailed training.

The feature-balanced loss is softmax cross-entropy over adjusted logits

    z_b[s, j] = z[s, j] - alpha * lambda_j / ||f_s||

where lambda_j = log(n_max) - log(n_j) is zero for the head class and grows
for rarer classes, and alpha ramps from ~0 to alpha_max over training on one
of five curriculum schedules. Tail-labeled samples can only recover their
target logit by growing their feature norm, which is the intended pressure.

Also here: plain softmax CE, the additive constraint form of the same idea
(kept for identity checking, not training), and two simplified comparison
baselines (prior logit shift, per-class target margin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .data import ClassCounts
from .model import ForwardTrace

__all__ = [
    "ScheduleKind",
    "LossKind",
    "LossConfig",
    "LossOutput",
    "schedule_alpha",
    "softmax_ce",
    "fbl_logits",
    "fbl_loss",
    "constraint_form_loss",
    "baseline_logit_adjust",
    "baseline_margin",
    "dispatch_loss",
]


class ScheduleKind(str, Enum):
    LINEAR_DECREASE = "linear_decrease"
    LINEAR_INCREASE = "linear_increase"
    SINE_INCREASE = "sine_increase"
    COSINE_INCREASE = "cosine_increase"
    PARABOLIC_INCREASE = "parabolic_increase"


class LossKind(str, Enum):
    CE = "ce"
    FBL = "fbl"
    CONSTRAINT_FORM = "constraint_form"
    LOGIT_ADJUST = "logit_adjust"
    MARGIN = "margin"


@dataclass
class LossConfig:
    """Which loss to train with and its knobs.

    ``lambdas`` is the per-class stimulus vector (filled from the dataset's
    class counts by the trainer); ``norm_eps`` guards the division by the
    feature norm; ``detach_norm`` drops the gradient pathway through ||f||
    in the adjustment term (the logit pathway is always kept).
    """

    kind: LossKind = LossKind.CE
    schedule: ScheduleKind = ScheduleKind.PARABOLIC_INCREASE
    alpha_max: float = 1.0
    norm_eps: float = 1e-8
    lambdas: np.ndarray | None = None
    baseline_tau: float = 1.0
    baseline_margin_scale: float = 1.0
    detach_norm: bool = False

    def __post_init__(self):
        self.kind = LossKind(self.kind)
        self.schedule = ScheduleKind(self.schedule)
        if self.alpha_max < 0:
            raise ValueError(f"alpha_max must be >= 0, got {self.alpha_max}")
        if not 0 < self.norm_eps <= 1e-3:
            raise ValueError(f"norm_eps must be in (0, 1e-3], got {self.norm_eps}")
        if self.lambdas is not None:
            self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
            if (self.lambdas < 0).any():
                raise ValueError("lambdas must be non-negative")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "schedule": self.schedule.value,
            "alpha_max": self.alpha_max,
            "norm_eps": self.norm_eps,
            "lambdas": None if self.lambdas is None else list(map(float, self.lambdas)),
            "baseline_tau": self.baseline_tau,
            "baseline_margin_scale": self.baseline_margin_scale,
            "detach_norm": self.detach_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)

    def with_lambdas(self, lambdas: np.ndarray) -> "LossConfig":
        return replace(self, lambdas=np.asarray(lambdas, dtype=np.float64))


@dataclass
class LossOutput:
    """Batch-mean loss plus everything backward() needs.

    ``dl_dz`` already carries the 1/batch factor; ``dl_df_extra`` is the
    gradient reaching the feature directly (None for losses without a
    feature-norm term); ``probs`` rows are proper distributions.
    """

    loss: float
    dl_dz: np.ndarray
    probs: np.ndarray
    dl_df_extra: np.ndarray | None = None


def schedule_alpha(kind: ScheduleKind, t: int, total_epochs: int, alpha_max: float) -> float:
    """Stimulus strength at (1-based) epoch t of total_epochs.

    Multipliers on alpha_max: 1-t/T, t/T, sin(pi*t/2T), 1-cos(pi*t/2T),
    (t/T)^2; all map [1, T] into [0, 1].
    """
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 1 <= t <= total_epochs:
        raise ValueError(f"epoch t={t} outside [1, {total_epochs}]")
    r = t / total_epochs
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.LINEAR_DECREASE:
        m = 1.0 - r
    elif kind is ScheduleKind.LINEAR_INCREASE:
        m = r
    elif kind is ScheduleKind.SINE_INCREASE:
        m = math.sin(r * math.pi / 2.0)
    elif kind is ScheduleKind.COSINE_INCREASE:
        m = 1.0 - math.cos(r * math.pi / 2.0)
    else:
        m = r * r
    return alpha_max * m


def _softmax_ce_core(logits: np.ndarray, labels: np.ndarray):
    """Stable softmax CE: (mean loss, dL/dlogits with 1/b folded in, probs)."""
    n = logits.shape[0]
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    log_p_y = shifted[rows, labels] - np.log(denom[:, 0])
    loss = float(-log_p_y.mean())
    dl_dz = probs.copy()
    dl_dz[rows, labels] -= 1.0
    dl_dz /= n
    return loss, dl_dz, probs


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("labels out of range")
    return labels


def softmax_ce(logits: np.ndarray, labels: np.ndarray) -> LossOutput:
    """Plain softmax cross-entropy, batch mean, max-subtraction stabilized."""
    labels = _check_labels(logits, labels)
    loss, dl_dz, probs = _softmax_ce_core(logits, labels)
    return LossOutput(loss=loss, dl_dz=dl_dz, probs=probs, dl_df_extra=None)


def fbl_logits(logits: np.ndarray, feat_norms: np.ndarray, lambdas: np.ndarray,
               alpha: float, norm_eps: float) -> np.ndarray:
    """Feature-balanced logits: z - alpha * lambda_j / max(||f||, norm_eps)."""
    norms = np.maximum(np.asarray(feat_norms, dtype=np.float64), norm_eps)
    return logits - alpha * np.asarray(lambdas, dtype=np.float64)[None, :] / norms[:, None]


def _require_lambdas(cfg: LossConfig, num_classes: int) -> np.ndarray:
    if cfg.lambdas is None:
        raise ValueError("LossConfig.lambdas is not set; build it with lambda_vector(counts)")
    if cfg.lambdas.shape != (num_classes,):
        raise ValueError(f"lambdas length {cfg.lambdas.shape} != num_classes {num_classes}")
    return cfg.lambdas


def fbl_loss(trace: ForwardTrace, labels: np.ndarray, cfg: LossConfig,
             t: int, total_epochs: int) -> LossOutput:
    """Feature-balanced loss on a forward trace at epoch t.

    Softmax CE over the adjusted logits. The returned ``dl_df_extra`` is the
    chain-rule term through ||f||:

        row_s = (sum_j dl_dz[s, j] * alpha * lambda_j / ||f_s||^2) * f_s/||f_s||,

    zeroed where ||f_s|| <= norm_eps (the adjustment saturates there) or when
    ``detach_norm`` is set. When the stimulus is identically zero (alpha == 0
    or all lambdas zero) this reduces exactly to softmax CE.
    """
    z = trace.logits
    labels = _check_labels(z, labels)
    lambdas = _require_lambdas(cfg, z.shape[1])
    alpha = schedule_alpha(cfg.schedule, t, total_epochs, cfg.alpha_max)

    if alpha == 0.0 or not lambdas.any():
        loss, dl_dz, probs = _softmax_ce_core(z, labels)
        return LossOutput(loss, dl_dz, probs, np.zeros_like(trace.feature))

    norms = np.maximum(trace.feat_norms, cfg.norm_eps)
    z_b = z - alpha * lambdas[None, :] / norms[:, None]
    loss, dl_dz, probs = _softmax_ce_core(z_b, labels)

    if cfg.detach_norm:
        dl_df_extra = np.zeros_like(trace.feature)
    else:
        coef = (dl_dz * (alpha * lambdas)[None, :]).sum(axis=1) / (norms * norms)
        coef[trace.feat_norms <= cfg.norm_eps] = 0.0
        dl_df_extra = coef[:, None] * (trace.feature / norms[:, None])
    return LossOutput(loss, dl_dz, probs, dl_df_extra)


def constraint_form_loss(trace: ForwardTrace, labels: np.ndarray, cfg: LossConfig,
                         t: int, total_epochs: int) -> float:
    """Additive form: mean of [-log softmax(z)_y + alpha*lambda_y/||f||].

    Per sample this equals -log(exp(z_y - alpha*lambda_y/||f||) / sum_j exp(z_j))
    exactly; kept to assert that identity, not for training (the per-class
    "probabilities" it implies do not sum to one, which is what the
    feature-balanced logits fix).
    """
    z = trace.logits
    labels = _check_labels(z, labels)
    lambdas = _require_lambdas(cfg, z.shape[1])
    alpha = schedule_alpha(cfg.schedule, t, total_epochs, cfg.alpha_max)
    rows = np.arange(z.shape[0])
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    ce = lse - z[rows, labels]
    penalty = alpha * lambdas[labels] / np.maximum(trace.feat_norms, cfg.norm_eps)
    return float((ce + penalty).mean())


def baseline_logit_adjust(logits: np.ndarray, labels: np.ndarray, counts: ClassCounts,
                          tau: float) -> LossOutput:
    """Prior-shift baseline: CE over z_j + tau * log(n_j / N)."""
    labels = _check_labels(logits, labels)
    n = counts.as_array()
    if n.shape[0] != logits.shape[1]:
        raise ValueError(f"counts length {n.shape[0]} != num classes {logits.shape[1]}")
    adjusted = logits + tau * np.log(n / n.sum())[None, :]
    loss, dl_dz, probs = _softmax_ce_core(adjusted, labels)
    return LossOutput(loss, dl_dz, probs, dl_df_extra=None)


def baseline_margin(logits: np.ndarray, labels: np.ndarray, counts: ClassCounts,
                    scale: float) -> LossOutput:
    """Per-class margin baseline: CE with z_y - scale / n_y^(1/4) at the target."""
    labels = _check_labels(logits, labels)
    n = counts.as_array()
    if n.shape[0] != logits.shape[1]:
        raise ValueError(f"counts length {n.shape[0]} != num classes {logits.shape[1]}")
    adjusted = logits.copy()
    rows = np.arange(logits.shape[0])
    adjusted[rows, labels] -= scale / n[labels] ** 0.25
    loss, dl_dz, probs = _softmax_ce_core(adjusted, labels)
    return LossOutput(loss, dl_dz, probs, dl_df_extra=None)


def dispatch_loss(trace: ForwardTrace, labels: np.ndarray, cfg: LossConfig,
                  t: int, total_epochs: int, counts: ClassCounts | None = None) -> LossOutput:
    """Route a training batch to the configured loss."""
    if cfg.kind is LossKind.CE:
        return softmax_ce(trace.logits, labels)
    if cfg.kind is LossKind.FBL:
        return fbl_loss(trace, labels, cfg, t, total_epochs)
    if cfg.kind is LossKind.CONSTRAINT_FORM:
        raise ValueError(
            "constraint_form is an identity-check loss without gradients; "
            "train with kind='fbl' instead"
        )
    if counts is None:
        raise ValueError(f"loss kind {cfg.kind.value!r} needs the dataset's class counts")
    if cfg.kind is LossKind.LOGIT_ADJUST:
        return baseline_logit_adjust(trace.logits, labels, counts, cfg.baseline_tau)
    if cfg.kind is LossKind.MARGIN:
        return baseline_margin(trace.logits, labels, counts, cfg.baseline_margin_scale)
    raise ValueError(f"unknown loss kind {cfg.kind!r}")
