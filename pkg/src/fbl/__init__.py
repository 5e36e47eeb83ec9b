"""Feature-balanced loss for long-tailed classification.

Synthetic long-tailed data, a small feed-forward network with explicit
embedding features and hand-derived backprop, the feature-balanced loss
with curriculum stimulus schedules plus baselines, and per-class
diagnostics. Heavy per-batch kernels run in a compiled extension when
built (see ``fbl.backend``).
"""

from .backend import active_backend, available_backends
from .data import (
    ClassCounts,
    Dataset,
    SynthSpec,
    lambda_vector,
    load_dataset,
    make_class_counts,
    save_dataset,
    synth_dataset,
)
from .losses import (
    LossConfig,
    LossKind,
    LossOutput,
    ScheduleKind,
    baseline_logit_adjust,
    baseline_margin,
    constraint_form_loss,
    dispatch_loss,
    fbl_logits,
    fbl_loss,
    schedule_alpha,
    softmax_ce,
)
from .metrics import (
    EpochMetrics,
    collect,
    norm_gap_area,
    weight_norm_rank_correlation,
    write_metrics_csv,
)
from .model import (
    ForwardTrace,
    Gradients,
    Model,
    OptimState,
    backward,
    forward,
    init_model,
    load_model,
    save_model,
    sgd_step,
)
from .train import (
    NonFiniteLossError,
    RunResult,
    TrainConfig,
    epoch_lr_schedule,
    evaluate,
    train,
)

__version__ = "0.1.0"
