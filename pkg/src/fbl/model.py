"""Two-layer embedding network with a bias-free linear classifier.

input -> hidden (ReLU) -> feature f (ReLU) -> logits z = Wc^T f. The ReLU
on the embedding keeps feature norms non-negative and observable; the
classifier has no bias so each logit is exactly the inner product of a
class weight vector with the feature. Forward/backward are hand-derived
and delegate the dense math to the selected kernel backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import kernels

__all__ = [
    "Model",
    "ForwardTrace",
    "Gradients",
    "OptimState",
    "init_model",
    "forward",
    "backward",
    "sgd_step",
    "save_model",
    "load_model",
]


@dataclass
class Model:
    w1: np.ndarray  # (input_dim, hidden_dim)
    b1: np.ndarray  # (hidden_dim,)
    w2: np.ndarray  # (hidden_dim, feat_dim)
    b2: np.ndarray  # (feat_dim,)
    wc: np.ndarray  # (feat_dim, num_classes), column j is class j's weight vector

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def feat_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def num_classes(self) -> int:
        return self.wc.shape[1]

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.wc)

    def copy(self) -> "Model":
        return Model(*(p.copy() for p in self.params()))


@dataclass
class ForwardTrace:
    """Cached activations for one batch, consumed by backward()."""

    x: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    feature_pre: np.ndarray
    feature: np.ndarray
    feat_norms: np.ndarray
    logits: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.wc)


@dataclass
class OptimState:
    """SGD with classic (heavy-ball) momentum: v <- m*v + g; p <- p - lr*v."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    buffers: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    @classmethod
    def for_model(cls, model: Model, lr: float, momentum: float = 0.9,
                  weight_decay: float = 0.0) -> "OptimState":
        return cls(lr=lr, momentum=momentum, weight_decay=weight_decay,
                   buffers=tuple(np.zeros_like(p) for p in model.params()))


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_model(input_dim: int, hidden_dim: int, feat_dim: int, num_classes: int,
               seed: int) -> Model:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    return Model(
        w1=_glorot_uniform(rng, input_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=_glorot_uniform(rng, hidden_dim, feat_dim),
        b2=np.zeros(feat_dim),
        wc=_glorot_uniform(rng, feat_dim, num_classes),
    )


def _as_batch(x: np.ndarray, input_dim: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ValueError(f"expected batch of shape (n, {input_dim}), got {x.shape}")
    return x


def forward(model: Model, batch_x: np.ndarray) -> ForwardTrace:
    """Run the network on a batch and cache every activation."""
    x = _as_batch(batch_x, model.input_dim)
    hidden_pre, hidden, feature_pre, feature, feat_norms, logits = kernels.forward(
        x, model.w1, model.b1, model.w2, model.b2, model.wc
    )
    return ForwardTrace(x, hidden_pre, hidden, feature_pre, feature, feat_norms, logits)


def backward(model: Model, trace: ForwardTrace, dl_dz: np.ndarray,
             dl_df_extra: np.ndarray | None = None) -> Gradients:
    """Chain rule from logit gradients (plus an optional direct feature term).

    ``dl_dz`` must come from a loss on this trace's logits and already carry
    the batch-mean factor; ``dl_df_extra`` is the loss gradient reaching the
    feature without passing through the classifier (None means zero, as in
    plain cross-entropy).
    """
    n, c = trace.logits.shape
    dl_dz = np.ascontiguousarray(dl_dz, dtype=np.float64)
    if dl_dz.shape != (n, c):
        raise ValueError(f"dl_dz shape {dl_dz.shape} does not match logits {(n, c)}")
    if dl_df_extra is not None:
        dl_df_extra = np.ascontiguousarray(dl_df_extra, dtype=np.float64)
        if dl_df_extra.shape != trace.feature.shape:
            raise ValueError(
                f"dl_df_extra shape {dl_df_extra.shape} does not match feature "
                f"{trace.feature.shape}"
            )
    grads = kernels.backward(
        trace.x, trace.hidden, trace.feature, model.w2, model.wc, dl_dz, dl_df_extra
    )
    return Gradients(*grads)


def sgd_step(model: Model, grads: Gradients, state: OptimState) -> tuple[Model, OptimState]:
    """Update parameters in place; returns the same model/state objects."""
    if len(state.buffers) != 5:
        raise ValueError("optimizer state was not created for this model")
    for p, g, v in zip(model.params(), grads.params(), state.buffers):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch in sgd_step: {p.shape} vs {g.shape} vs {v.shape}")
        kernels.sgd_update(p.reshape(-1), g.reshape(-1), v.reshape(-1),
                           state.lr, state.momentum, state.weight_decay)
    return model, state


_PARAM_KEYS = ("w1", "b1", "w2", "b2", "wc")


def save_model(model: Model, path: str | Path) -> None:
    """Checkpoint as an uncompressed .npz of named parameter arrays."""
    np.savez(path, **{k: p for k, p in zip(_PARAM_KEYS, model.params())})


def load_model(path: str | Path) -> Model:
    with np.load(path) as z:
        missing = [k for k in _PARAM_KEYS if k not in z]
        if missing:
            raise ValueError(f"checkpoint {path} is missing arrays: {missing}")
        return Model(*(np.ascontiguousarray(z[k], dtype=np.float64) for k in _PARAM_KEYS))
