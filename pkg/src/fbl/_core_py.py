"""Pure-numpy kernels: reference implementation of the compiled core.

Same signatures as ``fbl._core``; selected by ``fbl.backend`` when the
compiled extension is unavailable or ``FBL_BACKEND=python``.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def forward(x, w1, b1, w2, b2, wc):
    """input -> hidden(ReLU) -> feature(ReLU) -> logits, with caches.

    Returns (hidden_pre, hidden, feature_pre, feature, feat_norms, logits).
    """
    hidden_pre = x @ w1 + b1
    hidden = np.maximum(hidden_pre, 0.0)
    feature_pre = hidden @ w2 + b2
    feature = np.maximum(feature_pre, 0.0)
    feat_norms = np.sqrt(np.einsum("ij,ij->i", feature, feature))
    logits = feature @ wc
    return hidden_pre, hidden, feature_pre, feature, feat_norms, logits


def backward(x, hidden, feature, w2, wc, dl_dz, dl_df_extra=None):
    """Backpropagate logit (and optional direct feature) gradients.

    ``dl_dz`` is d(loss)/d(logits) for the batch; ``dl_df_extra`` is an
    additional d(loss)/d(feature) term that bypasses the classifier (None
    means zero). Returns (dw1, db1, dw2, db2, dwc).
    """
    dwc = feature.T @ dl_dz
    d_feature = dl_dz @ wc.T
    if dl_df_extra is not None:
        d_feature = d_feature + dl_df_extra
    d_feature_pre = np.where(feature > 0.0, d_feature, 0.0)
    dw2 = hidden.T @ d_feature_pre
    db2 = d_feature_pre.sum(axis=0)
    d_hidden = d_feature_pre @ w2.T
    d_hidden_pre = np.where(hidden > 0.0, d_hidden, 0.0)
    dw1 = x.T @ d_hidden_pre
    db1 = d_hidden_pre.sum(axis=0)
    return dw1, db1, dw2, db2, dwc


def sgd_update(param, grad, buf, lr, momentum, weight_decay):
    """Heavy-ball step in place: v <- momentum*v + g; p <- p - lr*v."""
    if weight_decay != 0.0:
        grad = grad + weight_decay * param
    buf *= momentum
    buf += grad
    param -= lr * buf
