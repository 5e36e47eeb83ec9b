import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_random_trace(rng, batch, num_classes, feat_dim, logit_range=8.0):
    """ForwardTrace stand-in with strictly positive features, for z-level tests."""
    from fbl.model import ForwardTrace

    feature = np.abs(rng.normal(size=(batch, feat_dim))) + 0.1
    logits = rng.uniform(-logit_range, logit_range, size=(batch, num_classes))
    dummy = np.zeros((batch, 1))
    return ForwardTrace(
        x=dummy, hidden_pre=dummy, hidden=dummy, feature_pre=feature,
        feature=feature, feat_norms=np.linalg.norm(feature, axis=1), logits=logits,
    )
