import numpy as np
import pytest
from hypothesis import strategies as st

from feddb import nn


@st.composite
def simplex_vectors(draw, min_k=2, max_k=10):
    """Random points on the probability simplex via softmax of bounded logits."""
    k = draw(st.integers(min_value=min_k, max_value=max_k))
    logits = draw(
        st.lists(
            st.floats(min_value=-8.0, max_value=8.0, allow_nan=False),
            min_size=k,
            max_size=k,
        )
    )
    return nn.softmax(np.asarray(logits, dtype=np.float64))


@st.composite
def simplex_pairs(draw, min_k=2, max_k=10):
    k = draw(st.integers(min_value=min_k, max_value=max_k))
    def vec():
        logits = draw(
            st.lists(
                st.floats(min_value=-8.0, max_value=8.0, allow_nan=False),
                min_size=k,
                max_size=k,
            )
        )
        return nn.softmax(np.asarray(logits, dtype=np.float64))
    return vec(), vec()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mlp(rng, input_dim=3, hidden=(4,), n_classes=3, scale=1.0):
    params = nn.init_mlp(input_dim, hidden, n_classes, rng)
    for w in params.weights:
        w *= scale
    for b in params.biases:
        b[...] = rng.normal(0.0, 0.3 * scale, size=b.shape)
    return params


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central finite differences of loss_fn over every model parameter."""
    grads = nn.ModelParams(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    for arr, out in zip(params.arrays(), grads.arrays()):
        flat, oflat = arr.ravel(), out.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn(params)
            flat[i] = orig - h
            lo = loss_fn(params)
            flat[i] = orig
            oflat[i] = (hi - lo) / (2.0 * h)
    return grads


def max_relative_error(analytic: nn.ModelParams, numeric: nn.ModelParams, floor=1e-6) -> float:
    worst = 0.0
    for a, b in zip(analytic.arrays(), numeric.arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
