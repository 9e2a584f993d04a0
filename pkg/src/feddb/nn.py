"""Minimal dense network with hand-coded forward/backward passes.

The model is a plain MLP (input -> ReLU hidden layers -> K logits) stored as
numpy arrays.  Training is full-batch SGD with classical (heavy-ball)
momentum.  Everything here is a pure function over value types, so client
updates in the federation layer can run independently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

LOG_CLAMP = 1e-12  # floor applied to probabilities before taking logs


@dataclass
class ModelParams:
    """Flat collection of layer parameters.

    weights[i] has shape (fan_out, fan_in); biases[i] has shape (fan_out,).
    Layer i maps activations a -> a @ weights[i].T + biases[i].
    """

    weights: list
    biases: list

    @property
    def dims(self) -> tuple:
        """(input_dim, hidden..., n_classes) implied by the layer shapes."""
        return (self.weights[0].shape[1], *[w.shape[0] for w in self.weights])

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )

    def arrays(self):
        """All parameter arrays in a fixed order (weights then bias per layer)."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


@dataclass
class OptimizerState:
    """SGD-with-momentum state; velocity mirrors the model shape exactly."""

    velocity: ModelParams
    learning_rate: float
    momentum: float

    @classmethod
    def fresh(cls, params: ModelParams, learning_rate: float, momentum: float) -> "OptimizerState":
        if learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        zeros = ModelParams(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )
        return cls(zeros, learning_rate, momentum)


def init_mlp(input_dim: int, hidden_dims, n_classes: int, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    dims = [input_dim, *hidden_dims, n_classes]
    if any(d <= 0 for d in dims):
        raise ConfigError(f"all layer dimensions must be positive, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _as_batch(x: np.ndarray, input_dim: int):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != input_dim:
        raise ConfigError(
            f"input dimension mismatch: model expects {input_dim}, got shape {x.shape}"
        )
    return batch, single


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logits for a feature vector (d,) or batch (n, d)."""
    a, single = _as_batch(x, params.weights[0].shape[1])
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if i < last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(target: np.ndarray, pred: np.ndarray) -> float:
    """H(target, pred) = -sum_k target_k * ln(pred_k), with pred clamped below."""
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    return float(-(target * np.log(np.maximum(pred, LOG_CLAMP))).sum())


def _forward_cached(params: ModelParams, x: np.ndarray):
    """Forward pass keeping the per-layer inputs and pre-activations."""
    inputs, preacts = [], []
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        pre = a @ w.T + b
        preacts.append(pre)
        a = np.maximum(pre, 0.0) if i < last else pre
    return inputs, preacts


def backward(params: ModelParams, x: np.ndarray, targets: np.ndarray, sample_weights: np.ndarray):
    """Gradient and value of the weighted mean cross-entropy over a batch.

    loss = (1/n) * sum_i sample_weights[i] * H(targets[i], softmax(logits[i]))

    An empty batch yields zero loss and zero gradients (nothing confident to
    train on).  Targets may be one-hot rows, probability rows, or all-zero
    rows (the latter only meaningful with zero weight).
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    sample_weights = np.asarray(sample_weights, dtype=np.float64)
    grads = ModelParams(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    n = x.shape[0]
    if n == 0:
        return grads, 0.0
    if np.any(sample_weights < 0):
        raise ConfigError("sample weights must be non-negative")

    inputs, preacts = _forward_cached(params, x)
    probs = softmax(preacts[-1])
    row_ce = -(targets * np.log(np.maximum(probs, LOG_CLAMP))).sum(axis=1)
    loss = float(np.dot(sample_weights, row_ce) / n)

    # d(loss)/d(logits) for weighted-mean softmax cross-entropy
    delta = (probs - targets) * (sample_weights / n)[:, None]
    for i in range(len(params.weights) - 1, -1, -1):
        grads.weights[i][...] = delta.T @ inputs[i]
        grads.biases[i][...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (preacts[i - 1] > 0.0)
    return grads, loss


def sgd_step(params: ModelParams, grads: ModelParams, opt: OptimizerState) -> ModelParams:
    """One heavy-ball step: v <- momentum*v + g; w <- w - lr*v.

    Mutates opt.velocity; returns fresh parameter arrays.
    """
    if not grads.all_finite():
        raise NumericalError("non-finite gradient; aborting this update")
    new_w, new_b = [], []
    for w, b, gw, gb, vw, vb in zip(
        params.weights, params.biases, grads.weights, grads.biases,
        opt.velocity.weights, opt.velocity.biases,
    ):
        if vw.shape != gw.shape or vb.shape != gb.shape:
            raise ConfigError("optimizer state shape does not match gradients")
        vw *= opt.momentum
        vw += gw
        vb *= opt.momentum
        vb += gb
        new_w.append(w - opt.learning_rate * vw)
        new_b.append(b - opt.learning_rate * vb)
    out = ModelParams(new_w, new_b)
    if not out.all_finite():
        raise NumericalError("non-finite parameters after update step")
    return out
