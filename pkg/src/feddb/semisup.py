"""Client-side semi-supervised machinery.

A model trained on class-imbalanced data absorbs a biased label prior; its
mean softmax output over the (weakly augmented) unlabeled pool -- the APP-U
-- is a usable estimate of that prior.  Debiased pseudo-labeling divides the
per-sample prediction by this estimate and renormalizes, which under a
uniform target prior is exactly the Bayes posterior correction, then applies
the usual confidence threshold.  The baseline path thresholds the raw
predictions instead.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .data import LabeledSet, strong_augment, weak_augment
from .errors import ConfigError, EstimatorError
from .simplex import require_simplex

PRIOR_FLOOR = 1e-8  # floor on prior entries before division


@dataclass
class AppUState:
    """Momentum-accumulated prediction prior for one client.

    Seeded on the client's first pseudo-labeling pass, then blended as
    value <- gamma * value + (1 - gamma) * fresh after every local epoch.
    Persists across rounds; never reset.
    """

    gamma: float
    value: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"accumulation coefficient must be in [0, 1), got {self.gamma}")

    @property
    def initialized(self) -> bool:
        return self.value is not None

    def seed_if_empty(self, fresh: np.ndarray) -> None:
        if self.value is None:
            self.value = np.array(fresh, dtype=np.float64, copy=True)

    def accumulate(self, fresh: np.ndarray) -> None:
        fresh = require_simplex(fresh, "fresh prior estimate")
        if self.value is None:
            self.value = fresh.copy()
        else:
            self.value = blend_prior(self.value, fresh, self.gamma)


def blend_prior(value: np.ndarray, fresh: np.ndarray, gamma: float) -> np.ndarray:
    """gamma * value + (1 - gamma) * fresh; convex, so closed on the simplex."""
    return gamma * np.asarray(value, dtype=np.float64) + (1.0 - gamma) * np.asarray(
        fresh, dtype=np.float64
    )


def mean_prediction(probs: np.ndarray) -> np.ndarray:
    """Mean of prediction rows; stays on the simplex up to float error."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise EstimatorError("prior estimation needs a non-empty batch of predictions")
    return probs.mean(axis=0)


def compute_appu(
    params: nn.ModelParams,
    unlabeled_x: np.ndarray,
    rng: np.random.Generator,
    sigma_weak: float,
) -> np.ndarray:
    """Average prediction probability over weak augmentations of a pool."""
    unlabeled_x = np.asarray(unlabeled_x, dtype=np.float64)
    if unlabeled_x.shape[0] == 0:
        raise EstimatorError("cannot estimate a prediction prior on an empty unlabeled set")
    probs = nn.softmax(nn.forward(params, weak_augment(unlabeled_x, rng, sigma_weak)))
    return mean_prediction(probs)


def debias(p: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Divide predictions by the prior estimate and renormalize.

    Accepts a single distribution (K,) or a batch (n, K); the prior is a
    single (K,) distribution.  With a uniform prior this is the identity.
    """
    p = np.asarray(p, dtype=np.float64)
    prior = require_simplex(prior, "prior estimate")
    ratios = p / np.maximum(prior, PRIOR_FLOOR)
    return ratios / ratios.sum(axis=-1, keepdims=True)


def threshold_onehot(probs: np.ndarray, tau: float) -> np.ndarray:
    """One-hot rows where max confidence >= tau, all-zero rows elsewhere.

    Argmax ties break toward the lowest class index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    winners = np.argmax(probs, axis=1)
    confident = probs[np.arange(n), winners] >= tau
    out = np.zeros_like(probs)
    rows = np.flatnonzero(confident)
    out[rows, winners[rows]] = 1.0
    return out


def debiased_pseudo_labels(
    params: nn.ModelParams,
    unlabeled_x: np.ndarray,
    appu_state: AppUState,
    tau: float,
    rng: np.random.Generator,
    sigma_weak: float,
):
    """Pseudo-label the pool with the prior correction applied first.

    One weak-augmentation pass produces both the fresh prior estimate and the
    per-sample predictions it corrects.  The fresh estimate seeds the
    client's accumulator if this is its first pass.  Returns (labels, fresh).
    """
    unlabeled_x = np.asarray(unlabeled_x, dtype=np.float64)
    if unlabeled_x.shape[0] == 0:
        raise EstimatorError("cannot pseudo-label an empty unlabeled set")
    probs = nn.softmax(nn.forward(params, weak_augment(unlabeled_x, rng, sigma_weak)))
    fresh = mean_prediction(probs)
    labels = threshold_onehot(debias(probs, fresh), tau)
    appu_state.seed_if_empty(fresh)
    return labels, fresh


def baseline_pseudo_labels(
    params: nn.ModelParams,
    unlabeled_x: np.ndarray,
    tau: float,
    rng: np.random.Generator,
    sigma_weak: float,
) -> np.ndarray:
    """Thresholded pseudo-labels on raw predictions (no prior correction)."""
    unlabeled_x = np.asarray(unlabeled_x, dtype=np.float64)
    if unlabeled_x.shape[0] == 0:
        raise EstimatorError("cannot pseudo-label an empty unlabeled set")
    probs = nn.softmax(nn.forward(params, weak_augment(unlabeled_x, rng, sigma_weak)))
    return threshold_onehot(probs, tau)


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((y.shape[0], n_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def supervised_loss(
    params: nn.ModelParams,
    labeled: LabeledSet,
    rng: np.random.Generator,
    sigma_weak: float,
):
    """Mean cross-entropy on weak augmentations of the labeled set."""
    if len(labeled) == 0:
        raise ConfigError("client has no labeled samples; cannot train")
    targets = one_hot(labeled.y, params.n_classes)
    xw = weak_augment(labeled.x, rng, sigma_weak)
    grads, loss = nn.backward(params, xw, targets, np.ones(len(labeled)))
    return loss, grads


def unsupervised_loss(
    params: nn.ModelParams,
    unlabeled_x: np.ndarray,
    pseudo_labels: np.ndarray,
    rng: np.random.Generator,
    sigma_strong: float,
    mask_prob: float,
):
    """Consistency loss on strong augmentations against fixed pseudo-labels.

    Normalized by the full pool size, not the confident count: unconfident
    rows (all-zero pseudo-labels) enter with weight zero.
    """
    unlabeled_x = np.asarray(unlabeled_x, dtype=np.float64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.float64)
    if pseudo_labels.shape[0] != unlabeled_x.shape[0]:
        raise ConfigError("pseudo-labels are not aligned with the unlabeled set")
    weights = pseudo_labels.sum(axis=1)  # exactly 1 for one-hot rows, 0 otherwise
    xs = strong_augment(unlabeled_x, rng, sigma_strong, mask_prob)
    grads, loss = nn.backward(params, xs, pseudo_labels, weights)
    return loss, grads


def combine_losses(loss_s: float, grads_s: nn.ModelParams,
                   loss_u: float, grads_u: nn.ModelParams, lam: float):
    """Total objective: L_s + lam * L_u, gradients combined elementwise."""
    total = loss_s + lam * loss_u
    grads = nn.ModelParams(
        [gs + lam * gu for gs, gu in zip(grads_s.weights, grads_u.weights)],
        [gs + lam * gu for gs, gu in zip(grads_s.biases, grads_u.biases)],
    )
    return total, grads
