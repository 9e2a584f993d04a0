"""Synthetic data generation, client partitioning, and feature augmentation.

The corpus is a mixture of K isotropic Gaussian blobs whose means sit on a
circle of radius ``class_separation`` in the first two feature dimensions;
all remaining dimensions are pure noise.  Heterogeneous clients are produced
by drawing each client's class mix from a Dirichlet distribution and routing
samples accordingly, separately for the labeled and the unlabeled pool.

Hidden truth discipline: the unlabeled pool keeps its true labels in
``UnlabeledSet.hidden_y`` for evaluation only.  Training code receives the
bare feature array ``UnlabeledSet.x`` and never sees a label.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, PartitionError

MAX_PARTITION_RETRIES = 100


@dataclass(frozen=True)
class LabeledSet:
    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64 class indices

    def __len__(self) -> int:
        return self.x.shape[0]

    def class_histogram(self, n_classes: int) -> np.ndarray:
        counts = np.bincount(self.y, minlength=n_classes).astype(np.float64)
        return counts / max(len(self), 1)


@dataclass(frozen=True)
class UnlabeledSet:
    x: np.ndarray         # (n, d) training view: features only
    hidden_y: np.ndarray  # (n,) ground truth, readable by metrics code only

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ClientDatasets:
    labeled: LabeledSet
    unlabeled: UnlabeledSet


@dataclass(frozen=True)
class PartitionSpec:
    n_clients: int
    n_classes: int
    n_labeled_total: int
    delta: float = 0.3
    iid: bool = False
    n_unlabeled_total: Optional[int] = None  # None: everything left over
    seed: int = 0
    # Labeled and unlabeled class mixes are drawn independently per client
    # unless shared_draw is set, in which case one draw governs both pools.
    shared_draw: bool = False
    # Each client's labeled samples are re-added, label-free, to its own
    # unlabeled pool (appended after the partitioned share).
    include_labeled_in_unlabeled: bool = True

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError(f"need at least one client, got {self.n_clients}")
        if not self.iid and self.delta <= 0:
            raise ConfigError(f"dirichlet concentration must be positive, got {self.delta}")


def class_means(
    n_classes: int, dim: int, class_separation: float, arrangement: str = "simplex"
) -> np.ndarray:
    """Blob centers scaled by class_separation.

    "simplex": K mutually orthogonal unit directions (a rotated simplex, so
    all class pairs are equidistant) spread densely over every feature
    dimension; requires K <= d.  Spreading matters: it keeps coordinate
    masking label-preserving, since no single dimension carries a class.
    "circle": centers on a circle of radius class_separation in dims 0 and
    1; only neighboring classes are close.
    """
    means = np.zeros((n_classes, dim))
    if arrangement == "simplex":
        if n_classes > dim:
            raise ConfigError(
                f"simplex arrangement needs dim >= classes ({dim} < {n_classes})"
            )
        # fixed rotation; the constant seed is part of the data definition
        basis = np.random.default_rng(7_031_855).standard_normal((dim, dim))
        q, _ = np.linalg.qr(basis)
        means = class_separation * q[:n_classes, :]
    elif arrangement == "circle":
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0] = class_separation * np.cos(angles)
        means[:, 1] = class_separation * np.sin(angles)
    else:
        raise ConfigError(f"unknown arrangement {arrangement!r}")
    return means


def generate_synthetic(
    n_classes: int,
    dim: int,
    per_class: int,
    class_separation: float,
    noise_scale: float,
    seed: int,
    test_per_class: int = 200,
    arrangement: str = "simplex",
):
    """Balanced train corpus plus a balanced held-out test set.

    Per-class covariance is noise_scale**2 * I.  Deterministic under seed.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least two classes, got {n_classes}")
    if dim < 2:
        raise ConfigError(f"need at least two feature dimensions, got {dim}")
    if noise_scale <= 0:
        raise ConfigError(f"noise scale must be positive, got {noise_scale}")
    if per_class < 1 or test_per_class < 1:
        raise ConfigError("per-class sample counts must be positive")

    rng = np.random.default_rng(seed)
    means = class_means(n_classes, dim, class_separation, arrangement)

    def draw(count_per_class):
        xs, ys = [], []
        for k in range(n_classes):
            xs.append(means[k] + noise_scale * rng.standard_normal((count_per_class, dim)))
            ys.append(np.full(count_per_class, k, dtype=np.int64))
        return LabeledSet(np.concatenate(xs), np.concatenate(ys))

    return draw(per_class), draw(test_per_class)


def weak_augment(x: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Gaussian jitter: x + N(0, sigma^2 I)."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.normal(0.0, sigma, size=x.shape)


def strong_augment(
    x: np.ndarray, rng: np.random.Generator, sigma: float, mask_prob: float
) -> np.ndarray:
    """Heavier jitter plus independent coordinate dropout.

    Draws the noise first, then the mask, so the stream consumption order is
    fixed regardless of mask_prob.
    """
    x = np.asarray(x, dtype=np.float64)
    noisy = x + rng.normal(0.0, sigma, size=x.shape)
    keep = rng.random(size=x.shape) >= mask_prob
    return np.where(keep, noisy, 0.0)


def _assign_to_clients(
    labels: np.ndarray, client_class_probs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Route each sample to a client.

    client_class_probs[m, k] is client m's Dirichlet-drawn affinity for class
    k; samples of class k go to client m with probability proportional to it.
    """
    n_clients = client_class_probs.shape[0]
    assignment = np.empty(labels.shape[0], dtype=np.int64)
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        col = client_class_probs[:, k]
        total = col.sum()
        if total <= 0:  # degenerate draw: fall back to uniform routing
            weights = np.full(n_clients, 1.0 / n_clients)
        else:
            weights = col / total
        assignment[idx] = rng.choice(n_clients, size=idx.size, p=weights)
    return assignment


def _client_mix(spec: PartitionSpec, pool_hist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if spec.iid:
        return np.full((spec.n_clients, spec.n_classes), 1.0 / spec.n_classes)
    return rng.dirichlet(spec.delta * pool_hist, size=spec.n_clients)


def partition(corpus: LabeledSet, spec: PartitionSpec):
    """Split a corpus into per-client labeled/unlabeled datasets.

    A globally balanced labeled subset (n_labeled_total / K per class) is
    selected first; the rest forms the unlabeled pool.  Both pools are then
    routed to clients with Dirichlet-drawn class mixes.  The whole labeled
    routing is redrawn (up to MAX_PARTITION_RETRIES times) until every client
    holds at least one labeled sample.
    """
    k, m = spec.n_classes, spec.n_clients
    if spec.n_labeled_total % k != 0:
        raise ConfigError(
            f"labeled total {spec.n_labeled_total} not divisible by {k} classes"
        )
    per_class_labeled = spec.n_labeled_total // k
    rng = np.random.default_rng(spec.seed)

    labeled_idx = []
    for c in range(k):
        pool = np.flatnonzero(corpus.y == c)
        if pool.size < per_class_labeled:
            raise PartitionError(
                f"class {c} has {pool.size} samples, need {per_class_labeled} labeled"
            )
        labeled_idx.append(rng.choice(pool, size=per_class_labeled, replace=False))
    labeled_idx = np.concatenate(labeled_idx)

    unlabeled_idx = np.setdiff1d(np.arange(len(corpus)), labeled_idx)
    if spec.n_unlabeled_total is not None:
        if spec.n_unlabeled_total > unlabeled_idx.size:
            raise PartitionError(
                f"requested {spec.n_unlabeled_total} unlabeled samples, "
                f"only {unlabeled_idx.size} remain after labeling"
            )
        unlabeled_idx = rng.choice(unlabeled_idx, size=spec.n_unlabeled_total, replace=False)

    lab_x, lab_y = corpus.x[labeled_idx], corpus.y[labeled_idx]
    unl_x, unl_y = corpus.x[unlabeled_idx], corpus.y[unlabeled_idx]
    lab_hist = np.bincount(lab_y, minlength=k).astype(np.float64) / max(lab_y.size, 1)
    unl_hist = np.bincount(unl_y, minlength=k).astype(np.float64) / max(unl_y.size, 1)

    lab_assign = None
    for _ in range(MAX_PARTITION_RETRIES):
        mix = _client_mix(spec, lab_hist, rng)
        candidate = _assign_to_clients(lab_y, mix, rng)
        counts = np.bincount(candidate, minlength=m)
        if counts.min() > 0:
            lab_assign = candidate
            break
        starved = int(np.argmin(counts))
    if lab_assign is None:
        raise PartitionError(
            f"client {starved} received no labeled samples after "
            f"{MAX_PARTITION_RETRIES} partition attempts"
        )

    if spec.shared_draw:
        unl_mix = mix
    else:
        unl_mix = _client_mix(spec, unl_hist, rng)
    unl_assign = _assign_to_clients(unl_y, unl_mix, rng)

    clients = []
    for c in range(m):
        l_sel = lab_assign == c
        u_sel = unl_assign == c
        cx, cy = lab_x[l_sel], lab_y[l_sel]
        ux, uy = unl_x[u_sel], unl_y[u_sel]
        if spec.include_labeled_in_unlabeled:
            ux = np.concatenate([ux, cx])
            uy = np.concatenate([uy, cy])
        clients.append(
            ClientDatasets(
                labeled=LabeledSet(cx, cy),
                unlabeled=UnlabeledSet(ux, uy),
            )
        )
    return clients


def export_corpus_csv(corpus: LabeledSet, path, hide_labels: bool = False) -> None:
    """Write a corpus as CSV (x_0..x_{d-1}, label); hidden labels become -1."""
    d = corpus.x.shape[1]
    header = ",".join([f"x_{i}" for i in range(d)] + ["label"])
    labels = np.full(len(corpus), -1, dtype=np.int64) if hide_labels else corpus.y
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for row, lab in zip(corpus.x, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{lab}\n")


def import_corpus_csv(path) -> LabeledSet:
    """Inverse of export_corpus_csv; labels of -1 stay -1 in y."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        d = len(header) - 1
        xs, ys = [], []
        for line in fh:
            parts = line.strip().split(",")
            xs.append([float(v) for v in parts[:d]])
            ys.append(int(parts[d]))
    return LabeledSet(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64))
