"""Evaluation instrumentation and CSV emission."""

import io
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import nn
from .data import LabeledSet
from .errors import MetricError
from .simplex import require_simplex, uniform


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, natural log; symmetric, bounded by ln 2.

    Zero entries contribute zero to their own KL term.
    """
    p = require_simplex(p, "p")
    q = require_simplex(q, "q")
    m = 0.5 * (p + q)

    def kl(a):
        pos = a > 0.0
        return float(np.sum(a[pos] * np.log(a[pos] / m[pos])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def classwise_accuracy(params: nn.ModelParams, test: LabeledSet):
    """Per-class accuracy on a test set plus their unweighted mean.

    The test set must contain every class the model outputs.
    """
    k = params.n_classes
    preds = np.argmax(nn.forward(params, test.x), axis=1)
    per_class = np.empty(k)
    for c in range(k):
        sel = test.y == c
        if not np.any(sel):
            raise MetricError(f"test set has no samples of class {c}")
        per_class[c] = float(np.mean(preds[sel] == c))
    return per_class, float(per_class.mean())


def normalized_bias(per_class_accuracy: np.ndarray) -> np.ndarray:
    """Class-wise accuracies rescaled to the simplex (uniform if all zero)."""
    a = np.asarray(per_class_accuracy, dtype=np.float64)
    total = a.sum()
    if total <= 0.0:
        return uniform(a.size)
    return a / total


def pseudo_label_metrics(pseudo_labels: np.ndarray, true_labels: np.ndarray):
    """(accuracy among confident rows or None, confident coverage ratio)."""
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.float64)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    if pseudo_labels.shape[0] != true_labels.shape[0]:
        raise MetricError("pseudo-labels are not aligned with the true labels")
    n = pseudo_labels.shape[0]
    if n == 0:
        return None, 0.0
    confident = pseudo_labels.sum(axis=1) > 0.0
    n_conf = int(confident.sum())
    ratio = n_conf / n
    if n_conf == 0:
        return None, ratio
    assigned = np.argmax(pseudo_labels[confident], axis=1)
    accuracy = float(np.mean(assigned == true_labels[confident]))
    return accuracy, ratio


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    balanced_test_accuracy: float
    classwise_accuracy: np.ndarray            # (K,)
    js_appu_vs_truth: float
    js_labeldist_vs_truth: float
    pseudo_accuracy: Optional[float]          # None when nothing was confident
    pseudo_ratio: float
    l_aggr_initial: Optional[float] = None    # populated by debiased aggregation only
    l_aggr_final: Optional[float] = None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6g}"


def csv_header(n_classes: int) -> str:
    cols = []
    for f in fields(RoundMetrics):
        if f.name == "classwise_accuracy":
            cols.extend(f"acc_class_{c}" for c in range(n_classes))
        else:
            cols.append(f.name)
    return ",".join(cols)


def csv_row(m: RoundMetrics) -> str:
    cells = [_fmt(m.round), _fmt(m.balanced_test_accuracy)]
    cells.extend(_fmt(v) for v in m.classwise_accuracy)
    cells.extend(
        _fmt(v)
        for v in (
            m.js_appu_vs_truth,
            m.js_labeldist_vs_truth,
            m.pseudo_accuracy,
            m.pseudo_ratio,
            m.l_aggr_initial,
            m.l_aggr_final,
        )
    )
    return ",".join(cells)


def emit_csv(rounds, n_classes: int, path) -> None:
    """Write one header row plus one row per round; byte-deterministic."""
    buf = io.StringIO()
    buf.write(csv_header(n_classes) + "\n")
    for m in rounds:
        buf.write(csv_row(m) + "\n")
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"failed to write metrics to {path}: {exc}") from exc
