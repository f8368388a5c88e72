"""Confusion matrices, macro scores, and summary statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import ModelParams, forward_batch


@dataclass(frozen=True, eq=False)
class Scores:
    f1: float
    precision: float
    recall: float
    per_class_f1: np.ndarray
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    support: np.ndarray


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with rows = truth and columns = prediction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ShapeError("y_true and y_pred differ in length")
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def predict(params: ModelParams, X) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return forward_batch(params, X).argmax(axis=1)


def evaluate(params: ModelParams, X, y) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ConfigError("cannot evaluate on an empty sample set")
    y = np.asarray(y, dtype=np.int64)
    if (y < 0).any():
        raise ConfigError("evaluate needs labeled samples")
    return confusion_matrix(y, predict(params, X), params.n_classes)


def accuracy(cm: np.ndarray) -> float:
    tot = cm.sum()
    return float(np.trace(cm) / tot) if tot else 0.0


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a, dtype=np.float64)
    np.divide(a, b, out=out, where=b > 0)
    return out


def macro_scores(cm) -> Scores:
    """Unweighted mean over classes that occur in the ground truth.

    Per-class values with a zero denominator count as 0.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {cm.shape}")
    if cm.sum() == 0:
        raise ConfigError("empty confusion matrix")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    present = support > 0
    return Scores(
        f1=float(f1[present].mean()),
        precision=float(precision[present].mean()),
        recall=float(recall[present].mean()),
        per_class_f1=f1,
        per_class_precision=precision,
        per_class_recall=recall,
        support=support.astype(np.int64),
    )


def relative_improvement(candidate: float, baseline: float) -> float:
    """Percentage gain of ``candidate`` over ``baseline``."""
    if baseline <= 0:
        raise ConfigError(f"baseline must be positive, got {baseline}")
    return 100.0 * (candidate - baseline) / baseline


def summarize(values) -> dict[str, float]:
    """Mean, median and population std across clients."""
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "median": float(np.median(v)), "std": float(v.std())}
