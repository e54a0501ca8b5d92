"""Evaluation helpers: confusion counts, macro precision/recall, voting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MacroMetrics:
    """Per-class and macro-averaged precision/recall.

    Rows of ``confusion`` index true classes, columns predicted classes.
    The macro averages run only over classes that appear in the truth;
    a class that is present in the truth but never predicted contributes
    precision 0 rather than being skipped.
    """

    confusion: np.ndarray  # (C, C) int64
    precision: np.ndarray  # (C,) float
    recall: np.ndarray  # (C,) float
    present: np.ndarray  # (C,) bool, class appears in y_true
    macro_precision: float
    macro_recall: float
    accuracy: float


def evaluate_macro(y_true, y_pred, num_classes: int) -> MacroMetrics:
    """Macro-averaged precision and recall over the classes present in truth."""
    yt = np.asarray(y_true, dtype=np.int64).ravel()
    yp = np.asarray(y_pred, dtype=np.int64).ravel()
    if yt.shape != yp.shape:
        raise ValueError("y_true and y_pred must have the same length")
    if yt.size == 0:
        raise ValueError("cannot evaluate empty label arrays")
    C = int(num_classes)
    if yt.min() < 0 or yt.max() >= C or yp.min() < 0 or yp.max() >= C:
        raise ValueError(f"labels out of range for num_classes={C}")
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (yt, yp), 1)
    tp = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(true_totals > 0, tp / true_totals, 0.0)
    present = true_totals > 0
    macro_p = float(precision[present].mean())
    macro_r = float(recall[present].mean())
    accuracy = float(tp.sum() / yt.size)
    return MacroMetrics(confusion=confusion, precision=precision, recall=recall,
                        present=present, macro_precision=macro_p,
                        macro_recall=macro_r, accuracy=accuracy)


def majority_vote(labels, num_classes: int | None = None) -> int:
    """Most frequent label; ties break toward the lowest class index."""
    arr = np.asarray(labels, dtype=np.int64).ravel()
    if arr.size == 0:
        raise ValueError("cannot vote over an empty label sequence")
    if arr.min() < 0:
        raise ValueError("labels must be nonnegative")
    counts = np.bincount(arr, minlength=num_classes or 0)
    return int(np.argmax(counts))
