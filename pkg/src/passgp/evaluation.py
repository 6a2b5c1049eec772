"""Classification metrics and predictive-uncertainty diagnostics."""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_HISTOGRAM_BINS = 50


@dataclass
class EvalReport:
    error_rate: float
    brier: float
    n_test: int
    per_class_errors: np.ndarray | None = None
    density_histogram: dict = field(default_factory=dict)


def error_rate(pred_labels, true_labels):
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValueError("prediction/label length mismatch")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(pred != true))


def brier_score(probs_of_true_label):
    """Mean squared shortfall of the probability assigned to the observed
    label: mean of (1 - p)^2."""
    p = np.asarray(probs_of_true_label, dtype=float)
    if p.size == 0:
        raise ValueError("empty input")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((1.0 - p) ** 2))


def multiclass_combine(per_class_probs):
    """Predicted class per column from one-vs-rest positive probabilities.

    Ties go to the lowest class index (argmax convention).
    """
    probs = np.asarray(per_class_probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] < 2:
        raise ValueError("need a (C, n) matrix with C >= 2")
    return np.argmax(probs, axis=0)


def density_histogram(probs_of_true_label, correct_mask, n_bins=DEFAULT_HISTOGRAM_BINS):
    """Counts of predictive probabilities on fixed-width [0, 1] bins,
    split into correct and incorrect predictions."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    p = np.asarray(probs_of_true_label, dtype=float)
    mask = np.asarray(correct_mask, dtype=bool)
    if p.shape != mask.shape:
        raise ValueError("probability/mask length mismatch")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    correct, _ = np.histogram(p[mask], bins=edges)
    incorrect, _ = np.histogram(p[~mask], bins=edges)
    return {"edges": edges, "correct": correct, "incorrect": incorrect}


def report(probs_of_true_label, pred_labels, true_labels,
           n_bins=DEFAULT_HISTOGRAM_BINS, classes=None):
    """Assemble the full evaluation report for one prediction run."""
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    err = error_rate(pred, true)
    correct = pred == true
    per_class = None
    if classes is not None:
        per_class = np.array([
            error_rate(pred[true == c], true[true == c]) if np.any(true == c) else np.nan
            for c in classes
        ])
    return EvalReport(
        error_rate=err,
        brier=brier_score(probs_of_true_label),
        n_test=len(true),
        per_class_errors=per_class,
        density_histogram=density_histogram(probs_of_true_label, correct, n_bins),
    )
