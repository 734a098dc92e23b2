"""Triplet and critical-view-of-safety scores."""

from __future__ import annotations

import math
from typing import Hashable, Sequence

import numpy as np
from sklearn.metrics import average_precision_score

from ..datamodel import CvsVector, Triplet
from .report import MetricReport

TRIPLET_COMPONENTS = ("instrument", "verb", "target")


def average_precision(relevant: Sequence[bool], scores: Sequence[float]) -> float:
    """Step-wise area under the precision-recall curve, in [0, 1].

    Items sharing a score form one operating point, so the value does not
    depend on input order.
    """
    if not any(relevant):
        return 0.0
    return float(average_precision_score(np.asarray(relevant, dtype=bool), np.asarray(scores, dtype=float)))


def _class_map(gt: Sequence[Hashable], pred: Sequence[Hashable | None]) -> float:
    classes = sorted(set(gt), key=str)
    aps = [
        average_precision([g == c for g in gt], [1.0 if p == c else 0.0 for p in pred])
        for c in classes
    ]
    return math.fsum(aps) / len(aps) if aps else 0.0


def triplet_metrics(gt: Sequence[Triplet], pred: Sequence[Triplet | None]) -> MetricReport:
    """Component and full-triplet accuracy and mAP; ``None`` marks a failed parse."""
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} ground truth vs {len(pred)} predictions")
    if not gt:
        raise ValueError("triplet_metrics needs at least one sample")
    n = len(gt)
    values: dict[str, float] = {}
    for idx, name in enumerate(TRIPLET_COMPONENTS):
        g = [t.components()[idx] for t in gt]
        p = [t.components()[idx] if t is not None else None for t in pred]
        values[f"{name}_accuracy"] = 100.0 * sum(1 for a, b in zip(g, p) if a == b) / n
        values[f"{name}_map"] = 100.0 * _class_map(g, p)
    values["triplet_accuracy"] = 100.0 * sum(1 for a, b in zip(gt, pred) if a == b) / n
    values["triplet_map"] = 100.0 * _class_map(list(gt), list(pred))
    return MetricReport(values=values, n_samples=n, n_parse_failed=sum(1 for p in pred if p is None))


def average_of_criteria(values: Sequence[float]) -> float:
    """Arithmetic mean of per-criterion accuracies."""
    return math.fsum(values) / len(values)


def cvs_metrics(gt: Sequence[CvsVector], pred: Sequence[CvsVector | None]) -> MetricReport:
    """Per-criterion and averaged accuracy, balanced accuracy and overall-CVS accuracy.

    ``None`` (failed or refused) is wrong on every criterion. A criterion whose
    ground truth has a single class reports plain accuracy as its balanced
    accuracy and is flagged.
    """
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} ground truth vs {len(pred)} predictions")
    if not gt:
        raise ValueError("cvs_metrics needs at least one sample")
    n = len(gt)
    values: dict[str, float] = {}
    flags: list[str] = []
    correct_total = 0
    balanced = []
    for c in range(3):
        g = [v.as_tuple()[c] for v in gt]
        p = [v.as_tuple()[c] if v is not None else not gv for v, gv in zip(pred, g)]
        correct = sum(1 for a, b in zip(g, p) if a == b)
        correct_total += correct
        values[f"c{c + 1}_accuracy"] = 100.0 * correct / n
        pos = sum(g)
        neg = n - pos
        if pos == 0 or neg == 0:
            flags.append(f"c{c + 1}: single ground-truth class, balanced accuracy equals accuracy")
            bal = 100.0 * correct / n
        else:
            tp = sum(1 for a, b in zip(g, p) if a and b)
            tn = sum(1 for a, b in zip(g, p) if not a and not b)
            bal = 100.0 * (tp / pos + tn / neg) / 2
        values[f"c{c + 1}_balanced_accuracy"] = bal
        balanced.append(bal)
    values["average_accuracy"] = 100.0 * correct_total / (3 * n)
    values["average_balanced_accuracy"] = math.fsum(balanced) / 3
    values["cvs_accuracy"] = (
        100.0 * sum(1 for g, p in zip(gt, pred) if p is not None and p.achieved == g.achieved) / n
    )
    ordered = {
        k: values[k]
        for k in (
            "c1_accuracy",
            "c2_accuracy",
            "c3_accuracy",
            "average_accuracy",
            "c1_balanced_accuracy",
            "c2_balanced_accuracy",
            "c3_balanced_accuracy",
            "average_balanced_accuracy",
            "cvs_accuracy",
        )
    }
    return MetricReport(values=ordered, n_samples=n, n_parse_failed=sum(1 for p in pred if p is None), flags=flags)
