"""Per-frame classification scores: accuracy plus macro recall, precision and Jaccard."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Sequence

from sklearn.metrics import jaccard_score, precision_recall_fscore_support

from ..datamodel import render_label
from .report import MetricReport

# Stand-in class for unparseable predictions. It is never a ground-truth class,
# so a failure costs the true class a false negative and adds no false positive
# to any real class.
NULL_CLASS = "\x00parse_failed"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def jaccard(self) -> float:
        d = self.tp + self.fp + self.fn
        return self.tp / d if d else 0.0


def _key(label: Any) -> Hashable:
    if label is None:
        return NULL_CLASS
    return label if isinstance(label, str) else render_label(label)


def confusion_counts(gt: Sequence[Any], pred: Sequence[Any]) -> dict[Hashable, ConfusionCounts]:
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} ground truth vs {len(pred)} predictions")
    counts: dict[Hashable, list[int]] = {}
    for g, p in zip(gt, pred):
        g, p = _key(g), _key(p)
        if g == p:
            counts.setdefault(g, [0, 0, 0])[0] += 1
            continue
        counts.setdefault(g, [0, 0, 0])[2] += 1
        if p != NULL_CLASS:
            counts.setdefault(p, [0, 0, 0])[1] += 1
    return {k: ConfusionCounts(*v) for k, v in counts.items()}


def classification_report(
    gt: Sequence[Any], pred: Sequence[Any], classes: Iterable[Any] | None = None
) -> MetricReport:
    """Accuracy and macro recall/precision/Jaccard over the classes present in ``gt``.

    ``None`` in ``pred`` marks a parse failure or refusal. ``classes``, when
    given, is checked to contain every ground-truth label.
    """
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} ground truth vs {len(pred)} predictions")
    if not gt:
        raise ValueError("classification_report needs at least one sample")
    y_true = [_key(g) for g in gt]
    y_pred = [_key(p) for p in pred]
    if NULL_CLASS in y_true:
        raise ValueError("ground truth contains a missing label")
    if classes is not None:
        allowed = {_key(c) for c in classes}
        unknown = sorted(set(y_true) - allowed)
        if unknown:
            raise ValueError(f"ground-truth labels outside the class set: {unknown}")
    present = sorted(set(y_true))
    precision, recall, _, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=present, average="macro", zero_division=0
    )
    jaccard = jaccard_score(y_true, y_pred, labels=present, average="macro", zero_division=0)
    matches = sum(1 for g, p in zip(y_true, y_pred) if g == p)
    return MetricReport(
        values={
            "accuracy": 100.0 * matches / len(y_true),
            "recall": 100.0 * float(recall),
            "precision": 100.0 * float(precision),
            "jaccard": 100.0 * float(jaccard),
        },
        n_samples=len(y_true),
        n_parse_failed=sum(1 for p in y_pred if p == NULL_CLASS),
    )


def macro_from_counts(counts: dict[Hashable, ConfusionCounts], present: Iterable[Hashable]) -> dict[str, float]:
    present = list(present)
    return {
        name: 100.0 * math.fsum(getattr(counts[c], name) for c in present) / len(present)
        for name in ("recall", "precision", "jaccard")
    }
