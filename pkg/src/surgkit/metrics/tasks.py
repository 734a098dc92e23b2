"""Pick the right metric family for a task and count parse outcomes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from ..datamodel import BOX_TASKS, CLASS_TASKS, GridCell, ParseStatus, TaskKind
from .classification import classification_report
from .detection import ImageDetections, detection_map
from .report import MetricReport
from .structured import cvs_metrics, triplet_metrics
from .text import corpus_text_overlap

CLASS_LIKE = CLASS_TASKS | {TaskKind.INSTRUMENT_LOCALIZATION_GRID}


@dataclass(frozen=True)
class ScoredItem:
    task: TaskKind
    gt: Any
    status: ParseStatus
    answer: Any = None
    response: str | None = None
    reference: str | None = None


def _class_key(task: TaskKind, label: Any, multi: bool) -> Any:
    if label is None:
        return None
    if isinstance(label, GridCell):
        label = label.position.value
    return f"{task.value}:{label}" if multi else label


def score_task(items: Sequence[ScoredItem], *, text_metrics: bool = False) -> MetricReport:
    """Score parsed answers against ground truth.

    Class-like tasks may be mixed in one call (their labels are keyed by task);
    boxes, triplets and CVS must each be scored on their own. With
    ``text_metrics`` the responses are also compared with the reference answers.
    """
    if not items:
        raise ValueError("nothing to score")
    tasks = {it.task for it in items}
    answers = [it.answer if it.status is ParseStatus.PARSED else None for it in items]
    if tasks <= CLASS_LIKE:
        multi = len(tasks) > 1
        report = classification_report(
            [_class_key(it.task, it.gt, multi) for it in items],
            [_class_key(it.task, a, multi) for it, a in zip(items, answers)],
        )
    elif len(tasks) > 1:
        raise ValueError(f"cannot score {sorted(t.value for t in tasks)} together")
    elif tasks <= BOX_TASKS:
        report = detection_map(
            [
                ImageDetections.from_boxes(it.gt, a or (), failed=it.status is not ParseStatus.PARSED)
                for it, a in zip(items, answers)
            ]
        )
    elif TaskKind.TRIPLET_RECOGNITION in tasks:
        report = triplet_metrics([it.gt for it in items], answers)
    else:
        report = cvs_metrics([it.gt for it in items], answers)
    if text_metrics:
        pairs = [(it.response or "", it.reference) for it in items if it.reference]
        if pairs:
            report.merge(corpus_text_overlap([p[0] for p in pairs], [p[1] for p in pairs]))
    report.task = "+".join(sorted(t.value for t in tasks))
    report.n_samples = len(items)
    report.n_parse_failed = sum(1 for it in items if it.status is ParseStatus.PARSE_FAILED)
    report.n_refused = sum(1 for it in items if it.status is ParseStatus.REFUSED)
    report.n_transport_error = sum(1 for it in items if it.status is ParseStatus.TRANSPORT_ERROR)
    return report
