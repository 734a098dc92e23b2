"""Box overlap and COCO-style average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from ..datamodel import BoundingBox
from .report import MetricReport

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union with area = (x2 - x1) * (y2 - y1)."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def label(self) -> Hashable:
        return self.box.label


@dataclass(frozen=True)
class ImageDetections:
    """Ground truth and predictions of one image.

    ``failed`` marks an unparseable or refused answer: the image keeps its
    ground truth (so recall suffers) and adds one zero to the mIoU mean.
    """

    gt: tuple[BoundingBox, ...] = ()
    pred: tuple[Detection, ...] = ()
    failed: bool = False

    @classmethod
    def from_boxes(cls, gt, pred, failed: bool = False) -> "ImageDetections":
        dets = tuple(p if isinstance(p, Detection) else Detection(p) for p in (pred or ()))
        return cls(tuple(gt), dets, failed)


DetectionSet = Sequence[ImageDetections]


def match_class(
    data: DetectionSet, label: Hashable, threshold: float
) -> tuple[list[bool], int, list[float]]:
    """Greedy matching for one class.

    Returns TP flags in descending-confidence order, the GT count and the
    confidences in the same order.
    """
    ranked = []
    for img_idx, img in enumerate(data):
        for det_idx, det in enumerate(img.pred):
            if det.label == label:
                ranked.append((-det.confidence, img_idx, det_idx))
    ranked.sort()
    used: dict[int, set[int]] = {}
    flags = []
    for _, img_idx, det_idx in ranked:
        det = data[img_idx].pred[det_idx]
        taken = used.setdefault(img_idx, set())
        best, best_iou = None, -1.0
        for g_idx, g in enumerate(data[img_idx].gt):
            if g.label != label or g_idx in taken:
                continue
            v = iou(det.box, g)
            if v >= threshold and v > best_iou:
                best, best_iou = g_idx, v
        if best is not None:
            taken.add(best)
        flags.append(best is not None)
    n_gt = sum(1 for img in data for g in img.gt if g.label == label)
    return flags, n_gt, [-r[0] for r in ranked]


def interpolated_ap(flags: Sequence[bool], n_gt: int, confidences: Sequence[float] | None = None) -> float:
    """101-point interpolated area under the precision-recall curve, in [0, 1].

    With ``confidences`` the curve is only sampled where the confidence drops,
    so predictions sharing a score count as one operating point and the result
    does not depend on the order of images.
    """
    if n_gt == 0 or not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=float))
    fp = np.cumsum(1.0 - np.asarray(flags, dtype=float))
    if confidences is not None:
        conf = np.asarray(confidences, dtype=float)
        keep = np.append(conf[1:] != conf[:-1], True)
        tp, fp = tp[keep], fp[keep]
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return math.fsum(sampled) / len(RECALL_POINTS)


def mean_ap(data: DetectionSet, threshold: float) -> float:
    classes = sorted({g.label for img in data for g in img.gt}, key=lambda c: (c is None, str(c)))
    if not classes:
        return 0.0
    aps = [interpolated_ap(*match_class(data, c, threshold)) for c in classes]
    return math.fsum(aps) / len(aps)


def iou_scores(data: DetectionSet) -> list[float]:
    """Best same-class IoU of every prediction, plus a zero per failed image."""
    scores = []
    for img in data:
        if img.failed:
            scores.append(0.0)
        for det in img.pred:
            same = [iou(det.box, g) for g in img.gt if g.label == det.label]
            scores.append(max(same, default=0.0))
    return scores


def mean_iou(data: DetectionSet) -> float:
    scores = iou_scores(data)
    return math.fsum(scores) / len(scores) if scores else 0.0


def detection_map(data: DetectionSet) -> MetricReport:
    """mIoU, mAP at IoU 0.50 and 0.75, and COCO AP averaged over 0.50:0.95."""
    data = list(data)
    per_threshold = {t: mean_ap(data, t) for t in COCO_THRESHOLDS}
    scores = iou_scores(data)
    return MetricReport(
        values={
            "miou": 100.0 * math.fsum(scores) / len(scores) if scores else 0.0,
            "map50": 100.0 * per_threshold[0.5],
            "map75": 100.0 * per_threshold[0.75],
            "coco_ap": 100.0 * math.fsum(per_threshold.values()) / len(COCO_THRESHOLDS),
        },
        n_samples=len(data),
        n_parse_failed=sum(1 for img in data if img.failed),
    )
