from .classification import NULL_CLASS, ConfusionCounts, classification_report, confusion_counts
from .detection import (
    COCO_THRESHOLDS,
    Detection,
    ImageDetections,
    detection_map,
    interpolated_ap,
    iou,
    match_class,
    mean_ap,
    mean_iou,
)
from .report import METRIC_KEYS, MetricReport
from .structured import average_of_criteria, average_precision, cvs_metrics, triplet_metrics
from .tasks import ScoredItem, score_task
from .text import bleu4, corpus_text_overlap, meteor, rouge1, text_overlap, tokenize

__all__ = [
    "COCO_THRESHOLDS",
    "ConfusionCounts",
    "Detection",
    "ImageDetections",
    "METRIC_KEYS",
    "MetricReport",
    "NULL_CLASS",
    "average_of_criteria",
    "average_precision",
    "bleu4",
    "classification_report",
    "confusion_counts",
    "corpus_text_overlap",
    "cvs_metrics",
    "detection_map",
    "interpolated_ap",
    "iou",
    "match_class",
    "mean_ap",
    "mean_iou",
    "meteor",
    "rouge1",
    "ScoredItem",
    "score_task",
    "text_overlap",
    "tokenize",
    "triplet_metrics",
]
