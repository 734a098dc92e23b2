from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

# Fixed key order for report files; unknown keys are appended after these.
METRIC_KEYS = (
    "accuracy",
    "recall",
    "precision",
    "jaccard",
    "miou",
    "map50",
    "map75",
    "coco_ap",
    "bleu4",
    "meteor",
    "rouge1",
    "instrument_accuracy",
    "verb_accuracy",
    "target_accuracy",
    "triplet_accuracy",
    "instrument_map",
    "verb_map",
    "target_map",
    "triplet_map",
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


@dataclass
class MetricReport:
    """Metric values on the 0-100 scale plus outcome counts."""

    values: dict[str, float] = field(default_factory=dict)
    n_samples: int = 0
    n_parse_failed: int = 0
    n_refused: int = 0
    n_transport_error: int = 0
    flags: list[str] = field(default_factory=list)
    task: str | None = None

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def merge(self, other: "MetricReport") -> "MetricReport":
        self.values.update(other.values)
        self.flags.extend(f for f in other.flags if f not in self.flags)
        return self

    def ordered_values(self) -> dict[str, float]:
        known = [k for k in METRIC_KEYS if k in self.values]
        extra = sorted(k for k in self.values if k not in METRIC_KEYS)
        return {k: self.values[k] for k in known + extra}

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "n_samples": self.n_samples,
            "n_parse_failed": self.n_parse_failed,
            "n_refused": self.n_refused,
            "n_transport_error": self.n_transport_error,
            "metrics": self.ordered_values(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MetricReport":
        return cls(
            values=dict(obj.get("metrics", {})),
            n_samples=int(obj.get("n_samples", 0)),
            n_parse_failed=int(obj.get("n_parse_failed", 0)),
            n_refused=int(obj.get("n_refused", 0)),
            n_transport_error=int(obj.get("n_transport_error", 0)),
            flags=list(obj.get("flags", ())),
            task=obj.get("task"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"
