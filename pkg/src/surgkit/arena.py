"""Arena score: the plain sum of six per-dataset headline metrics, and its leaderboard."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .datamodel import Protocol

# dataset id -> (vector field, metric key in that dataset's report)
PRIMARY_METRICS = {
    "cholec80": ("cholec80_phase_accuracy", "accuracy"),
    "sar_rarp": ("sar_rarp_action_accuracy", "accuracy"),
    "cholect50": ("cholect50_triplet_accuracy", "triplet_accuracy"),
    "endovis2017": ("endovis2017_miou", "miou"),
    "endovis2018_vqa": ("endovis2018_vqa_accuracy", "accuracy"),
    "endoscape2023_cvs": ("endoscape_cvs_average_accuracy", "average_accuracy"),
}
DATASET_IDS = tuple(PRIMARY_METRICS)


class ArenaError(ValueError):
    pass


@dataclass(frozen=True)
class ArenaVector:
    cholec80_phase_accuracy: float
    sar_rarp_action_accuracy: float
    cholect50_triplet_accuracy: float
    endovis2017_miou: float
    endovis2018_vqa_accuracy: float
    endoscape_cvs_average_accuracy: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or not 0.0 <= v <= 100.0:
                raise ArenaError(f"{f.name}={v!r} is outside [0, 100]")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_reports(cls, reports: Mapping[str, Mapping[str, float]]) -> "ArenaVector":
        """Build from per-dataset metric dicts keyed by dataset id."""
        missing = [d for d in DATASET_IDS if d not in reports]
        if missing:
            raise ArenaError(f"missing reports for {missing}")
        kwargs = {}
        for dataset, (name, key) in PRIMARY_METRICS.items():
            if key not in reports[dataset]:
                raise ArenaError(f"{dataset} report lacks {key!r}")
            kwargs[name] = float(reports[dataset][key])
        return cls(**kwargs)


def arena_score(vector: ArenaVector) -> float:
    """Sum of the six components, each already on the 0-100 scale."""
    return math.fsum(vector.as_dict().values())


@dataclass(frozen=True)
class LeaderboardEntry:
    model: str
    vector: ArenaVector
    protocol: Protocol = Protocol.OV
    institute: str = ""

    @property
    def score(self) -> float:
        return arena_score(self.vector)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "institute": self.institute,
            "protocol": self.protocol.value,
            "arena_score": round(self.score, 6),
            "vector": self.vector.as_dict(),
        }


_COLUMNS = (
    ("Cholec80", "cholec80_phase_accuracy"),
    ("SAR-RARP", "sar_rarp_action_accuracy"),
    ("CholecT50", "cholect50_triplet_accuracy"),
    ("EndoVis17", "endovis2017_miou"),
    ("EndoVis18", "endovis2018_vqa_accuracy"),
    ("CVS", "endoscape_cvs_average_accuracy"),
)


@dataclass(frozen=True)
class Leaderboard:
    entries: tuple[LeaderboardEntry, ...]

    def to_json(self) -> dict:
        return {
            "entries": [dict(rank=i, **e.to_json()) for i, e in enumerate(self.entries, 1)],
        }

    def to_text(self) -> str:
        model_w = max(12, *(len(e.model) for e in self.entries))
        inst_w = max(9, *(len(e.institute) for e in self.entries))
        head = f"{'Rank':>4}  {'Model':<{model_w}}  {'Institute':<{inst_w}}  {'Proto':<5}"
        head += "".join(f"  {name:>9}" for name, _ in _COLUMNS) + f"  {'Arena':>7}"
        lines = [head, "-" * len(head)]
        for i, e in enumerate(self.entries, 1):
            row = f"{i:>4}  {e.model:<{model_w}}  {e.institute:<{inst_w}}  {e.protocol.value.upper():<5}"
            vec = e.vector.as_dict()
            row += "".join(f"  {vec[key]:>9.2f}" for _, key in _COLUMNS) + f"  {e.score:>7.2f}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        if stem.suffix in (".txt", ".json"):
            stem = stem.with_suffix("")
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt, js = stem.with_suffix(".txt"), stem.with_suffix(".json")
        txt.write_text(self.to_text(), encoding="utf-8")
        js.write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return txt, js


def leaderboard(entries: Iterable[LeaderboardEntry]) -> Leaderboard:
    """Sort by arena score, highest first; equal scores fall back to model name."""
    entries = list(entries)
    if not entries:
        raise ArenaError("a leaderboard needs at least one entry")
    return Leaderboard(tuple(sorted(entries, key=lambda e: (-round(e.score, 9), e.model))))


def _report_metrics(path: Path) -> dict[str, float]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    return dict(obj.get("metrics", obj))


def _reports_in(directory: Path) -> dict[str, dict[str, float]]:
    found = {}
    for dataset in DATASET_IDS:
        for candidate in (directory / f"{dataset}.json", directory / dataset / "report.json"):
            if candidate.is_file():
                found[dataset] = _report_metrics(candidate)
                break
    return found


def _entry_from_dir(directory: Path, reports: Mapping[str, Mapping[str, float]]) -> LeaderboardEntry:
    model, institute, protocol = directory.name, "", Protocol.OV
    manifest = directory / "manifest.json"
    if manifest.is_file():
        meta = json.loads(manifest.read_text(encoding="utf-8"))
        model = meta.get("model", model)
        institute = meta.get("institute", institute)
        protocol = Protocol(meta.get("protocol", protocol.value))
    return LeaderboardEntry(model, ArenaVector.from_reports(reports), protocol, institute)


def entries_from_reports(root: str | Path) -> list[LeaderboardEntry]:
    """One entry per run directory.

    ``root`` is either a run directory (per-dataset ``<id>.json`` or
    ``<id>/report.json`` files, optional ``manifest.json``) or a directory of
    such run directories.
    """
    root = Path(root)
    direct = _reports_in(root)
    if direct:
        return [_entry_from_dir(root, direct)]
    entries = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        reports = _reports_in(sub)
        if reports:
            entries.append(_entry_from_dir(sub, reports))
    if not entries:
        raise ArenaError(f"no dataset reports under {root}")
    return entries


__all__: Sequence[str] = [
    "ArenaError",
    "ArenaVector",
    "DATASET_IDS",
    "Leaderboard",
    "LeaderboardEntry",
    "PRIMARY_METRICS",
    "arena_score",
    "entries_from_reports",
    "leaderboard",
]
