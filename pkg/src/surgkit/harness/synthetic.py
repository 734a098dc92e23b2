"""Synthetic six-dataset corpora for dry runs. No image files are created."""

from __future__ import annotations

import random
from pathlib import Path

from ..arena import DATASET_IDS
from ..datamodel import (
    BoundingBox,
    CvsVector,
    GridCell,
    GridPosition,
    SampleRecord,
    TaskKind,
    Triplet,
    write_corpus,
)
from ..pipeline.resources import default_vocabulary

TISSUES = ("kidney parenchyma", "covered kidney", "small intestine", "background tissue")
SURGERY = {
    "endovis2017": "robotic nephrectomy",
    "endovis2018_vqa": "robotic nephrectomy",
    "cholec80": "laparoscopic cholecystectomy",
    "sar_rarp": "robotic prostatectomy",
    "cholect50": "laparoscopic cholecystectomy",
    "endoscape2023_cvs": "laparoscopic cholecystectomy",
}
IMAGE_SIZE = (1280, 1024)


def _box(rng: random.Random, label: str) -> BoundingBox:
    w, h = rng.randint(40, 300), rng.randint(40, 300)
    x, y = rng.randint(0, IMAGE_SIZE[0] // 2), rng.randint(0, IMAGE_SIZE[1] - h - 1)
    return BoundingBox(x, y, x + w, y + h, label)


def synthetic_records(dataset_id: str, n: int, seed: int = 0) -> list[SampleRecord]:
    """``n`` records with random labels for the tasks a dataset is benchmarked on.

    EndoVis2017 frames carry one box each, so per-box and per-frame rates agree.
    """
    rng = random.Random(f"{seed}:{dataset_id}")
    instruments = default_vocabulary("endovis_instrument")
    out = []
    for i in range(n):
        if dataset_id == "endovis2017":
            labels = {TaskKind.INSTRUMENT_LOCALIZATION_BOX: (_box(rng, rng.choice(instruments)),)}
        elif dataset_id == "endovis2018_vqa":
            inst = rng.choice(instruments)
            labels = {
                TaskKind.INSTRUMENT_RECOGNITION: inst,
                TaskKind.TISSUE_RECOGNITION: rng.choice(TISSUES),
                TaskKind.INSTRUMENT_LOCALIZATION_GRID: GridCell(rng.choice(list(GridPosition)), inst),
            }
        elif dataset_id == "cholec80":
            labels = {TaskKind.PHASE_RECOGNITION: rng.choice(default_vocabulary("cholec80_phase"))}
        elif dataset_id == "sar_rarp":
            labels = {TaskKind.ACTION_RECOGNITION: rng.choice(default_vocabulary("sar_rarp_action"))}
        elif dataset_id == "cholect50":
            labels = {
                TaskKind.TRIPLET_RECOGNITION: Triplet(
                    rng.choice(default_vocabulary("cholect50_instrument")),
                    rng.choice(default_vocabulary("cholect50_verb")),
                    rng.choice(default_vocabulary("cholect50_target")),
                )
            }
        elif dataset_id == "endoscape2023_cvs":
            labels = {TaskKind.CVS_ASSESSMENT: CvsVector(*(rng.random() < 0.5 for _ in range(3)))}
        else:
            raise ValueError(f"unknown dataset {dataset_id!r}")
        sid = f"{dataset_id}_{i:05d}"
        out.append(SampleRecord(sid, f"frames/{dataset_id}/{sid}.png", SURGERY[dataset_id], dataset_id, labels, IMAGE_SIZE))
    return out


def write_synthetic_suite(root: str | Path, n: int = 50, *, seed: int = 0, budget: int | None = None) -> Path:
    """Write six corpora and a ``suite.toml`` with an oracle mock endpoint; returns the suite path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = [f"seed = {seed}", f"budget = {budget or n}", ""]
    for did in DATASET_IDS:
        write_corpus(synthetic_records(did, n, seed), root / f"{did}.jsonl", dataset_id=did, created_at="1970-01-01T00:00:00Z")
        lines += [f"[datasets.{did}]", f'corpus = "{did}.jsonl"', ""]
    lines += ["[endpoints.oracle]", 'mock = "oracle"', "", "[endpoints.planted]", 'mock = "planted"', "mock_p = 0.7", "mock_seed = 1", ""]
    path = root / "suite.toml"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
