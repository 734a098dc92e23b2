"""Adapters from public annotation formats to ``SampleRecord`` sequences.

Only label shapes are converted; images stay where they are and are referenced
by path. Each adapter takes the path of one annotation file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterator

from ..datamodel import BoundingBox, CvsVector, SampleRecord, TaskKind, Triplet


def cholec80_phases(
    path: str | Path,
    video: str,
    *,
    stride: int = 25,
    image_template: str = "{video}/{frame:06d}.png",
    dataset_id: str = "cholec80",
) -> Iterator[SampleRecord]:
    """``videoNN-phase.txt``: a ``Frame<TAB>Phase`` header then one row per frame (25 fps)."""
    with open(path, encoding="utf-8") as fh:
        rows = [ln.rstrip("\n").split("\t") for ln in fh if ln.strip()]
    for frame_s, phase in rows[1:]:
        frame = int(frame_s)
        if frame % stride:
            continue
        yield SampleRecord(
            sample_id=f"{video}_{frame:06d}",
            image=image_template.format(video=video, frame=frame),
            surgery_type="cholecystectomy",
            dataset_id=dataset_id,
            labels={TaskKind.PHASE_RECOGNITION: phase},
        )


SAR_RARP_ACTIONS = (
    "other",
    "picking-up the needle",
    "positioning the needle tip",
    "pushing the needle through the tissue",
    "pulling the needle out of the tissue",
    "tying a knot",
    "cutting the suture",
    "returning/dropping the needle",
)


def sar_rarp_actions(
    path: str | Path,
    video: str,
    *,
    image_template: str = "{video}/{frame:09d}.png",
    dataset_id: str = "sar_rarp",
) -> Iterator[SampleRecord]:
    """``action_discrete.txt``: ``frame,action_id`` rows."""
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().isdigit():
                continue
            frame, action = int(row[0]), int(row[1])
            yield SampleRecord(
                sample_id=f"{video}_{frame:09d}",
                image=image_template.format(video=video, frame=frame),
                surgery_type="prostatectomy",
                dataset_id=dataset_id,
                labels={TaskKind.ACTION_RECOGNITION: SAR_RARP_ACTIONS[action]},
            )


def cholect50_triplets(
    path: str | Path,
    video: str,
    *,
    image_template: str = "{video}/{frame:06d}.png",
    dataset_id: str = "cholect50",
) -> Iterator[SampleRecord]:
    """CholecT50 per-video JSON label file.

    ``categories.triplet`` maps ids to ``"instrument,verb,target"``; each
    ``annotations[frame]`` entry is a vector whose first element is the triplet
    id (``-1`` for none). Frames with exactly one valid triplet become records.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    names = data["categories"]["triplet"]
    for frame_s in sorted(data["annotations"], key=int):
        ids = {int(vec[0]) for vec in data["annotations"][frame_s] if int(vec[0]) >= 0}
        if len(ids) != 1:
            continue
        inst, verb, target = names[str(ids.pop())].split(",")
        frame = int(frame_s)
        yield SampleRecord(
            sample_id=f"{video}_{frame:06d}",
            image=image_template.format(video=video, frame=frame),
            surgery_type="cholecystectomy",
            dataset_id=dataset_id,
            labels={TaskKind.TRIPLET_RECOGNITION: Triplet(inst, verb, target)},
        )


def endoscapes_cvs(
    path: str | Path,
    *,
    threshold: float = 0.5,
    image_template: str = "{vid}_{frame}.jpg",
    dataset_id: str = "endoscape2023_cvs",
) -> Iterator[SampleRecord]:
    """Endoscapes metadata CSV with ``vid, frame, C1, C2, C3`` rater-averaged columns."""
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            c = [float(row[k]) >= threshold for k in ("C1", "C2", "C3")]
            vid, frame = row["vid"], row["frame"]
            yield SampleRecord(
                sample_id=f"{vid}_{frame}",
                image=image_template.format(vid=vid, frame=frame),
                surgery_type="cholecystectomy",
                dataset_id=dataset_id,
                labels={TaskKind.CVS_ASSESSMENT: CvsVector(*c)},
            )


def coco_boxes(
    path: str | Path,
    *,
    task: TaskKind = TaskKind.INSTRUMENT_LOCALIZATION_BOX,
    surgery_type: str = "nephrectomy",
    dataset_id: str = "endovis2017",
) -> Iterator[SampleRecord]:
    """COCO-style detection JSON; ``bbox`` is ``[x, y, w, h]`` and is converted to corners."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    cats = {c["id"]: c["name"] for c in data.get("categories", ())}
    boxes: dict[int, list[BoundingBox]] = {}
    for ann in data.get("annotations", ()):
        x, y, w, h = ann["bbox"]
        if w <= 0 or h <= 0:
            continue
        boxes.setdefault(ann["image_id"], []).append(BoundingBox(x, y, x + w, y + h, cats.get(ann["category_id"])))
    for img in data.get("images", ()):
        if img["id"] not in boxes:
            continue
        yield SampleRecord(
            sample_id=str(img.get("file_name", img["id"])),
            image=img.get("file_name", str(img["id"])),
            surgery_type=surgery_type,
            dataset_id=dataset_id,
            labels={task: tuple(boxes[img["id"]])},
            image_size=(img["width"], img["height"]) if "width" in img and "height" in img else None,
        )


ADAPTERS = {
    "cholec80": cholec80_phases,
    "sar_rarp": sar_rarp_actions,
    "cholect50": cholect50_triplets,
    "endoscape2023_cvs": endoscapes_cvs,
    "coco": coco_boxes,
}
