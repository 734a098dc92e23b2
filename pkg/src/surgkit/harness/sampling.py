from __future__ import annotations

import hashlib
import random
from typing import Iterable, Sequence

from ..datamodel import Conversation, Protocol, SampleRecord, TaskKind, Turn, render_label
from ..pipeline.stages import TASK_NOUNS, format_mcq_prompt, mcq_options, record_rng
from .suite import DatasetSpec

QUESTIONS = {
    TaskKind.INSTRUMENT_RECOGNITION: "Which surgical instrument is visible in this frame?",
    TaskKind.INSTRUMENT_LOCALIZATION_BOX: "Locate every surgical instrument. Give each as its name followed by [x1, y1, x2, y2] in pixels.",
    TaskKind.INSTRUMENT_LOCALIZATION_GRID: "Where is the instrument located: left, right, top, bottom or center?",
    TaskKind.TISSUE_RECOGNITION: "Which tissue is being operated on in this frame?",
    TaskKind.TISSUE_LOCALIZATION: "Locate the tissue. Give its name followed by [x1, y1, x2, y2] in pixels.",
    TaskKind.PHASE_RECOGNITION: "Which surgical phase does this frame show?",
    TaskKind.STEP_RECOGNITION: "Which surgical step does this frame show?",
    TaskKind.ACTION_RECOGNITION: "Which action is being performed in this frame?",
    TaskKind.TRIPLET_RECOGNITION: "Name the instrument, the verb and the target of the interaction in this frame.",
    TaskKind.CVS_ASSESSMENT: "For each of the three critical view of safety criteria, answer yes or no.",
}


def sample_frames(sample_ids: Sequence[str], budget: int, seed: int, salt: str = "") -> list[str]:
    """Uniform sample without replacement, returned in corpus order.

    Deterministic for a fixed (ids, budget, seed, salt); everything is taken
    when the corpus is smaller than the budget.
    """
    ids = list(sample_ids)
    if not ids:
        raise ValueError("cannot sample from an empty corpus")
    if budget >= len(ids):
        return ids
    digest = hashlib.sha256(f"{seed}:{salt}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    chosen = set(rng.sample(range(len(ids)), budget))
    return [sid for i, sid in enumerate(ids) if i in chosen]


def label_pools(records: Iterable[SampleRecord], tasks: Iterable[TaskKind]) -> dict[TaskKind, list[str]]:
    tasks = set(tasks)
    pools: dict[TaskKind, set[str]] = {t: set() for t in tasks}
    for r in records:
        for t, label in r.labels.items():
            if t in tasks:
                pools[t].add(render_label(label))
    return {t: sorted(p) for t, p in pools.items()}


def benchmark_conversations(
    records: Sequence[SampleRecord],
    spec: DatasetSpec,
    protocol: Protocol | str,
    seed: int,
    pools: dict[TaskKind, list[str]] | None = None,
) -> list[Conversation]:
    """One single-turn conversation per (record, benchmarked task)."""
    protocol = Protocol(protocol)
    if protocol not in spec.protocols:
        raise ValueError(f"{spec.dataset_id} does not support the {protocol.value} protocol")
    pools = pools if pools is not None else label_pools(records, spec.tasks)
    out = []
    for rec in records:
        for task in spec.tasks:
            if task not in rec.labels:
                continue
            label = rec.labels[task]
            keyword = render_label(label)
            cid = f"{spec.dataset_id}/{rec.sample_id}/{task.value}"
            answer = f"The current {TASK_NOUNS[task]} is {keyword}."
            if protocol is Protocol.MCQ:
                picked = mcq_options(keyword, pools.get(task, ()), record_rng(seed, cid))
                if picked is None:
                    raise ValueError(f"{spec.dataset_id}: need two distinct {task.value} labels for MCQ")
                options, _ = picked
                turn = Turn(format_mcq_prompt(QUESTIONS[task], options), keyword, (keyword,), task, options, label)
            else:
                turn = Turn(QUESTIONS[task], answer, (keyword,), task, None, label)
            out.append(Conversation(cid, rec.sample_id, protocol, (turn,), rec.image))
    return out
