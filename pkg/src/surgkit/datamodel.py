"""Record schemas shared by the corpus builder, the parser, the metrics and the harness.

Everything here is an immutable value. Corpora are stored as JSON Lines: the
first line is a metadata object ``{schema_version, dataset_id, created_at}``,
each following line is one record.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence, Union

SCHEMA_VERSION = "1.0"


class Tier(str, Enum):
    PERCEPTION = "perception"
    TEMPORAL = "temporal"
    REASONING = "reasoning"

    @property
    def rank(self) -> int:
        return _TIER_RANK[self]


_TIER_RANK = {Tier.PERCEPTION: 0, Tier.TEMPORAL: 1, Tier.REASONING: 2}


class TaskKind(str, Enum):
    INSTRUMENT_RECOGNITION = "instrument_recognition"
    INSTRUMENT_LOCALIZATION_BOX = "instrument_localization_box"
    INSTRUMENT_LOCALIZATION_GRID = "instrument_localization_grid"
    TISSUE_RECOGNITION = "tissue_recognition"
    TISSUE_LOCALIZATION = "tissue_localization"
    PHASE_RECOGNITION = "phase_recognition"
    STEP_RECOGNITION = "step_recognition"
    ACTION_RECOGNITION = "action_recognition"
    TRIPLET_RECOGNITION = "triplet_recognition"
    CVS_ASSESSMENT = "cvs_assessment"

    @property
    def tier(self) -> Tier:
        if self in _PERCEPTION:
            return Tier.PERCEPTION
        if self is TaskKind.CVS_ASSESSMENT:
            return Tier.REASONING
        return Tier.TEMPORAL

    @property
    def order(self) -> int:
        """Position in the declared hierarchy; used as a stable sort key."""
        return _TASK_ORDER[self]


_PERCEPTION = frozenset(
    {
        TaskKind.INSTRUMENT_RECOGNITION,
        TaskKind.INSTRUMENT_LOCALIZATION_BOX,
        TaskKind.INSTRUMENT_LOCALIZATION_GRID,
        TaskKind.TISSUE_RECOGNITION,
        TaskKind.TISSUE_LOCALIZATION,
    }
)
_TASK_ORDER = {kind: i for i, kind in enumerate(TaskKind)}

BOX_TASKS = frozenset({TaskKind.INSTRUMENT_LOCALIZATION_BOX, TaskKind.TISSUE_LOCALIZATION})
CLASS_TASKS = frozenset(
    {
        TaskKind.INSTRUMENT_RECOGNITION,
        TaskKind.TISSUE_RECOGNITION,
        TaskKind.PHASE_RECOGNITION,
        TaskKind.STEP_RECOGNITION,
        TaskKind.ACTION_RECOGNITION,
    }
)


class Protocol(str, Enum):
    OV = "ov"
    MCQ = "mcq"


class ParseStatus(str, Enum):
    PARSED = "parsed"
    PARSE_FAILED = "parse_failed"
    REFUSED = "refused"
    TRANSPORT_ERROR = "transport_error"


class GridPosition(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"
    CENTER = "center"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in absolute pixels, origin top-left."""

    x1: float
    y1: float
    x2: float
    y2: float
    label: str | None = None

    @property
    def area(self) -> float:
        return max(0.0, self.x2 - self.x1) * max(0.0, self.y2 - self.y1)

    @property
    def is_valid(self) -> bool:
        coords = (self.x1, self.y1, self.x2, self.y2)
        return all(math.isfinite(c) and c >= 0 for c in coords) and self.x1 < self.x2 and self.y1 < self.y2

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class GridCell:
    position: GridPosition
    label: str | None = None


@dataclass(frozen=True)
class Triplet:
    instrument: str
    verb: str
    target: str

    def components(self) -> tuple[str, str, str]:
        return (self.instrument, self.verb, self.target)


@dataclass(frozen=True)
class CvsVector:
    """The three safety criteria: cystic plate, lower third cleared, two structures."""

    c1: bool
    c2: bool
    c3: bool

    @property
    def achieved(self) -> bool:
        return self.c1 and self.c2 and self.c3

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.c1, self.c2, self.c3)


Boxes = tuple  # tuple[BoundingBox, ...]
Label = Union[str, "tuple[BoundingBox, ...]", GridCell, Triplet, CvsVector]


@dataclass(frozen=True)
class Statement:
    """A combined sentence joining the labels of two correlated tasks."""

    tasks: tuple[TaskKind, TaskKind]
    text: str


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    image: str
    surgery_type: str
    dataset_id: str
    labels: Mapping[TaskKind, Any]
    image_size: tuple[int, int] | None = None  # (width, height)
    statements: tuple[Statement, ...] = ()
    explanations: Mapping[TaskKind, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Turn:
    prompt: str
    answer: str
    keywords: tuple[str, ...]
    task: TaskKind
    options: tuple[str, ...] | None = None
    label: Any = None
    template_id: str | None = None

    @property
    def correct_option(self) -> int | None:
        if not self.options:
            return None
        target = normalize_text(self.answer)
        hits = [i for i, o in enumerate(self.options) if normalize_text(o) == target]
        return hits[0] if len(hits) == 1 else None


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    sample_id: str
    protocol: Protocol
    turns: tuple[Turn, ...]
    image: str | None = None


@dataclass(frozen=True)
class PredictionRecord:
    conversation_id: str
    turn_index: int
    response: str
    status: ParseStatus
    answer: Any = None
    sample_id: str | None = None
    task: TaskKind | None = None
    retries: int = 0
    error: str | None = None

    def __post_init__(self):
        if self.status is ParseStatus.PARSED and self.answer is None:
            raise ValueError("a parsed prediction must carry an answer")


_WS = re.compile(r"\s+")


def normalize_text(text: str, *, casefold: bool = True, collapse: bool = True) -> str:
    if collapse:
        text = _WS.sub(" ", text).strip()
    if casefold:
        text = text.casefold()
    return text


def _fmt_num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def render_box(box: BoundingBox) -> str:
    coords = ", ".join(_fmt_num(c) for c in box.coords())
    return f"{box.label} [{coords}]" if box.label else f"[{coords}]"


def render_cvs(cvs: CvsVector) -> str:
    return "; ".join(f"criterion {i}: {'yes' if v else 'no'}" for i, v in enumerate(cvs.as_tuple(), 1))


def render_label(label: Any) -> str:
    """Canonical text for a label; also the ground-truth keyword of an OV turn."""
    if isinstance(label, str):
        return label
    if isinstance(label, GridCell):
        return label.position.value
    if isinstance(label, Triplet):
        return ", ".join(label.components())
    if isinstance(label, CvsVector):
        return render_cvs(label)
    if isinstance(label, BoundingBox):
        return render_box(label)
    if isinstance(label, tuple):
        return "; ".join(render_box(b) for b in label)
    raise TypeError(f"not a label: {label!r}")


# ---------------------------------------------------------------- JSON codec


def label_to_json(label: Any) -> dict:
    if isinstance(label, str):
        return {"kind": "class", "value": label}
    if isinstance(label, BoundingBox):
        label = (label,)
    if isinstance(label, tuple):
        return {"kind": "boxes", "boxes": [_box_to_json(b) for b in label]}
    if isinstance(label, GridCell):
        return {"kind": "grid", "position": label.position.value, "label": label.label}
    if isinstance(label, Triplet):
        return {"kind": "triplet", "instrument": label.instrument, "verb": label.verb, "target": label.target}
    if isinstance(label, CvsVector):
        return {"kind": "cvs", "c1": label.c1, "c2": label.c2, "c3": label.c3}
    raise TypeError(f"not a label: {label!r}")


def _box_to_json(b: BoundingBox) -> dict:
    out = {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2}
    if b.label is not None:
        out["label"] = b.label
    return out


def label_from_json(obj: Mapping) -> Any:
    kind = obj["kind"]
    if kind == "class":
        if not isinstance(obj["value"], str):
            raise ValueError("class label must be text")
        return obj["value"]
    if kind == "boxes":
        return tuple(
            BoundingBox(b["x1"], b["y1"], b["x2"], b["y2"], b.get("label")) for b in obj["boxes"]
        )
    if kind == "grid":
        return GridCell(GridPosition(obj["position"]), obj.get("label"))
    if kind == "triplet":
        return Triplet(obj["instrument"], obj["verb"], obj["target"])
    if kind == "cvs":
        return CvsVector(bool(obj["c1"]), bool(obj["c2"]), bool(obj["c3"]))
    raise ValueError(f"unknown label kind {kind!r}")


def record_to_json(r: SampleRecord) -> dict:
    out: dict[str, Any] = {
        "sample_id": r.sample_id,
        "image": r.image,
        "surgery_type": r.surgery_type,
        "dataset_id": r.dataset_id,
        "image_size": list(r.image_size) if r.image_size else None,
        "labels": {k.value: label_to_json(r.labels[k]) for k in sorted(r.labels, key=lambda t: t.order)},
    }
    if r.statements:
        out["statements"] = [{"tasks": [t.value for t in s.tasks], "text": s.text} for s in r.statements]
    if r.explanations:
        out["explanations"] = {
            k.value: r.explanations[k] for k in sorted(r.explanations, key=lambda t: t.order)
        }
    return out


def record_from_json(obj: Mapping) -> SampleRecord:
    size = obj.get("image_size")
    return SampleRecord(
        sample_id=str(obj["sample_id"]),
        image=str(obj["image"]),
        surgery_type=str(obj["surgery_type"]),
        dataset_id=str(obj["dataset_id"]),
        labels={TaskKind(k): label_from_json(v) for k, v in obj["labels"].items()},
        image_size=(int(size[0]), int(size[1])) if size else None,
        statements=tuple(
            Statement((TaskKind(s["tasks"][0]), TaskKind(s["tasks"][1])), s["text"])
            for s in obj.get("statements", ())
        ),
        explanations={TaskKind(k): v for k, v in obj.get("explanations", {}).items()},
    )


def turn_to_json(t: Turn) -> dict:
    out: dict[str, Any] = {
        "prompt": t.prompt,
        "answer": t.answer,
        "keywords": list(t.keywords),
        "task": t.task.value,
    }
    if t.options is not None:
        out["options"] = list(t.options)
    if t.label is not None:
        out["label"] = label_to_json(t.label)
    if t.template_id is not None:
        out["template_id"] = t.template_id
    return out


def turn_from_json(obj: Mapping) -> Turn:
    return Turn(
        prompt=obj["prompt"],
        answer=obj["answer"],
        keywords=tuple(obj["keywords"]),
        task=TaskKind(obj["task"]),
        options=tuple(obj["options"]) if obj.get("options") is not None else None,
        label=label_from_json(obj["label"]) if obj.get("label") is not None else None,
        template_id=obj.get("template_id"),
    )


def conversation_to_json(c: Conversation) -> dict:
    out = {
        "conversation_id": c.conversation_id,
        "sample_id": c.sample_id,
        "protocol": c.protocol.value,
        "turns": [turn_to_json(t) for t in c.turns],
    }
    if c.image is not None:
        out["image"] = c.image
    return out


def conversation_from_json(obj: Mapping) -> Conversation:
    return Conversation(
        conversation_id=obj["conversation_id"],
        sample_id=obj["sample_id"],
        protocol=Protocol(obj["protocol"]),
        turns=tuple(turn_from_json(t) for t in obj["turns"]),
        image=obj.get("image"),
    )


def prediction_to_json(p: PredictionRecord) -> dict:
    return {
        "conversation_id": p.conversation_id,
        "turn_index": p.turn_index,
        "sample_id": p.sample_id,
        "task": p.task.value if p.task else None,
        "response": p.response,
        "status": p.status.value,
        "answer": label_to_json(p.answer) if p.answer is not None else None,
        "retries": p.retries,
        "error": p.error,
    }


def prediction_from_json(obj: Mapping) -> PredictionRecord:
    return PredictionRecord(
        conversation_id=obj["conversation_id"],
        turn_index=int(obj.get("turn_index", 0)),
        response=obj.get("response", ""),
        status=ParseStatus(obj["status"]),
        answer=label_from_json(obj["answer"]) if obj.get("answer") is not None else None,
        sample_id=obj.get("sample_id"),
        task=TaskKind(obj["task"]) if obj.get("task") else None,
        retries=int(obj.get("retries", 0)),
        error=obj.get("error"),
    )


def dumps(obj: Any) -> str:
    """Compact, key-order-preserving JSON used for every line-delimited file."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()
    normalized: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _canonicalizer(lexicon: Any, scope: str) -> Callable[[str], str]:
    if lexicon is None:
        return lambda s: s
    canonical = getattr(lexicon, "canonical", None)
    if canonical is not None:
        return lambda s: canonical(s, scope=scope)
    return lambda s: lexicon.get(s, s)


def _check_box(path: str, box: Any, extent: tuple[int, int] | None, out: list[Violation]) -> None:
    if not isinstance(box, BoundingBox):
        out.append(Violation(path, "not a bounding box"))
        return
    coords = box.coords()
    if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
        out.append(Violation(path, "non-finite coordinate"))
        return
    if any(c < 0 for c in coords):
        out.append(Violation(path, "negative coordinate"))
    if not (box.x1 < box.x2 and box.y1 < box.y2):
        out.append(Violation(path, "box ordering"))
    if extent is not None and (box.x2 > extent[0] or box.y2 > extent[1]):
        out.append(Violation(path, "box outside image extent"))


def validate_record(
    record: SampleRecord,
    *,
    lexicon: Any = None,
    vocabularies: Mapping[str, Iterable[str]] | None = None,
) -> ValidationResult:
    """Check a record against every schema invariant without modifying it.

    ``vocabularies`` may carry ``instrument``/``verb``/``target`` sets for triplet
    membership; a component that only becomes a member after lexicon
    canonicalization is accepted and listed in ``normalized``.
    """
    out: list[Violation] = []
    normalized: list[str] = []
    if not record.sample_id:
        out.append(Violation("sample_id", "empty sample id"))
    if not record.surgery_type or not record.surgery_type.strip():
        out.append(Violation("surgery_type", "empty surgery type"))
    if not record.labels:
        out.append(Violation("labels", "no labels"))
    for task, label in record.labels.items():
        path = f"labels.{task.value}"
        if not isinstance(task, TaskKind):
            out.append(Violation(path, "unknown task kind"))
            continue
        if task in CLASS_TASKS:
            if not isinstance(label, str) or not label.strip():
                out.append(Violation(path, "empty class label"))
        elif task in BOX_TASKS:
            boxes = (label,) if isinstance(label, BoundingBox) else label
            if not isinstance(boxes, tuple) or not boxes:
                out.append(Violation(path, "expected at least one box"))
                continue
            for i, b in enumerate(boxes):
                _check_box(f"{path}[{i}]", b, record.image_size, out)
        elif task is TaskKind.INSTRUMENT_LOCALIZATION_GRID:
            if not isinstance(label, GridCell) or not isinstance(label.position, GridPosition):
                out.append(Violation(path, "grid position"))
        elif task is TaskKind.TRIPLET_RECOGNITION:
            if not isinstance(label, Triplet):
                out.append(Violation(path, "not a triplet"))
                continue
            for comp in ("instrument", "verb", "target"):
                value = getattr(label, comp)
                if not value:
                    out.append(Violation(f"{path}.{comp}", "empty triplet component"))
                    continue
                vocab = (vocabularies or {}).get(comp)
                if vocab is None:
                    continue
                vocab = set(vocab)
                if value in vocab:
                    continue
                canon = _canonicalizer(lexicon, f"triplet.{comp}")(value)
                if canon in vocab:
                    normalized.append(f"{path}.{comp}")
                else:
                    out.append(Violation(f"{path}.{comp}", "triplet vocabulary"))
        elif task is TaskKind.CVS_ASSESSMENT:
            if not isinstance(label, CvsVector):
                out.append(Violation(path, "not a CVS vector"))
    return ValidationResult(tuple(out), tuple(normalized))


# ---------------------------------------------------------------- corpus I/O


class SchemaVersionError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str


@dataclass
class Corpus(Sequence):
    """Records read from a corpus file, plus its metadata and per-line diagnostics."""

    records: list
    metadata: dict = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __getitem__(self, i):
        return self.records[i]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator:
        return iter(self.records)


def default_created_at() -> str:
    """ISO timestamp honouring ``SOURCE_DATE_EPOCH`` for reproducible files."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch is not None
        else datetime.now(tz=timezone.utc).replace(microsecond=0)
    )
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _check_version(meta: Mapping) -> None:
    version = str(meta.get("schema_version", ""))
    major = version.split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaVersionError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")


def _read_jsonl(path: str | os.PathLike, decode: Callable[[Mapping], Any], id_attr: str) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        return Corpus([])
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaVersionError(f"line 1: metadata line is not JSON ({exc.msg})") from None
    if not isinstance(meta, dict) or "schema_version" not in meta:
        raise SchemaVersionError("line 1: missing metadata record")
    _check_version(meta)
    corpus = Corpus([], dict(meta))
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            item = decode(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
            corpus.diagnostics.append(Diagnostic(lineno, f"{type(exc).__name__}: {exc}"))
            continue
        key = getattr(item, id_attr)
        if key in seen:
            corpus.diagnostics.append(Diagnostic(lineno, f"duplicate id {key!r}"))
            continue
        seen.add(key)
        corpus.records.append(item)
    return corpus


def _write_jsonl(
    items: Iterable,
    path: str | os.PathLike,
    encode: Callable[[Any], dict],
    dataset_id: str | None,
    created_at: str | None,
) -> int:
    meta_in = items.metadata if isinstance(items, Corpus) else {}
    items = list(items)
    if dataset_id is None:
        dataset_id = meta_in.get("dataset_id")
        if dataset_id is None:
            ids = sorted({getattr(r, "dataset_id", "") for r in items} - {""})
            dataset_id = ids[0] if len(ids) == 1 else ("mixed" if ids else "")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "dataset_id": dataset_id,
        "created_at": created_at or meta_in.get("created_at") or default_created_at(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(meta) + "\n")
        for item in items:
            fh.write(dumps(encode(item)) + "\n")
    return len(items)


def read_corpus(path: str | os.PathLike) -> Corpus:
    """Read sample records in file order; malformed lines become diagnostics."""
    return _read_jsonl(path, record_from_json, "sample_id")


def write_corpus(
    records: Iterable[SampleRecord],
    path: str | os.PathLike,
    *,
    dataset_id: str | None = None,
    created_at: str | None = None,
) -> int:
    return _write_jsonl(records, path, record_to_json, dataset_id, created_at)


def read_conversations(path: str | os.PathLike) -> Corpus:
    return _read_jsonl(path, conversation_from_json, "conversation_id")


def write_conversations(
    conversations: Iterable[Conversation],
    path: str | os.PathLike,
    *,
    dataset_id: str | None = None,
    created_at: str | None = None,
) -> int:
    return _write_jsonl(conversations, path, conversation_to_json, dataset_id, created_at)


def validate_conversation(conv: Conversation) -> list[Violation]:
    out: list[Violation] = []
    tiers = [t.task.tier.rank for t in conv.turns]
    if tiers != sorted(tiers):
        out.append(Violation("turns", "turns not ordered perception -> temporal -> reasoning"))
    for i, turn in enumerate(conv.turns):
        path = f"turns[{i}]"
        if conv.protocol is Protocol.MCQ:
            opts = turn.options or ()
            if len({normalize_text(o) for o in opts}) != len(opts) or len(opts) < 2:
                out.append(Violation(path, "MCQ needs at least two distinct options"))
            if turn.correct_option is None:
                out.append(Violation(path, "MCQ answer must match exactly one option"))
        else:
            if not turn.keywords or not all(k.strip() for k in turn.keywords):
                out.append(Violation(path, "OV turn needs a non-empty keyword"))
    return out
