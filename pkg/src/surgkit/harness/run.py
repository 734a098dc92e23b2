"""End-to-end evaluation run: sample, query or replay, parse, score, persist."""

from __future__ import annotations

import hashlib
import json
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from ..arena import ArenaVector, Leaderboard, LeaderboardEntry, arena_score
from ..datamodel import (
    BOX_TASKS,
    SCHEMA_VERSION,
    BoundingBox,
    Conversation,
    ParseStatus,
    PredictionRecord,
    Protocol,
    SampleRecord,
    TaskKind,
    default_created_at,
    dumps,
    prediction_to_json,
    read_corpus,
)
from ..kernel.mock import Oracle, Planted, Refuser, mock_transport
from ..metrics import MetricReport, ScoredItem, score_task
from ..metrics.tasks import CLASS_LIKE
from ..parsing import ParseConfig, default_config, parse_turn
from .client import ImageProvider, query_all, uri_only
from .sampling import benchmark_conversations, label_pools, sample_frames
from .suite import BenchmarkSuite, DatasetSpec, ModelEndpoint, SuiteError

MOCK_URL = "http://mock.invalid"


class MissingPredictionsError(LookupError):
    def __init__(self, dataset: str, missing: Sequence[str]):
        self.dataset = dataset
        self.missing = list(missing)
        super().__init__(f"{dataset}: no prediction for {len(self.missing)} sampled turn(s): {', '.join(self.missing)}")


@dataclass
class DatasetRun:
    spec: DatasetSpec
    sample_ids: list[str]
    conversations: list[Conversation]
    raw: list[PredictionRecord]
    parsed: list[PredictionRecord]
    report: MetricReport


@dataclass
class RunResult:
    reports: dict[str, MetricReport]
    vector: ArenaVector
    manifest: dict
    run_dir: Path | None = None
    datasets: dict[str, DatasetRun] = field(default_factory=dict)

    @property
    def score(self) -> float:
        return arena_score(self.vector)


def mock_behavior(endpoint: ModelEndpoint):
    if endpoint.mock == "oracle":
        return Oracle()
    if endpoint.mock == "planted":
        return Planted(endpoint.mock_p, endpoint.mock_seed)
    if endpoint.mock == "refuser":
        return Refuser(endpoint.mock_rate, endpoint.mock_seed)
    raise SuiteError(f"unknown mock behaviour {endpoint.mock!r}")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "model"


def _check_groups(spec: DatasetSpec) -> None:
    if len(spec.tasks) > 1 and not set(spec.tasks) <= CLASS_LIKE:
        raise SuiteError(f"{spec.dataset_id}: only class-like tasks can share one dataset report")


def box_vocabulary(records: Sequence[SampleRecord]) -> list[str]:
    labels = set()
    for r in records:
        for task, label in r.labels.items():
            if task in BOX_TASKS:
                for b in label if isinstance(label, tuple) else (label,):
                    if isinstance(b, BoundingBox) and b.label:
                        labels.add(b.label)
    return sorted(labels)


def class_vocabularies(pools: Mapping[TaskKind, Sequence[str]], config: ParseConfig) -> dict[TaskKind, list[str]]:
    return {
        t: sorted(set(pool) | set(config.vocabularies.get(t.value, ())))
        for t, pool in pools.items()
        if t in CLASS_LIKE
    }


def load_predictions(root: str | Path, dataset: str) -> dict[tuple[str, int], PredictionRecord]:
    """Canned replies from ``<root>/<dataset>/predictions.jsonl``.

    Lines need ``conversation_id`` and ``response``; ``turn_index`` defaults to
    0 and ``status`` to ``parsed``. Only refusal and transport-error statuses
    are kept from the file; everything else is re-parsed.
    """
    path = Path(root) / dataset / "predictions.jsonl"
    if not path.is_file():
        return {}
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        status = ParseStatus(obj.get("status") or ParseStatus.PARSED.value)
        response = str(obj.get("response", ""))
        rec = PredictionRecord(
            conversation_id=obj["conversation_id"],
            turn_index=int(obj.get("turn_index", 0)),
            response=response,
            status=status if status in (ParseStatus.REFUSED, ParseStatus.TRANSPORT_ERROR) else ParseStatus.PARSED,
            answer=response,
            retries=int(obj.get("retries", 0)),
            error=obj.get("error"),
        )
        out[(rec.conversation_id, rec.turn_index)] = rec
    return out


def _parse(
    raw: PredictionRecord,
    conv: Conversation,
    protocol: Protocol,
    config: ParseConfig,
    class_vocab: Mapping[TaskKind, Sequence[str]],
    boxes: Sequence[str],
) -> PredictionRecord:
    turn = conv.turns[raw.turn_index]
    base = dict(
        conversation_id=conv.conversation_id,
        turn_index=raw.turn_index,
        response=raw.response,
        sample_id=conv.sample_id,
        task=turn.task,
        retries=raw.retries,
    )
    if raw.status in (ParseStatus.REFUSED, ParseStatus.TRANSPORT_ERROR):
        return PredictionRecord(status=raw.status, error=raw.error, **base)
    res = parse_turn(
        raw.response,
        turn,
        protocol,
        config,
        class_vocabulary=class_vocab.get(turn.task),
        box_vocabulary=boxes,
    )
    return PredictionRecord(
        status=res.status,
        answer=res.value if res.ok else None,
        error="; ".join(res.diagnostics) or None,
        **base,
    )


def _outcomes(records: Sequence[PredictionRecord]) -> dict[str, int]:
    counts = Counter(r.status.value for r in records)
    return {s.value: counts.get(s.value, 0) for s in ParseStatus}


def evaluate_dataset(
    spec: DatasetSpec,
    suite: BenchmarkSuite,
    protocol: Protocol,
    *,
    endpoint: ModelEndpoint | None = None,
    predictions: str | Path | None = None,
    images: ImageProvider = uri_only,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    config: ParseConfig | None = None,
) -> DatasetRun:
    config = config or default_config()
    _check_groups(spec)
    corpus = list(read_corpus(spec.corpus))
    if not corpus:
        raise ValueError(f"{spec.dataset_id}: corpus {spec.corpus} is empty")
    ids = sample_frames([r.sample_id for r in corpus], suite.budget, suite.seed, spec.dataset_id)
    keep = set(ids)
    sampled = [r for r in corpus if r.sample_id in keep]
    pools = label_pools(corpus, spec.tasks)
    convs = benchmark_conversations(sampled, spec, protocol, suite.seed, pools)
    class_vocab = class_vocabularies(pools, config)
    boxes = box_vocabulary(corpus)

    if predictions is not None:
        canned = load_predictions(predictions, spec.dataset_id)
        wanted = [(c.conversation_id, i) for c in convs for i in range(len(c.turns))]
        missing = [f"{cid}#{i}" for cid, i in wanted if (cid, i) not in canned]
        if missing:
            raise MissingPredictionsError(spec.dataset_id, missing)
        raw = [canned[key] for key in wanted]
    elif endpoint is not None:
        if endpoint.mock:
            endpoint_used = ModelEndpoint(**{**endpoint.__dict__, "url": endpoint.url or MOCK_URL})
            transport = transport or mock_transport(convs, mock_behavior(endpoint), {t.value: v for t, v in class_vocab.items()})
        else:
            endpoint_used = endpoint
        raw = query_all(endpoint_used, convs, images, transport=transport, sleep=sleep)
    else:
        raise ValueError("run needs an endpoint or a predictions directory")

    by_id = {c.conversation_id: c for c in convs}
    parsed = [_parse(r, by_id[r.conversation_id], protocol, config, class_vocab, boxes) for r in raw]
    items = []
    for rec in parsed:
        turn = by_id[rec.conversation_id].turns[rec.turn_index]
        items.append(
            ScoredItem(
                task=turn.task,
                gt=turn.label,
                status=rec.status,
                answer=rec.answer,
                response=rec.response,
                reference=turn.answer if protocol is Protocol.OV else None,
            )
        )
    report = score_task(items, text_metrics=protocol is Protocol.OV)
    report.task = spec.dataset_id
    counted = report.n_samples
    assert sum(_outcomes(parsed).values()) == counted == len(raw)
    return DatasetRun(spec, ids, convs, raw, parsed, report)


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(dumps(r) + "\n" for r in rows), encoding="utf-8")


def run_eval(
    suite: BenchmarkSuite,
    protocol: Protocol | str,
    *,
    endpoint: ModelEndpoint | None = None,
    predictions: str | Path | None = None,
    out: str | Path | None = None,
    images: ImageProvider = uri_only,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    model: str | None = None,
) -> RunResult:
    """Evaluate one model on all six datasets.

    Exactly one of ``endpoint`` and ``predictions`` must be given. With
    ``out`` the run directory ``<out>/<run_id>/`` receives the manifest,
    per-dataset predictions, parsed answers and reports, and the leaderboard.
    """
    if (endpoint is None) == (predictions is None):
        raise ValueError("give exactly one of endpoint or predictions")
    protocol = Protocol(protocol)
    started = default_created_at()
    if model is None:
        model = endpoint.identity if endpoint is not None else _predictions_model(predictions)
    decoding = dict(endpoint.decoding) if endpoint is not None else {}

    runs = {}
    for spec in suite.ordered():
        runs[spec.dataset_id] = evaluate_dataset(
            spec,
            suite,
            protocol,
            endpoint=endpoint,
            predictions=predictions,
            images=images,
            transport=transport,
            sleep=sleep,
        )
    reports = {d: r.report for d, r in runs.items()}
    vector = ArenaVector.from_reports({d: r.values for d, r in reports.items()})

    config_hash = suite.config_hash(protocol, {"model": model, "decoding": decoding})
    run_id = f"{_slug(model)}-{protocol.value}-{config_hash[:12]}"
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "config_hash": config_hash,
        "model": model,
        "protocol": protocol.value,
        "source": "endpoint" if endpoint is not None else "predictions",
        "decoding": decoding,
        "budget": suite.budget,
        "seed": suite.seed,
        "datasets": {
            d: {
                "sample_ids": r.sample_ids,
                "n_queries": len(r.raw),
                "outcomes": _outcomes(r.parsed),
                "retries": sum(p.retries for p in r.raw),
            }
            for d, r in runs.items()
        },
        "arena_score": arena_score(vector),
        "started_at": started,
        "finished_at": default_created_at(),
    }
    run_dir = None
    if out is not None:
        run_dir = Path(out) / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        for d, r in runs.items():
            _write_jsonl(run_dir / d / "predictions.jsonl", [prediction_to_json(p) for p in r.raw])
            _write_jsonl(run_dir / d / "parsed.jsonl", [prediction_to_json(p) for p in r.parsed])
            (run_dir / d / "report.json").write_text(r.report.dumps() + "\n", encoding="utf-8")
        Leaderboard([LeaderboardEntry(model, vector, protocol)]).write(run_dir / "leaderboard")
        (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunResult(reports, vector, manifest, run_dir, runs)


def _predictions_model(root: str | Path) -> str:
    meta = Path(root) / "manifest.json"
    if meta.is_file():
        name = json.loads(meta.read_text(encoding="utf-8")).get("model")
        if name:
            return str(name)
    return Path(root).resolve().name


def export_predictions(result: RunResult, root: str | Path) -> Path:
    """Write a run's raw replies as a replayable predictions directory."""
    root = Path(root)
    for d, r in result.datasets.items():
        _write_jsonl(root / d / "predictions.jsonl", [prediction_to_json(p) for p in r.raw])
    (root / "manifest.json").write_text(json.dumps({"model": result.manifest["model"]}, indent=2) + "\n", encoding="utf-8")
    return root


def run_digest(run_dir: str | Path, names: Sequence[str] = ("report.json", "parsed.jsonl", "leaderboard.txt", "leaderboard.json")) -> str:
    """SHA-256 over the replay-stable files of a run directory."""
    h = hashlib.sha256()
    for path in sorted(Path(run_dir).rglob("*")):
        if path.is_file() and path.name in names:
            h.update(str(path.relative_to(run_dir)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()
