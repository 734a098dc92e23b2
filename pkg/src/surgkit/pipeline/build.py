"""End-to-end corpus build: refine, enrich, explain, expand, write."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..datamodel import SampleRecord, read_corpus, write_conversations, write_corpus
from .resources import Lexicon, PromptTemplateSet, load_explanations, load_rules
from .stages import (
    enrich_correlations,
    expand_conversations,
    generate_explanations,
    record_text_length,
    refine_labels,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGES = ("refine", "enrich", "explain", "expand")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class BuildConfig:
    sources: list[str] = field(default_factory=list)
    output: str = "corpus.jsonl"
    lexicon_path: str | None = None
    rules_path: str | None = None
    explanations_path: str | None = None
    templates_path: str | None = None
    seed: int = 0
    mode: str = "mixed"
    interleave_k: int = 8
    multi_turn_ratio: float = 0.5
    mcq_ratio: float = 0.2
    intermediate_dir: str | None = None
    dataset_id: str = "instruction_corpus"
    created_at: str = "1970-01-01T00:00:00Z"

    @classmethod
    def from_file(cls, path: str | Path) -> "BuildConfig":
        """Load a TOML key/value file; relative paths resolve against the file's directory."""
        path = Path(path)
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        base = path.parent

        def resolve(p):
            return None if p is None else str((base / p) if not Path(p).is_absolute() else Path(p))

        for key in ("output", "lexicon_path", "rules_path", "explanations_path", "templates_path", "intermediate_dir"):
            if key in raw:
                raw[key] = resolve(raw[key])
        if "sources" in raw:
            raw["sources"] = [resolve(s) for s in raw["sources"]]
        return cls(**raw)


@dataclass
class BuildReport:
    stages: list[dict] = field(default_factory=list)
    output: str | None = None

    def stage(self, name: str) -> dict:
        return next(s for s in self.stages if s["stage"] == name)

    def to_json(self) -> dict:
        return {"output": self.output, "stages": self.stages}


def _load_sources(sources: Sequence[Any]) -> list[SampleRecord]:
    records: list[SampleRecord] = []
    seen: set[str] = set()
    for src in sources:
        if isinstance(src, SampleRecord):
            items = [src]
        elif isinstance(src, (str, Path)):
            corpus = read_corpus(src)
            if corpus.diagnostics:
                first = corpus.diagnostics[0]
                raise ValueError(f"{src}:{first.line}: {first.message}")
            items = corpus.records
        else:
            items = list(src)
        for r in items:
            if r.sample_id in seen:
                raise ValueError(f"duplicate sample id {r.sample_id!r} across sources")
            seen.add(r.sample_id)
            records.append(r)
    return records


def build_dataset(sources: Sequence[Any], config: BuildConfig) -> BuildReport:
    """Run the four stages in order and write the conversation corpus.

    ``sources`` holds corpus file paths or in-memory record sequences. The
    report carries per-stage counts; with ``config.intermediate_dir`` set the
    record state after each of the first three stages is also written out.
    """
    report = BuildReport(output=config.output)
    try:
        records = _load_sources(sources)
        lexicon = Lexicon.load(config.lexicon_path)
        rules = load_rules(config.rules_path)
        explanations = load_explanations(config.explanations_path)
        prompt_set = PromptTemplateSet.load(config.templates_path, config.seed)
    except Exception as exc:
        raise StageError("load", exc) from exc

    inter = Path(config.intermediate_dir) if config.intermediate_dir else None

    def checkpoint(name: str, recs: list[SampleRecord]) -> None:
        if inter is not None:
            write_corpus(recs, inter / f"{name}.jsonl", dataset_id=config.dataset_id, created_at=config.created_at)

    try:
        refined, ref_report = refine_labels(records, lexicon)
    except Exception as exc:
        raise StageError("refine", exc) from exc
    checkpoint("1_refine", refined)
    report.stages.append(
        {
            "stage": "refine",
            "records": len(refined),
            "substitutions": ref_report.n_substitutions,
            "unmapped": sum(ref_report.unmapped.values()),
            "text_length": sum(record_text_length(r) for r in refined),
        }
    )

    try:
        enriched = enrich_correlations(refined, rules)
    except Exception as exc:
        raise StageError("enrich", exc) from exc
    checkpoint("2_enrich", enriched)
    report.stages.append(
        {
            "stage": "enrich",
            "records": len(enriched),
            "statements": sum(len(r.statements) for r in enriched),
            "text_length": sum(record_text_length(r) for r in enriched),
        }
    )

    try:
        explained, exp_report = generate_explanations(enriched, explanations)
    except Exception as exc:
        raise StageError("explain", exc) from exc
    checkpoint("3_explain", explained)
    report.stages.append(
        {
            "stage": "explain",
            "records": len(explained),
            "applied": exp_report.applied,
            "missing": exp_report.missing,
            "text_length": sum(record_text_length(r) for r in explained),
        }
    )

    try:
        conversations = expand_conversations(
            explained,
            prompt_set,
            config.mode,
            config.seed,
            interleave_k=config.interleave_k,
            multi_turn_ratio=config.multi_turn_ratio,
            mcq_ratio=config.mcq_ratio,
        )
    except Exception as exc:
        raise StageError("expand", exc) from exc
    report.stages.append(
        {
            "stage": "expand",
            "records": len(explained),
            "conversations": len(conversations),
            "turns": sum(len(c.turns) for c in conversations),
            "mcq_conversations": sum(1 for c in conversations if c.protocol.value == "mcq"),
        }
    )

    out = Path(config.output)
    write_conversations(conversations, out, dataset_id=config.dataset_id, created_at=config.created_at)
    report_path = out.with_name(out.stem + ".report.json")
    report_path.write_text(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return report


__all__ = ["BuildConfig", "BuildReport", "StageError", "build_dataset"]
