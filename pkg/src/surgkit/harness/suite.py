"""Benchmark suite and model endpoint configuration."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..arena import DATASET_IDS, PRIMARY_METRICS
from ..datamodel import Protocol, TaskKind

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_TASKS = {
    "endovis2017": (TaskKind.INSTRUMENT_LOCALIZATION_BOX,),
    "endovis2018_vqa": (
        TaskKind.INSTRUMENT_RECOGNITION,
        TaskKind.TISSUE_RECOGNITION,
        TaskKind.INSTRUMENT_LOCALIZATION_GRID,
    ),
    "cholec80": (TaskKind.PHASE_RECOGNITION,),
    "sar_rarp": (TaskKind.ACTION_RECOGNITION,),
    "cholect50": (TaskKind.TRIPLET_RECOGNITION,),
    "endoscape2023_cvs": (TaskKind.CVS_ASSESSMENT,),
}
DEFAULT_BUDGET = 1000


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    dataset_id: str
    corpus: str
    tasks: tuple[TaskKind, ...]
    protocols: tuple[Protocol, ...] = (Protocol.OV, Protocol.MCQ)

    @property
    def primary_metric(self) -> str:
        return PRIMARY_METRICS[self.dataset_id][1]

    @property
    def arena_field(self) -> str:
        return PRIMARY_METRICS[self.dataset_id][0]


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    url: str = ""
    model: str = ""
    token_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff: float = 0.5
    rate_limit: float | None = None  # requests per second
    decoding: Mapping[str, Any] = field(default_factory=lambda: {"temperature": 0.0, "top_p": 1.0, "max_tokens": 512})
    # in-process mock model: "oracle", "planted" or "refuser"
    mock: str | None = None
    mock_p: float = 1.0
    mock_rate: float = 0.0
    mock_seed: int = 0

    def __post_init__(self):
        if self.timeout <= 0:
            raise SuiteError("endpoint timeout must be positive")
        if self.max_retries < 0:
            raise SuiteError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise SuiteError("max_in_flight must be >= 1")
        if self.rate_limit is not None and self.rate_limit <= 0:
            raise SuiteError("rate_limit must be positive")
        if not self.url and not self.mock:
            raise SuiteError(f"endpoint {self.name!r} needs a url or a mock behaviour")

    @property
    def identity(self) -> str:
        if self.mock == "planted":
            return f"mock-planted-p{self.mock_p:g}-s{self.mock_seed}"
        if self.mock == "refuser":
            return f"mock-refuser-r{self.mock_rate:g}-s{self.mock_seed}"
        if self.mock:
            return f"mock-{self.mock}"
        return self.model or self.name


@dataclass(frozen=True)
class BenchmarkSuite:
    datasets: Mapping[str, DatasetSpec]
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    endpoints: Mapping[str, ModelEndpoint] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.datasets) != set(DATASET_IDS):
            missing = sorted(set(DATASET_IDS) - set(self.datasets))
            extra = sorted(set(self.datasets) - set(DATASET_IDS))
            raise SuiteError(f"suite must name exactly the six datasets (missing {missing}, unknown {extra})")
        if self.budget < 1:
            raise SuiteError("budget must be >= 1")

    def ordered(self) -> list[DatasetSpec]:
        return [self.datasets[d] for d in DATASET_IDS]

    def config_hash(self, protocol: Protocol | str, extra: Mapping[str, Any] | None = None) -> str:
        """SHA-256 over the suite description, corpus contents, protocol and ``extra``."""
        desc = {
            "budget": self.budget,
            "seed": self.seed,
            "protocol": Protocol(protocol).value,
            "datasets": {
                d.dataset_id: {
                    "tasks": [t.value for t in d.tasks],
                    "corpus_sha256": _file_digest(d.corpus),
                }
                for d in self.ordered()
            },
            "extra": dict(extra or {}),
        }
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode("utf-8")).hexdigest()


def _file_digest(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def load_suite(path: str | Path, *, budget: int | None = None, seed: int | None = None) -> BenchmarkSuite:
    """Read a TOML suite.

    ``[datasets.<id>]`` tables carry ``corpus`` (relative to the suite file)
    and optionally ``tasks`` and ``protocols``; ``[endpoints.<name>]`` tables
    carry the endpoint fields. Top-level ``budget`` and ``seed`` are optional.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = path.parent
    datasets = {}
    for did, spec in raw.get("datasets", {}).items():
        if did not in DEFAULT_TASKS:
            raise SuiteError(f"unknown dataset {did!r}")
        corpus = Path(spec["corpus"])
        datasets[did] = DatasetSpec(
            dataset_id=did,
            corpus=str(corpus if corpus.is_absolute() else base / corpus),
            tasks=tuple(TaskKind(t) for t in spec.get("tasks", [t.value for t in DEFAULT_TASKS[did]])),
            protocols=tuple(Protocol(p) for p in spec.get("protocols", ["ov", "mcq"])),
        )
    endpoints = {}
    for name, spec in raw.get("endpoints", {}).items():
        spec = dict(spec)
        if "decoding" in spec:
            spec["decoding"] = dict(spec["decoding"])
        endpoints[name] = ModelEndpoint(name=name, **spec)
    return BenchmarkSuite(
        datasets=datasets,
        budget=budget if budget is not None else int(raw.get("budget", DEFAULT_BUDGET)),
        seed=seed if seed is not None else int(raw.get("seed", 0)),
        endpoints=endpoints,
    )
