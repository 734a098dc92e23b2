"""Benchmark harness: sampling, model queries, parsing and scoring, run persistence."""

from .client import RateLimiter, build_request, query_all, query_model, read_image_file, uri_only
from .run import (
    DatasetRun,
    MissingPredictionsError,
    RunResult,
    evaluate_dataset,
    export_predictions,
    load_predictions,
    run_digest,
    run_eval,
)
from .sampling import benchmark_conversations, label_pools, sample_frames
from .suite import DEFAULT_BUDGET, DEFAULT_TASKS, BenchmarkSuite, DatasetSpec, ModelEndpoint, SuiteError, load_suite
from .synthetic import synthetic_records, write_synthetic_suite

__all__ = [
    "BenchmarkSuite",
    "DEFAULT_BUDGET",
    "DEFAULT_TASKS",
    "DatasetRun",
    "DatasetSpec",
    "MissingPredictionsError",
    "ModelEndpoint",
    "RateLimiter",
    "RunResult",
    "SuiteError",
    "benchmark_conversations",
    "build_request",
    "evaluate_dataset",
    "export_predictions",
    "label_pools",
    "load_predictions",
    "load_suite",
    "query_all",
    "query_model",
    "read_image_file",
    "run_digest",
    "run_eval",
    "sample_frames",
    "synthetic_records",
    "uri_only",
    "write_synthetic_suite",
]
