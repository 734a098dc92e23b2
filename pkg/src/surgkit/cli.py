"""Command-line entry point (``surgkit``)."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .arena import entries_from_reports, leaderboard
from .datamodel import (
    Conversation,
    ParseStatus,
    PredictionRecord,
    Protocol,
    TaskKind,
    Turn,
    dumps,
    label_from_json,
    prediction_from_json,
    prediction_to_json,
    read_conversations,
    read_corpus,
    render_label,
    turn_from_json,
)
from .metrics import ScoredItem, score_task
from .parsing import default_config, parse_turn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Build instruction corpora, parse and score model replies, and run the benchmark."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


# ------------------------------------------------------------------ pipeline


@main.group()
def pipeline() -> None:
    """Instruction-corpus construction."""


@pipeline.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def pipeline_build(config_path: str) -> None:
    """Run refine, enrich, explain and expand over the configured sources."""
    from .pipeline import BuildConfig, StageError, build_dataset

    config = BuildConfig.from_file(config_path)
    try:
        report = build_dataset(config.sources, config)
    except StageError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True))


# ------------------------------------------------------------------ parse


def _read_jsonl(path: str) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _turn_for(obj: dict, task: TaskKind, convs: dict[str, Conversation]):
    cid = obj.get("conversation_id")
    if cid in convs:
        return convs[cid].turns[int(obj.get("turn_index", 0))]
    if "turn" in obj:
        return turn_from_json(obj["turn"])
    label = label_from_json(obj["label"]) if obj.get("label") else None
    keywords = tuple(obj.get("keywords", ())) or ((render_label(label),) if label is not None else ())
    return Turn(obj.get("prompt", ""), obj.get("answer", ""), keywords, task, tuple(obj["options"]) if obj.get("options") else None, label)


@main.command("parse")
@click.option("--task", required=True, type=click.Choice([t.value for t in TaskKind]))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--protocol", type=click.Choice(["ov", "mcq"]), default="ov", show_default=True)
@click.option("--conversations", type=click.Path(exists=True, dir_okay=False), help="Conversation file the replies answer.")
def parse_cmd(task: str, in_path: str, out_path: str, protocol: str, conversations: str | None) -> None:
    """Parse raw replies (JSONL with a ``response`` field) into structured answers.

    Each line is matched to its turn through ``conversation_id`` in
    ``--conversations``, an inline ``turn`` object, or inline ``keywords`` /
    ``options`` / ``label`` fields.
    """
    kind = TaskKind(task)
    convs = {c.conversation_id: c for c in read_conversations(conversations)} if conversations else {}
    config = default_config()
    rows = []
    counts = {s.value: 0 for s in ParseStatus}
    for i, obj in enumerate(_read_jsonl(in_path)):
        try:
            turn = _turn_for(obj, kind, convs)
            if protocol == "ov" and not turn.keywords:
                raise ValueError("open-vocabulary parsing needs keywords or a label")
            if protocol == "mcq" and not turn.options:
                raise ValueError("multiple-choice parsing needs options")
        except (KeyError, ValueError, IndexError, TypeError) as exc:
            raise click.ClickException(f"line {i + 1}: cannot build the turn to parse against ({exc!r})") from exc
        res = parse_turn(str(obj.get("response", "")), turn, protocol, config)
        rec = PredictionRecord(
            conversation_id=obj.get("conversation_id", str(i)),
            turn_index=int(obj.get("turn_index", 0)),
            response=str(obj.get("response", "")),
            status=res.status,
            answer=res.value if res.ok else None,
            sample_id=obj.get("sample_id"),
            task=kind,
            error="; ".join(res.diagnostics) or None,
        )
        counts[rec.status.value] += 1
        rows.append(dumps(prediction_to_json(rec)))
    Path(out_path).write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    click.echo(json.dumps(counts, sort_keys=True))


# ------------------------------------------------------------------ metrics


@main.group()
def metrics() -> None:
    """Scoring."""


def _ground_truth(path: str, kind: TaskKind) -> dict[tuple[str, int], tuple]:
    """(key) -> (label, reference answer) from a conversation file or a record corpus."""
    first = Path(path).read_text(encoding="utf-8").split("\n", 2)
    body = json.loads(first[1]) if len(first) > 1 and first[1].strip() else {}
    out = {}
    if "turns" in body:
        for conv in read_conversations(path):
            for i, turn in enumerate(conv.turns):
                if turn.task is kind and turn.label is not None:
                    out[(conv.conversation_id, i)] = (turn.label, turn.answer)
    else:
        for rec in read_corpus(path):
            if kind in rec.labels:
                out[(rec.sample_id, 0)] = (rec.labels[kind], None)
    return out


@metrics.command("compute")
@click.option("--task", required=True, type=click.Choice([t.value for t in TaskKind]))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--text-metrics", is_flag=True, help="Also score BLEU-4, METEOR and ROUGE-1 against reference answers.")
def metrics_compute(task: str, gt_path: str, pred_path: str, out_path: str, text_metrics: bool) -> None:
    """Score parsed predictions against ground truth and write a report.

    With a conversation file as ``--gt`` predictions are keyed by
    (conversation_id, turn_index); with a record corpus by sample_id.
    """
    kind = TaskKind(task)
    gt = _ground_truth(gt_path, kind)
    preds = {}
    for obj in _read_jsonl(pred_path):
        rec = prediction_from_json(obj)
        preds[(rec.conversation_id, rec.turn_index)] = rec
        if rec.sample_id:
            preds.setdefault((rec.sample_id, 0), rec)
    missing = [f"{k[0]}#{k[1]}" for k in gt if k not in preds]
    if missing:
        raise click.ClickException(f"no prediction for {len(missing)} item(s): {', '.join(missing[:20])}")
    items = [
        ScoredItem(kind, label, preds[key].status, preds[key].answer, preds[key].response, reference)
        for key, (label, reference) in gt.items()
    ]
    report = score_task(items, text_metrics=text_metrics)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(report.dumps() + "\n", encoding="utf-8")
    click.echo(report.dumps())


# ------------------------------------------------------------------ arena


@main.command("arena")
@click.option("--reports", "reports_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_stem", required=True, type=click.Path(), help="Output stem; .txt and .json are written.")
def arena_cmd(reports_dir: str, out_stem: str) -> None:
    """Rank models by arena score from per-dataset reports."""
    board = leaderboard(entries_from_reports(reports_dir))
    board.write(out_stem)
    click.echo(board.to_text())


# ------------------------------------------------------------------ bench


@main.group()
def bench() -> None:
    """End-to-end benchmark runs."""


@bench.command("run")
@click.option("--suite", "suite_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--endpoint", default=None, help="Endpoint name from the suite file.")
@click.option("--predictions", default=None, type=click.Path(exists=True, file_okay=False), help="Canned predictions directory.")
@click.option("--protocol", type=click.Choice(["ov", "mcq"]), default="ov", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the suite seed.")
@click.option("--budget", type=int, default=None, help="Override the per-dataset sample budget.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def bench_run(suite_path, endpoint, predictions, protocol, seed, budget, out_dir) -> None:
    """Sample, query (or replay), parse, score and write a run directory."""
    from .harness import MissingPredictionsError, SuiteError, load_suite, run_eval

    if (endpoint is None) == (predictions is None):
        raise click.UsageError("give exactly one of --endpoint and --predictions")
    try:
        suite = load_suite(suite_path, seed=seed, budget=budget)
        ep = None
        if endpoint is not None:
            if endpoint not in suite.endpoints:
                raise click.ClickException(f"unknown endpoint {endpoint!r}; known: {', '.join(sorted(suite.endpoints))}")
            ep = suite.endpoints[endpoint]
        result = run_eval(suite, Protocol(protocol), endpoint=ep, predictions=predictions, out=out_dir)
    except (SuiteError, MissingPredictionsError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo((result.run_dir / "leaderboard.txt").read_text(encoding="utf-8"))
    click.echo(f"run directory: {result.run_dir}")


# ------------------------------------------------------------------ kernel


@main.group()
def kernel() -> None:
    """Numeric reference kernel."""


@kernel.command("selftest")
@click.option("--seed", type=int, default=0, show_default=True)
def kernel_selftest(seed: int) -> None:
    """Check the kernel invariants and print a pass/fail table."""
    from .kernel.selftest import format_table, run_selftest

    results = run_selftest(seed)
    click.echo(format_table(results))
    if not all(r.passed for r in results):
        sys.exit(1)


if __name__ == "__main__":
    main()
