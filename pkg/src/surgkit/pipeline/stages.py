"""The four corpus-construction stages.

Each stage is a pure function over a sequence of records, wrapped by a
scikit-learn transformer so the stages compose with ``sklearn.pipeline.Pipeline``::

    Pipeline([("refine", LabelRefiner()), ("enrich", CorrelationEnricher()),
              ("explain", ExplanationGenerator()), ("expand", ConversationExpander(seed=7))])
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..datamodel import (
    Conversation,
    GridCell,
    Protocol,
    SampleRecord,
    Statement,
    TaskKind,
    Triplet,
    Turn,
    normalize_text,
    render_label,
)
from .resources import (
    ConversationTemplate,
    CorrelationRule,
    ExplanationTemplate,
    Lexicon,
    PromptTemplateSet,
    ResourceError,
    lexicon_key,
    load_explanations,
    load_rules,
)

MAX_TURNS = 6
OPTION_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

TASK_NOUNS = {
    TaskKind.INSTRUMENT_RECOGNITION: "instrument",
    TaskKind.INSTRUMENT_LOCALIZATION_BOX: "instrument location",
    TaskKind.INSTRUMENT_LOCALIZATION_GRID: "instrument position",
    TaskKind.TISSUE_RECOGNITION: "tissue",
    TaskKind.TISSUE_LOCALIZATION: "tissue location",
    TaskKind.PHASE_RECOGNITION: "phase",
    TaskKind.STEP_RECOGNITION: "step",
    TaskKind.ACTION_RECOGNITION: "action",
    TaskKind.TRIPLET_RECOGNITION: "instrument-verb-target triplet",
    TaskKind.CVS_ASSESSMENT: "critical view of safety assessment",
}


def record_rng(seed: int, key: str) -> random.Random:
    """Per-item generator so results do not depend on processing order."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------- stage 1


@dataclass
class RefinementReport:
    records: int = 0
    substitutions: Counter = field(default_factory=Counter)  # (task, raw, replacement) -> n
    unmapped: Counter = field(default_factory=Counter)  # (task, raw) -> n

    @property
    def n_substitutions(self) -> int:
        return sum(self.substitutions.values())

    def to_json(self) -> dict:
        return {
            "records": self.records,
            "substitutions": [
                {"task": t, "raw": r, "replacement": c, "count": n}
                for (t, r, c), n in sorted(self.substitutions.items())
            ],
            "unmapped": [{"task": t, "raw": r, "count": n} for (t, r), n in sorted(self.unmapped.items())],
        }


def _refine_text(text: str | None, scope: str, task: TaskKind, lexicon: Lexicon, report: RefinementReport):
    if text is None:
        return None
    entry = lexicon.lookup(text, scope)
    if entry is not None:
        if entry.replacement != text:
            report.substitutions[(task.value, text, entry.replacement)] += 1
        return entry.replacement
    if not lexicon.is_canonical(text, scope):
        report.unmapped[(task.value, text)] += 1
    return text


def refine_labels(
    records: Iterable[SampleRecord], lexicon: Lexicon
) -> tuple[list[SampleRecord], RefinementReport]:
    """Replace raw labels by canonical terms and ambiguous labels by full sentences."""
    problems = lexicon.validate()
    if problems:
        raise ResourceError("invalid lexicon: " + "; ".join(problems))
    report = RefinementReport()
    out = []
    for rec in records:
        labels = {}
        for task, label in rec.labels.items():
            scope = task.value
            if isinstance(label, str):
                labels[task] = _refine_text(label, scope, task, lexicon, report)
            elif isinstance(label, tuple):
                labels[task] = tuple(
                    replace(b, label=_refine_text(b.label, scope, task, lexicon, report)) for b in label
                )
            elif isinstance(label, GridCell):
                labels[task] = replace(label, label=_refine_text(label.label, scope, task, lexicon, report))
            elif isinstance(label, Triplet):
                labels[task] = Triplet(
                    *(
                        _refine_text(v, f"triplet.{c}", task, lexicon, report)
                        for c, v in zip(("instrument", "verb", "target"), label.components())
                    )
                )
            else:
                labels[task] = label
        out.append(replace(rec, labels=labels))
        report.records += 1
    return out, report


# ---------------------------------------------------------------- stage 2


def enrich_correlations(records: Iterable[SampleRecord], rules: Sequence[CorrelationRule]) -> list[SampleRecord]:
    """Attach one combined statement per applicable rule; labels are left untouched."""
    out = []
    for rec in records:
        statements = tuple(
            Statement(rule.tasks, rule.render(render_label(rec.labels[rule.tasks[0]]), render_label(rec.labels[rule.tasks[1]])))
            for rule in rules
            if rule.applies(rec.labels)
        )
        out.append(replace(rec, statements=statements))
    return out


# ---------------------------------------------------------------- stage 3


@dataclass
class ExplanationReport:
    applied: int = 0
    missing: int = 0

    def to_json(self) -> dict:
        return {"applied": self.applied, "missing": self.missing}


def _explanation_index(templates: Sequence[ExplanationTemplate]):
    specific: dict[tuple[TaskKind, str], ExplanationTemplate] = {}
    wildcard: dict[TaskKind, ExplanationTemplate] = {}
    for t in templates:
        if t.label is None:
            wildcard.setdefault(t.task, t)
        else:
            specific.setdefault((t.task, lexicon_key(t.label)), t)
    return specific, wildcard


def generate_explanations(
    records: Iterable[SampleRecord], templates: Sequence[ExplanationTemplate]
) -> tuple[list[SampleRecord], ExplanationReport]:
    """Attach an explanation clause per labelled task; specific-label templates win over wildcards."""
    specific, wildcard = _explanation_index(templates)
    report = ExplanationReport()
    out = []
    for rec in records:
        explanations = {}
        for task in sorted(rec.labels, key=lambda t: t.order):
            text = render_label(rec.labels[task])
            tpl = specific.get((task, lexicon_key(text))) or wildcard.get(task)
            if tpl is None:
                report.missing += 1
                continue
            explanations[task] = tpl.render(text)
            report.applied += 1
        out.append(replace(rec, explanations=explanations))
    return out, report


def explained_answer(record: SampleRecord, task: TaskKind) -> str:
    """Plain descriptive answer for a task, extended by its explanation clause when present."""
    keyword = render_label(record.labels[task])
    clause = record.explanations.get(task)
    text = f"The current {TASK_NOUNS[task]} is {keyword}"
    if clause:
        text += f", {clause}"
    return text + "."


def record_text_length(record: SampleRecord) -> int:
    """Characters of textual supervision a record carries (labels, statements, answers)."""
    total = sum(len(render_label(v)) for v in record.labels.values())
    total += sum(len(s.text) for s in record.statements)
    total += sum(len(c) for c in record.explanations.values())
    return total


# ---------------------------------------------------------------- stage 4


class ExpansionError(ValueError):
    pass


def _task_vocabularies(
    records: Sequence[SampleRecord], extra: Mapping[TaskKind, Iterable[str]] | None
) -> dict[TaskKind, dict[str, object]]:
    """Rendered label text -> label, per task, pooled across records (sorted for determinism)."""
    pools: dict[TaskKind, dict[str, object]] = {}
    for rec in records:
        for task, label in rec.labels.items():
            pools.setdefault(task, {}).setdefault(render_label(label), label)
    for task, terms in (extra or {}).items():
        for term in terms:
            pools.setdefault(task, {}).setdefault(term, term)
    return {t: dict(sorted(p.items())) for t, p in pools.items()}


def mcq_options(answer: str, pool: Iterable[str], rng: random.Random, n_options: int = 4):
    """Distractors drawn uniformly without replacement; returns (options, correct index) or None."""
    target = normalize_text(answer)
    seen = {target}
    distinct = []
    for term in pool:
        key = normalize_text(term)
        if key not in seen:
            seen.add(key)
            distinct.append(term)
    if not distinct:
        return None
    k = min(n_options - 1, len(distinct))
    options = rng.sample(distinct, k) + [answer]
    rng.shuffle(options)
    return tuple(options), options.index(answer)


def format_mcq_prompt(question: str, options: Sequence[str]) -> str:
    lines = [question, "Options:"]
    lines += [f"{OPTION_LETTERS[i]}. {opt}" for i, opt in enumerate(options)]
    lines.append("Answer with the letter of the correct option.")
    return "\n".join(lines)


def _fill(template: str, record: SampleRecord, task: TaskKind, keyword: str, explanation: str) -> str:
    label = record.labels[task]
    target = label.label if isinstance(label, GridCell) and label.label else "instrument"
    return template.format(
        keyword=keyword,
        explanation=explanation,
        surgery=record.surgery_type,
        target=target,
    )


def _make_turn(
    record: SampleRecord,
    task: TaskKind,
    template: ConversationTemplate,
    protocol: Protocol,
    pool: Mapping[str, object],
    rng: random.Random,
) -> Turn:
    label = record.labels[task]
    keyword = render_label(label)
    clause = record.explanations.get(task)
    explanation = f", {clause}" if clause else ""
    question = _fill(template.question, record, task, keyword, explanation)
    if protocol is Protocol.MCQ:
        options, _ = mcq_options(keyword, pool, rng)
        return Turn(
            prompt=format_mcq_prompt(question, options),
            answer=keyword,
            keywords=(keyword,),
            task=task,
            options=options,
            label=label,
            template_id=template.template_id,
        )
    answer = _fill(template.answer, record, task, keyword, explanation)
    return Turn(question, answer, (keyword,), task, None, label, template.template_id)


def _joint_turn(record: SampleRecord, stmt: Statement) -> Turn:
    a, b = stmt.tasks
    question = f"Describe the {TASK_NOUNS[a]} and the {TASK_NOUNS[b]} in the current frame."
    keywords = (render_label(record.labels[a]), render_label(record.labels[b]))
    return Turn(question, stmt.text, keywords, a, None, None, None)


def _expand_record(
    record: SampleRecord,
    prompt_set: PromptTemplateSet,
    mode: str,
    seed: int,
    vocab: Mapping[TaskKind, Mapping[str, object]],
    multi_turn_ratio: float,
    mcq_ratio: float,
    max_turns: int,
) -> list[Conversation]:
    rng = record_rng(seed, record.sample_id)
    tasks = sorted(record.labels, key=lambda t: (t.tier.rank, t.order))
    if mode == "mixed":
        multi = rng.random() < multi_turn_ratio
    else:
        multi = mode == "multi_turn"
    groups = (
        [tasks[i : i + max_turns] for i in range(0, len(tasks), max_turns)] if multi else [[t] for t in tasks]
    )
    convs = []
    for gi, group in enumerate(groups):
        mcq_ok = all(len({normalize_text(k) for k in vocab.get(t, {})}) >= 2 for t in group)
        protocol = Protocol.MCQ if (mcq_ok and rng.random() < mcq_ratio) else Protocol.OV
        turns = tuple(
            _make_turn(record, t, rng.choice(prompt_set.for_task(t)), protocol, vocab.get(t, {}), rng)
            for t in group
        )
        tag = "m" if multi else "s"
        convs.append(Conversation(f"{record.sample_id}/{tag}{gi}", record.sample_id, protocol, turns, record.image))
    if not multi:
        for si, stmt in enumerate(record.statements):
            convs.append(
                Conversation(
                    f"{record.sample_id}/j{si}", record.sample_id, Protocol.OV, (_joint_turn(record, stmt),), record.image
                )
            )
    return convs


def interleave(conversations: Sequence[Conversation], k: int) -> list[Conversation]:
    """Reorder so no more than ``k`` consecutive conversations share a leading task kind.

    Greedy: always emit from the largest remaining task bucket that is not blocked.
    Order inside each bucket is preserved. If only one kind is left and it is
    blocked the run is unavoidable and is extended.
    """
    if k < 1:
        raise ValueError("interleave_k must be >= 1")
    buckets: dict[TaskKind, deque] = {}
    for c in conversations:
        buckets.setdefault(c.turns[0].task, deque()).append(c)
    out: list[Conversation] = []
    last, run = None, 0
    while buckets:
        ranked = sorted(buckets, key=lambda t: (-len(buckets[t]), t.order))
        pick = next((t for t in ranked if not (t == last and run >= k)), ranked[0])
        out.append(buckets[pick].popleft())
        if not buckets[pick]:
            del buckets[pick]
        run = run + 1 if pick == last else 1
        last = pick
    return out


def expand_conversations(
    records: Sequence[SampleRecord],
    prompt_set: PromptTemplateSet,
    mode: str = "mixed",
    seed: int | None = None,
    *,
    interleave_k: int = 8,
    multi_turn_ratio: float = 0.5,
    mcq_ratio: float = 0.2,
    max_turns: int = MAX_TURNS,
    vocabularies: Mapping[TaskKind, Iterable[str]] | None = None,
) -> list[Conversation]:
    """Turn explained records into single- and multi-turn conversations.

    Deterministic for fixed (records, prompt_set, seed). Multi-turn conversations
    order turns perception, temporal, reasoning and hold at most ``max_turns``
    turns. The output is interleaved across task kinds.
    """
    if mode not in ("single_turn", "multi_turn", "mixed"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 <= multi_turn_ratio <= 1.0 or not 0.0 <= mcq_ratio <= 1.0:
        raise ValueError("ratios must lie in [0, 1]")
    seed = prompt_set.seed if seed is None else seed
    records = list(records)
    needed = {t for r in records for t in r.labels}
    for task in sorted(needed, key=lambda t: t.order):
        if prompt_set.count(task) == 0:
            raise ExpansionError(f"no conversation templates for task {task.value}")
    vocab = _task_vocabularies(records, vocabularies)
    convs: list[Conversation] = []
    for rec in records:
        convs.extend(
            _expand_record(rec, prompt_set, mode, seed, vocab, multi_turn_ratio, mcq_ratio, max_turns)
        )
    return interleave(convs, interleave_k)


# ---------------------------------------------------------------- transformers


class LabelRefiner(TransformerMixin, BaseEstimator):
    """Stage 1. ``report_`` holds the substitution report of the last transform."""

    def __init__(self, lexicon=None):
        self.lexicon = lexicon

    def fit(self, X=None, y=None):
        lex = self.lexicon
        if lex is None or isinstance(lex, str):
            lex = Lexicon.load(lex)
        problems = lex.validate()
        if problems:
            raise ResourceError("invalid lexicon: " + "; ".join(problems))
        self.lexicon_ = lex
        return self

    def transform(self, X):
        check_is_fitted(self, "lexicon_")
        out, self.report_ = refine_labels(X, self.lexicon_)
        return out


class CorrelationEnricher(TransformerMixin, BaseEstimator):
    """Stage 2."""

    def __init__(self, rules=None):
        self.rules = rules

    def fit(self, X=None, y=None):
        self.rules_ = list(load_rules(self.rules) if self.rules is None or isinstance(self.rules, str) else self.rules)
        return self

    def transform(self, X):
        check_is_fitted(self, "rules_")
        return enrich_correlations(X, self.rules_)


class ExplanationGenerator(TransformerMixin, BaseEstimator):
    """Stage 3."""

    def __init__(self, templates=None):
        self.templates = templates

    def fit(self, X=None, y=None):
        t = self.templates
        self.templates_ = list(load_explanations(t) if t is None or isinstance(t, str) else t)
        return self

    def transform(self, X):
        check_is_fitted(self, "templates_")
        out, self.report_ = generate_explanations(X, self.templates_)
        return out


class ConversationExpander(TransformerMixin, BaseEstimator):
    """Stage 4: records in, conversations out."""

    def __init__(
        self,
        prompt_set=None,
        mode="mixed",
        seed=0,
        interleave_k=8,
        multi_turn_ratio=0.5,
        mcq_ratio=0.2,
        max_turns=MAX_TURNS,
    ):
        self.prompt_set = prompt_set
        self.mode = mode
        self.seed = seed
        self.interleave_k = interleave_k
        self.multi_turn_ratio = multi_turn_ratio
        self.mcq_ratio = mcq_ratio
        self.max_turns = max_turns

    def fit(self, X=None, y=None):
        p = self.prompt_set
        self.prompt_set_ = PromptTemplateSet.load(p, self.seed) if p is None or isinstance(p, str) else p
        return self

    def transform(self, X):
        check_is_fitted(self, "prompt_set_")
        return expand_conversations(
            list(X),
            self.prompt_set_,
            self.mode,
            self.seed,
            interleave_k=self.interleave_k,
            multi_turn_ratio=self.multi_turn_ratio,
            mcq_ratio=self.mcq_ratio,
            max_turns=self.max_turns,
        )
