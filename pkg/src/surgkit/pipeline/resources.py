"""Loaders and value types for the pipeline's data files.

All files are tab-separated, UTF-8, one entry per line; ``#`` starts a comment
line. Shipped defaults live in ``surgkit/data``.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from ..datamodel import TaskKind

_QUOTES = str.maketrans({"‘": "'", "’": "'", "‛": "'", "`": "'"})
_WS = re.compile(r"\s+")


class ResourceError(ValueError):
    pass


def lexicon_key(text: str) -> str:
    return _WS.sub(" ", text.translate(_QUOTES)).strip().casefold()


def data_path(name: str) -> Path:
    return Path(str(resources.files("surgkit") / "data" / name))


def _rows(path: str | Path, ncols: int) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < ncols:
                raise ResourceError(f"{path}:{lineno}: expected {ncols} tab-separated columns")
            yield lineno, cols


@dataclass(frozen=True)
class LexiconEntry:
    raw: str
    replacement: str
    scope: str = "*"
    ambiguous: bool = False
    note: str = ""


class Lexicon:
    """Raw-label to canonical-term mapping, optionally scoped to a task or triplet slot."""

    def __init__(self, entries: Iterable[LexiconEntry] = ()):
        self.entries: list[LexiconEntry] = list(entries)
        self._map: dict[tuple[str, str], LexiconEntry] = {}
        for e in self.entries:
            self._map.setdefault((e.scope, lexicon_key(e.raw)), e)
        self._canonical_terms = {
            (e.scope, lexicon_key(e.replacement)) for e in self.entries if not e.ambiguous
        }

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, text: str, scope: str = "*") -> LexiconEntry | None:
        key = lexicon_key(text)
        return self._map.get((scope, key)) or self._map.get(("*", key))

    def canonical(self, text: str, scope: str = "*") -> str:
        entry = self.lookup(text, scope)
        return entry.replacement if entry else text

    def get(self, text: str, default: str | None = None) -> str | None:
        entry = self.lookup(text)
        return entry.replacement if entry else default

    def is_canonical(self, text: str, scope: str = "*") -> bool:
        key = lexicon_key(text)
        return (scope, key) in self._canonical_terms or ("*", key) in self._canonical_terms

    def validate(self) -> list[str]:
        """Return problems: non-functional mapping, empty terms, or canonical terms that remap."""
        problems = []
        seen: dict[tuple[str, str], str] = {}
        for e in self.entries:
            if not e.replacement.strip():
                problems.append(f"empty replacement for {e.raw!r}")
            k = (e.scope, lexicon_key(e.raw))
            if k in seen and seen[k] != e.replacement:
                problems.append(f"{e.raw!r} maps to both {seen[k]!r} and {e.replacement!r}")
            seen.setdefault(k, e.replacement)
        for e in self.entries:
            if e.ambiguous:
                continue
            again = self.lookup(e.replacement, e.scope)
            if again is not None and again.replacement != e.replacement:
                problems.append(f"canonical term {e.replacement!r} is remapped to {again.replacement!r}")
        return problems

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Lexicon":
        path = path or data_path("lexicon.tsv")
        entries = []
        for lineno, cols in _rows(path, 4):
            kind, scope, raw, replacement = cols[:4]
            if kind not in ("term", "ambiguous"):
                raise ResourceError(f"{path}:{lineno}: unknown entry kind {kind!r}")
            note = cols[4] if len(cols) > 4 else ""
            entries.append(LexiconEntry(raw, replacement, scope or "*", kind == "ambiguous", note))
        lex = cls(entries)
        problems = lex.validate()
        if problems:
            raise ResourceError(f"{path}: " + "; ".join(problems))
        return lex


def _slots(template: str) -> list[str]:
    return [name for _, name, _, _ in string.Formatter().parse(template) if name is not None]


@dataclass(frozen=True)
class CorrelationRule:
    tasks: tuple[TaskKind, TaskKind]
    template: str

    def __post_init__(self):
        if self.tasks[0] == self.tasks[1]:
            raise ResourceError("a correlation rule must pair two distinct tasks")
        slots = _slots(self.template)
        if sorted(slots) != ["a", "b"]:
            raise ResourceError(f"template must use {{a}} and {{b}} exactly once: {self.template!r}")

    def applies(self, labels: Mapping[TaskKind, object]) -> bool:
        return self.tasks[0] in labels and self.tasks[1] in labels

    def render(self, a: str, b: str) -> str:
        return self.template.format(a=a, b=b)


def load_rules(path: str | Path | None = None) -> list[CorrelationRule]:
    path = path or data_path("correlation_rules.tsv")
    return [
        CorrelationRule((TaskKind(cols[0]), TaskKind(cols[1])), cols[2]) for _, cols in _rows(path, 3)
    ]


@dataclass(frozen=True)
class ExplanationTemplate:
    task: TaskKind
    label: str | None  # None matches any label of the task
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ResourceError("explanation text must be non-empty")
        unknown = set(_slots(self.text)) - {"label"}
        if unknown:
            raise ResourceError(f"unresolvable slots {sorted(unknown)} in {self.text!r}")

    def render(self, label_text: str) -> str:
        return self.text.format(label=label_text)


def load_explanations(path: str | Path | None = None) -> list[ExplanationTemplate]:
    path = path or data_path("explanations.tsv")
    return [
        ExplanationTemplate(TaskKind(cols[0]), None if cols[1] == "*" else cols[1], cols[2])
        for _, cols in _rows(path, 3)
    ]


@dataclass(frozen=True)
class ConversationTemplate:
    template_id: str
    task: TaskKind
    question: str
    answer: str


@dataclass
class PromptTemplateSet:
    templates: dict[TaskKind, list[ConversationTemplate]] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for task, items in self.templates.items():
            for t in items:
                if "keyword" not in _slots(t.answer):
                    raise ResourceError(f"{t.template_id}: answer template lacks the {{keyword}} slot")
                extra = set(_slots(t.answer)) | set(_slots(t.question))
                extra -= {"keyword", "explanation", "surgery", "target"}
                if extra:
                    raise ResourceError(f"{t.template_id}: unknown slots {sorted(extra)}")

    def count(self, task: TaskKind) -> int:
        return len(self.templates.get(task, ()))

    def for_task(self, task: TaskKind) -> list[ConversationTemplate]:
        items = self.templates.get(task)
        if not items:
            raise ResourceError(f"no conversation templates for task {task.value}")
        return items

    @classmethod
    def load(cls, path: str | Path | None = None, seed: int = 0) -> "PromptTemplateSet":
        path = path or data_path("prompt_templates.tsv")
        out: dict[TaskKind, list[ConversationTemplate]] = {}
        for _, cols in _rows(path, 3):
            task = TaskKind(cols[0])
            items = out.setdefault(task, [])
            items.append(ConversationTemplate(f"{task.value}/{len(items):03d}", task, cols[1], cols[2]))
        return cls(out, seed)


def load_vocabulary(path: str | Path) -> list[str]:
    """One term per line; blank lines and ``#`` comments ignored."""
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def default_vocabulary(name: str) -> list[str]:
    return load_vocabulary(data_path(f"vocab/{name}.txt"))
