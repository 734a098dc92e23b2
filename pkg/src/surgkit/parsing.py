"""Turn free-text model responses into structured answers.

Every entry point checks refusal patterns first. Matching is case-insensitive
after whitespace collapse and never uses stemming or synonyms in the scoring
path; the lexicon is used only to canonicalize triplet components before
vocabulary lookup.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .datamodel import (
    BOX_TASKS,
    BoundingBox,
    CvsVector,
    GridCell,
    GridPosition,
    ParseStatus,
    Protocol,
    TaskKind,
    Triplet,
    Turn,
    normalize_text,
    render_label,
)
from .pipeline.resources import Lexicon, data_path, default_vocabulary, lexicon_key

TRIPLET_PARTS = ("instrument", "verb", "target")


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    REFUSED = "refused"


@dataclass(frozen=True)
class ParseResult:
    status: ParseStatus
    value: Any = None
    diagnostics: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status is ParseStatus.PARSED


REFUSED = ParseResult(ParseStatus.REFUSED)


def _failed(*why: str) -> ParseResult:
    return ParseResult(ParseStatus.PARSE_FAILED, None, tuple(why))


def load_refusal_patterns(path=None) -> tuple[str, ...]:
    path = path or data_path("refusal_patterns.txt")
    with open(path, encoding="utf-8") as fh:
        return tuple(ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#"))


@dataclass(frozen=True)
class ParseConfig:
    casefold: bool = True
    collapse_whitespace: bool = True
    refusal_patterns: tuple[str, ...] = ()
    # keys: "instrument"/"verb"/"target" for triplets, "boxes" for box labels,
    # or a TaskKind value for class tasks
    vocabularies: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    lexicon: Lexicon | None = None

    @classmethod
    def default(cls) -> "ParseConfig":
        vocab = {
            "instrument": tuple(default_vocabulary("cholect50_instrument")),
            "verb": tuple(default_vocabulary("cholect50_verb")),
            "target": tuple(default_vocabulary("cholect50_target")),
            "boxes": tuple(default_vocabulary("endovis_instrument")),
            TaskKind.PHASE_RECOGNITION.value: tuple(default_vocabulary("cholec80_phase")),
            TaskKind.ACTION_RECOGNITION.value: tuple(default_vocabulary("sar_rarp_action")),
            TaskKind.INSTRUMENT_RECOGNITION.value: tuple(default_vocabulary("endovis_instrument")),
        }
        return cls(refusal_patterns=load_refusal_patterns(), vocabularies=vocab, lexicon=Lexicon.load())

    def with_vocabulary(self, key: str, terms: Iterable[str]) -> "ParseConfig":
        merged = dict(self.vocabularies)
        merged[key] = tuple(dict.fromkeys([*merged.get(key, ()), *terms]))
        return ParseConfig(self.casefold, self.collapse_whitespace, self.refusal_patterns, merged, self.lexicon)

    def norm(self, text: str) -> str:
        return normalize_text(text, casefold=self.casefold, collapse=self.collapse_whitespace)


_DEFAULT: ParseConfig | None = None


def default_config() -> ParseConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = ParseConfig.default()
    return _DEFAULT


def is_refusal(response: str, config: ParseConfig | None = None) -> bool:
    config = config or default_config()
    text = normalize_text(response).replace("’", "'")
    return any(p.casefold() in text for p in config.refusal_patterns)


# ---------------------------------------------------------------- keyword


def match_keyword(response: str, keywords: Sequence[str], config: ParseConfig | None = None) -> Verdict:
    """Correct iff some keyword is a contiguous substring of the response after normalization."""
    if not keywords:
        raise ValueError("at least one keyword is required")
    config = config or default_config()
    if is_refusal(response, config):
        return Verdict.REFUSED
    text = config.norm(response)
    for kw in keywords:
        kw = config.norm(kw)
        if kw and kw in text:
            return Verdict.CORRECT
    return Verdict.INCORRECT


def find_vocabulary_terms(response: str, vocabulary: Iterable[str], config: ParseConfig | None = None) -> list[str]:
    """Vocabulary terms present in the response, dropping terms nested inside a longer hit."""
    config = config or default_config()
    text = config.norm(response)
    hits = [t for t in dict.fromkeys(vocabulary) if config.norm(t) and config.norm(t) in text]
    return [t for t in hits if not any(t != o and config.norm(t) in config.norm(o) for o in hits)]


# ---------------------------------------------------------------- choice

_STOPWORDS = frozenset(
    """a an the of and or to in on at by for with from into is are was were be been it its this that
    these those as which what who there here than then so but not no yes i we you they he she
    current frame image view shows shown option answer correct""".split()
)
_WORD = re.compile(r"[a-z0-9]+")
_LEAD_PAREN = re.compile(r"^\s*\(([A-Za-z])\)")
_LEAD_LETTER = re.compile(r"^\s*([A-Z])(?:[.):,]|\s*$|\s+[-–]\s)")
_LEAD_OPTION = re.compile(r"^\s*option\s+\(?([A-Za-z])\)?(?![A-Za-z])", re.I)
_AFTER_ANSWER = re.compile(
    r"answer(?:\s+is)?\s*[:\-]?\s*(?:option\s+)?(?:\(([A-Za-z])\)|([A-Z])(?![A-Za-z]))", re.I
)


def _letter_index(response: str, n: int) -> int | None:
    candidates: list[str] = []
    for pat in (_LEAD_PAREN, _LEAD_LETTER, _LEAD_OPTION):
        m = pat.search(response)
        if m:
            candidates.append(m.group(1))
    for m in _AFTER_ANSWER.finditer(response):
        letter = m.group(1) or m.group(2)
        # a bare lower-case letter after "answer is" is usually an article
        if m.group(2) and not m.group(2).isupper():
            continue
        candidates.append(letter)
    for letter in candidates:
        idx = ord(letter.upper()) - ord("A")
        if 0 <= idx < n:
            return idx
    return None


def parse_choice(response: str, options: Sequence[str], config: ParseConfig | None = None) -> ParseResult:
    """Selected option index.

    Order: an option letter at the start or after "answer is"; then a unique
    full option text contained in the response; then a unique option whose
    distinctive words appear. Anything else is a parse failure.
    """
    if len(options) < 2:
        raise ValueError("parse_choice needs at least two options")
    config = config or default_config()
    if is_refusal(response, config):
        return REFUSED
    idx = _letter_index(response, len(options))
    if idx is not None:
        return ParseResult(ParseStatus.PARSED, idx)

    text = config.norm(response)
    norm_opts = [config.norm(o) for o in options]
    hits = [i for i, o in enumerate(norm_opts) if o and o in text]
    hits = [i for i in hits if not any(j != i and norm_opts[i] in norm_opts[j] for j in hits)]
    if len(hits) == 1:
        return ParseResult(ParseStatus.PARSED, hits[0])
    if len(hits) > 1:
        return _failed("response matches several options")

    words = set(_WORD.findall(text))
    token_sets = [set(_WORD.findall(o)) - _STOPWORDS for o in norm_opts]
    distinctive = [ts - set().union(*(t for j, t in enumerate(token_sets) if j != i)) for i, ts in enumerate(token_sets)]
    kw_hits = [i for i, d in enumerate(distinctive) if d & words]
    if len(kw_hits) == 1:
        return ParseResult(ParseStatus.PARSED, kw_hits[0])
    return _failed("no unique option" if not kw_hits else "response matches several options")


# ---------------------------------------------------------------- boxes

_NUM = r"(-?\d+(?:\.\d+)?)"
_BOX_FORMS = re.compile(
    r"\[\s*{n}\s*,\s*{n}\s*,\s*{n}\s*,\s*{n}\s*\]"
    r"|\(\s*{n}\s*,\s*{n}\s*\)\s*(?:,|to|and|-)?\s*\(\s*{n}\s*,\s*{n}\s*\)"
    r"|(?<=[A-Za-z:])\s+{n}\s+{n}\s+{n}\s+{n}(?![\d.])".format(n=_NUM)
)
_CLAUSE = re.compile(r"[;:\n]|\.\s|,\s*(?:and\s+)?|\band\b")
_BOX_STOP = frozenset(
    """a an the at is are was were located location locations found detected in on of and with
    box boxes bounding coordinates coordinate position positions here there it its i see
    from to by lies sits appears can be occupies occupy shows show depicts contains covers spans
    result results answer tool tools instrument instruments tissue structure""".split()
)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _box_label(segment: str, vocabulary: Sequence[str], config: ParseConfig) -> str | None:
    norm = config.norm(segment)
    best, best_end = None, -1
    for term in vocabulary:
        t = config.norm(term)
        if not t:
            continue
        for m in re.finditer(r"(?<![a-z0-9])" + re.escape(t) + r"(?![a-z0-9])", norm):
            if m.end() > best_end or (m.end() == best_end and len(t) > len(config.norm(best))):
                best, best_end = term, m.end()
    if best is not None:
        return best
    tail = _CLAUSE.split(segment)[-1]
    words = re.findall(r"[A-Za-z][\w'\-]*", tail)
    while words and words[-1].lower() in _BOX_STOP:
        words.pop()
    run: list[str] = []
    for w in reversed(words):
        if w.lower() in _BOX_STOP:
            break
        run.append(w)
    run = run[:4]
    return " ".join(reversed(run)) or None


def parse_bboxes(response: str, config: ParseConfig | None = None, vocabulary: Sequence[str] | None = None) -> ParseResult:
    """Every box written as ``[x1, y1, x2, y2]``, ``(x1,y1),(x2,y2)`` or ``label x1 y1 x2 y2``.

    Coordinates are rounded half-up. Invalid quadruples are dropped and listed in
    the diagnostics. The nearest preceding vocabulary term, or failing that the
    trailing content words before the coordinates, becomes the box label.
    """
    config = config or default_config()
    if is_refusal(response, config):
        return ParseResult(ParseStatus.REFUSED, ())
    vocabulary = tuple(vocabulary if vocabulary is not None else config.vocabularies.get("boxes", ()))
    boxes: list[BoundingBox] = []
    dropped: list[str] = []
    prev_end = 0
    for m in _BOX_FORMS.finditer(response):
        nums = [g for g in m.groups() if g is not None]
        x1, y1, x2, y2 = (round_half_up(float(v)) for v in nums)
        label = _box_label(response[prev_end : m.start()], vocabulary, config)
        prev_end = m.end()
        box = BoundingBox(x1, y1, x2, y2, label)
        if not box.is_valid:
            dropped.append(f"dropped invalid box {m.group(0).strip()!r}")
            continue
        boxes.append(box)
    if not boxes:
        return ParseResult(ParseStatus.PARSE_FAILED, (), tuple(dropped) or ("no box found",))
    return ParseResult(ParseStatus.PARSED, tuple(boxes), tuple(dropped))


# ---------------------------------------------------------------- triplet


def _phrase_table(config: ParseConfig, vocab: Mapping[str, Sequence[str]]) -> dict[tuple[str, ...], set]:
    table: dict[tuple[str, ...], set] = {}
    for part in TRIPLET_PARTS:
        members = {lexicon_key(m): m for m in vocab.get(part, ())}
        for m in members.values():
            table.setdefault(tuple(_WORD.findall(m.lower())), set()).add((part, m))
        if config.lexicon is None:
            continue
        for e in config.lexicon.entries:
            if e.ambiguous or e.scope not in (f"triplet.{part}", "*"):
                continue
            canon = members.get(lexicon_key(e.replacement))
            if canon is not None:
                table.setdefault(tuple(_WORD.findall(e.raw.lower())), set()).add((part, canon))
    table.pop((), None)
    return table


def parse_triplet(
    response: str, config: ParseConfig | None = None, vocabularies: Mapping[str, Sequence[str]] | None = None
) -> ParseResult:
    """One member per component by a longest-match scan over word tokens.

    A component with two distinct members, or with none, fails the parse.
    """
    config = config or default_config()
    if is_refusal(response, config):
        return REFUSED
    vocab = vocabularies or config.vocabularies
    table = _phrase_table(config, vocab)
    longest = max((len(k) for k in table), default=0)
    tokens = _WORD.findall(response.lower())
    found: dict[str, set[str]] = {p: set() for p in TRIPLET_PARTS}
    i = 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            hit = table.get(tuple(tokens[i : i + n]))
            if hit:
                for part, member in hit:
                    found[part].add(member)
                i += n
                break
        else:
            i += 1
    for part in TRIPLET_PARTS:
        if len(found[part]) > 1:
            return _failed(f"several {part}s: {sorted(found[part])}")
        if not found[part]:
            return _failed(f"no {part} found")
    return ParseResult(ParseStatus.PARSED, Triplet(*(found[p].pop() for p in TRIPLET_PARTS)))


# ---------------------------------------------------------------- CVS

_NEG = r"(?:not|no|unmet|unsatisfied|false|absent|negative|missing|incomplete|isn't|aren't|wasn't|without|neither|nor|fails?|failed|lacking)"
_POS = r"(?:yes|achieved|met|satisfied|true|present|fulfilled|positive|reached|seen|visible|exposed|cleared|clear|identified)"
_NEG_RE = re.compile(rf"\b{_NEG}\b|n't\b")
_POS_RE = re.compile(rf"\b{_POS}\b")
_NUMBERED = re.compile(r"\b(?:criterion|c)\s*#?\s*([123])\b(?:\s*\([^)]*\))?\s*([^;.\n]*)")
_YESNO = r"(yes|no|true|false|met|unmet|achieved)"
_POSITIONAL = re.compile(rf"\b{_YESNO}\s*[,/;]\s*{_YESNO}\s*[,/;]\s*{_YESNO}\b")
_ALL = re.compile(
    rf"\ball\s+(?:three|3)\s+(?:cvs\s+)?criteria\s+(?:are\s+|were\s+|have\s+been\s+)?(not\s+)?{_POS}"
)
_NONE = re.compile(r"\bnone\s+of\s+the\s+(?:three\s+|3\s+)?criteria\b")
_NAMED = (
    re.compile(r"cystic plate"),
    re.compile(r"lower (?:third|1/3)|hepatocystic triangle (?:is )?clear"),
    re.compile(r"two (?:tubular )?structures|2 structures|only two"),
)


def _judge(fragment: str) -> bool | None:
    if _NEG_RE.search(fragment):
        return False
    if _POS_RE.search(fragment):
        return True
    return None


def _judge_named(clause: str, values: dict[int, bool]) -> None:
    """Judge each named criterion on the words after it, then before it, then the clause."""
    hits = sorted((m.start(), m.end(), i) for i, pat in enumerate(_NAMED) for m in pat.finditer(clause))
    for k, (start, end, i) in enumerate(hits):
        if i in values:
            continue
        after = clause[end : hits[k + 1][0] if k + 1 < len(hits) else len(clause)]
        before = clause[hits[k - 1][1] if k else 0 : start]
        verdict = _judge(after)
        if verdict is None:
            verdict = _judge(before)
        values[i] = verdict if verdict is not None else not _NEG_RE.search(clause)


def parse_cvs(response: str, config: ParseConfig | None = None) -> ParseResult:
    """Three criterion booleans; all three must be determined.

    Sources, in order: numbered mentions ("criterion 2: no"), a positional list
    ("yes, no, yes"), an all/none statement, then named criteria judged by
    negation words within the same clause.
    """
    config = config or default_config()
    if is_refusal(response, config):
        return REFUSED
    text = normalize_text(response).replace("’", "'")
    values: dict[int, bool] = {}
    for m in _NUMBERED.finditer(text):
        idx = int(m.group(1)) - 1
        verdict = _judge(m.group(2)[:60])
        if verdict is not None and idx not in values:
            values[idx] = verdict
    if not values:
        m = _POSITIONAL.search(text)
        if m:
            values = {i: m.group(i + 1) in ("yes", "true", "met", "achieved") for i in range(3)}
    if len(values) < 3:
        m = _ALL.search(text)
        if m and not m.group(1):
            for i in range(3):
                values.setdefault(i, True)
        elif _NONE.search(text):
            for i in range(3):
                values.setdefault(i, False)
    if len(values) < 3:
        for clause in re.split(r"[.;\n]|\bbut\b|\bwhile\b|\bwhereas\b", text):
            _judge_named(clause, values)
    if len(values) < 3:
        missing = [f"criterion {i + 1}" for i in range(3) if i not in values]
        return _failed("undetermined: " + ", ".join(missing))
    return ParseResult(ParseStatus.PARSED, CvsVector(values[0], values[1], values[2]))


# ---------------------------------------------------------------- per-turn dispatch


def parse_grid(response: str, config: ParseConfig | None = None) -> ParseResult:
    config = config or default_config()
    if is_refusal(response, config):
        return REFUSED
    text = config.norm(response)
    found = [p for p in GridPosition if re.search(rf"\b{p.value}\b", text)]
    if len(found) == 1:
        return ParseResult(ParseStatus.PARSED, GridCell(found[0]))
    return _failed("no unique grid position")


def decode_label_text(text: str, task: TaskKind, config: ParseConfig | None = None, *, box_vocabulary=None) -> ParseResult:
    """Structured parse of label text for tasks whose labels are not plain classes."""
    if task in BOX_TASKS:
        return parse_bboxes(text, config, box_vocabulary)
    if task is TaskKind.TRIPLET_RECOGNITION:
        return parse_triplet(text, config)
    if task is TaskKind.CVS_ASSESSMENT:
        return parse_cvs(text, config)
    if task is TaskKind.INSTRUMENT_LOCALIZATION_GRID:
        return parse_grid(text, config)
    return ParseResult(ParseStatus.PARSED, text)


def parse_turn(
    response: str,
    turn: Turn,
    protocol: Protocol | str,
    config: ParseConfig | None = None,
    *,
    class_vocabulary: Sequence[str] | None = None,
    box_vocabulary: Sequence[str] | None = None,
) -> ParseResult:
    """Parse one response to one turn into an answer comparable with ``turn.label``.

    MCQ answers go through ``parse_choice`` only. Open answers for class-like
    tasks go through ``match_keyword``; when the keyword is missing, a single
    other vocabulary class named in the response becomes the prediction.
    """
    config = config or default_config()
    protocol = Protocol(protocol)
    task = turn.task
    if protocol is Protocol.MCQ:
        if not turn.options:
            raise ValueError("MCQ turn without options")
        choice = parse_choice(response, turn.options, config)
        if not choice.ok:
            return choice
        picked = turn.options[choice.value]
        if turn.label is not None and normalize_text(picked) == normalize_text(render_label(turn.label)):
            return ParseResult(ParseStatus.PARSED, turn.label)
        decoded = decode_label_text(picked, task, config, box_vocabulary=box_vocabulary)
        return decoded if decoded.ok else ParseResult(ParseStatus.PARSED, picked)

    if task in BOX_TASKS or task in (TaskKind.TRIPLET_RECOGNITION, TaskKind.CVS_ASSESSMENT):
        return decode_label_text(response, task, config, box_vocabulary=box_vocabulary)

    verdict = match_keyword(response, turn.keywords, config)
    if verdict is Verdict.REFUSED:
        return REFUSED
    if verdict is Verdict.CORRECT:
        return ParseResult(ParseStatus.PARSED, turn.label if turn.label is not None else turn.keywords[0])
    if task is TaskKind.INSTRUMENT_LOCALIZATION_GRID:
        return parse_grid(response, config)
    vocab = class_vocabulary if class_vocabulary is not None else config.vocabularies.get(task.value, ())
    hits = find_vocabulary_terms(response, vocab, config)
    if len(hits) == 1:
        return ParseResult(ParseStatus.PARSED, hits[0])
    return _failed("keyword absent and no unique vocabulary class")


class ResponseParser(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``transform`` maps ``(response, turn)`` pairs to ``ParseResult`` objects."""

    def __init__(self, protocol="ov", config=None, class_vocabulary=None, box_vocabulary=None):
        self.protocol = protocol
        self.config = config
        self.class_vocabulary = class_vocabulary
        self.box_vocabulary = box_vocabulary

    def fit(self, X=None, y=None):
        self.config_ = self.config or default_config()
        self.protocol_ = Protocol(self.protocol)
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        return [
            parse_turn(
                response,
                turn,
                self.protocol_,
                self.config_,
                class_vocabulary=self.class_vocabulary,
                box_vocabulary=self.box_vocabulary,
            )
            for response, turn in X
        ]


__all__ = [
    "ParseConfig",
    "ParseResult",
    "ResponseParser",
    "Verdict",
    "decode_label_text",
    "default_config",
    "find_vocabulary_terms",
    "is_refusal",
    "load_refusal_patterns",
    "match_keyword",
    "parse_bboxes",
    "parse_choice",
    "parse_cvs",
    "parse_grid",
    "parse_triplet",
    "parse_turn",
    "round_half_up",
]
