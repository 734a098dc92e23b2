"""Deterministic stand-in model for harness tests.

Each reply is decided by a SHA-256 draw keyed on (seed, conversation id, turn
index), so a behaviour can be replayed exactly without running the model.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import httpx
from sklearn.base import BaseEstimator

from ..datamodel import (
    BOX_TASKS,
    BoundingBox,
    Conversation,
    CvsVector,
    GridCell,
    GridPosition,
    Protocol,
    TaskKind,
    Triplet,
    Turn,
    normalize_text,
    render_box,
    render_label,
)
from ..pipeline.resources import default_vocabulary
from ..pipeline.stages import OPTION_LETTERS

REFUSAL_TEXT = "I'm sorry, but I can't assist with that request."


def draw(seed: int, conversation_id: str, turn_index: int = 0, salt: str = "") -> float:
    """Uniform [0, 1) value fixed by its key."""
    digest = hashlib.sha256(f"{seed}:{conversation_id}:{turn_index}:{salt}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass(frozen=True)
class Oracle:
    def is_correct(self, conversation_id: str, turn_index: int = 0) -> bool:
        return True

    def refuses(self, conversation_id: str, turn_index: int = 0) -> bool:
        return False


@dataclass(frozen=True)
class Planted:
    """Correct on a seeded p-fraction of turns, wrong but parseable elsewhere."""

    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    def is_correct(self, conversation_id: str, turn_index: int = 0) -> bool:
        return draw(self.seed, conversation_id, turn_index) < self.p

    def refuses(self, conversation_id: str, turn_index: int = 0) -> bool:
        return False


@dataclass(frozen=True)
class Refuser:
    """Refuses a seeded fraction of turns and answers the rest correctly."""

    rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must lie in [0, 1]")

    def is_correct(self, conversation_id: str, turn_index: int = 0) -> bool:
        return not self.refuses(conversation_id, turn_index)

    def refuses(self, conversation_id: str, turn_index: int = 0) -> bool:
        return draw(self.seed, conversation_id, turn_index, "refuse") < self.rate


Behavior = Oracle | Planted | Refuser


def default_mock_vocabularies() -> dict[str, tuple[str, ...]]:
    return {
        "instrument": tuple(default_vocabulary("cholect50_instrument")),
        "verb": tuple(default_vocabulary("cholect50_verb")),
        "target": tuple(default_vocabulary("cholect50_target")),
    }


def _pick(rng: random.Random, pool: Sequence[str]) -> str | None:
    pool = sorted(set(pool))
    return rng.choice(pool) if pool else None


def wrong_answer(
    turn: Turn,
    protocol: Protocol,
    rng: random.Random,
    vocabularies: Mapping[str, Sequence[str]],
) -> str:
    """A reply that parses cleanly but disagrees with the ground truth."""
    if protocol is Protocol.MCQ:
        correct = turn.correct_option
        others = [i for i in range(len(turn.options or ())) if i != correct]
        return f"{OPTION_LETTERS[rng.choice(others)]}."
    label = turn.label
    gt_kw = [normalize_text(k) for k in turn.keywords]
    if turn.task in BOX_TASKS:
        boxes = label if isinstance(label, tuple) else (label,)
        # shift past every ground-truth box so no overlap is possible
        dx = max(b.x2 for b in boxes) - min(b.x1 for b in boxes) + 1
        moved = [BoundingBox(b.x1 + dx, b.y1, b.x2 + dx, b.y2, b.label) for b in boxes]
        return "; ".join(render_box(b) for b in moved) + "."
    if isinstance(label, Triplet):
        parts = []
        for name, value in zip(("instrument", "verb", "target"), label.components()):
            parts.append(_pick(rng, [v for v in vocabularies.get(name, ()) if v != value]) or value)
        return ", ".join(parts) + "."
    if isinstance(label, CvsVector):
        return render_label(CvsVector(not label.c1, not label.c2, not label.c3)) + "."
    if isinstance(label, GridCell):
        pool = [p.value for p in GridPosition if not any(p.value in k or k in p.value for k in gt_kw)]
        return f"{_pick(rng, pool)}."
    pool = vocabularies.get(turn.task.value, ())
    pool = [
        v
        for v in pool
        if not any(k in normalize_text(v) for k in gt_kw) and not any(normalize_text(v) in k for k in gt_kw)
    ]
    choice = _pick(rng, pool)
    return f"{choice}." if choice else "I am not sure what is shown."


def mock_generate(
    conversation: Conversation,
    behavior: Behavior,
    turn_index: int = -1,
    vocabularies: Mapping[str, Sequence[str]] | None = None,
) -> str:
    """Reply to one turn: the reference answer, a wrong answer or a refusal."""
    n = len(conversation.turns)
    idx = turn_index % n
    turn = conversation.turns[idx]
    if behavior.refuses(conversation.conversation_id, idx):
        return REFUSAL_TEXT
    if behavior.is_correct(conversation.conversation_id, idx):
        if conversation.protocol is Protocol.MCQ:
            return f"{OPTION_LETTERS[turn.correct_option]}."
        return turn.answer
    seed = getattr(behavior, "seed", 0)
    rng = random.Random(int(draw(seed, conversation.conversation_id, idx, "wrong") * 2**53))
    vocab = dict(default_mock_vocabularies())
    vocab.update(vocabularies or {})
    return wrong_answer(turn, conversation.protocol, rng, vocab)


class MockVLM(BaseEstimator):
    """Estimator-style wrapper: ``predict`` maps conversations to reply texts for the last turn."""

    def __init__(self, behavior="oracle", p=1.0, rate=0.0, seed=0, vocabularies=None):
        self.behavior = behavior
        self.p = p
        self.rate = rate
        self.seed = seed
        self.vocabularies = vocabularies

    def behavior_(self) -> Behavior:
        if self.behavior == "oracle":
            return Oracle()
        if self.behavior == "planted":
            return Planted(self.p, self.seed)
        if self.behavior == "refuser":
            return Refuser(self.rate, self.seed)
        raise ValueError(f"unknown behavior {self.behavior!r}")

    def fit(self, X=None, y=None):
        self.fitted_behavior_ = self.behavior_()
        return self

    def predict(self, conversations: Sequence[Conversation]) -> list[str]:
        beh = getattr(self, "fitted_behavior_", None) or self.behavior_()
        return [mock_generate(c, beh, -1, self.vocabularies) for c in conversations]


def mock_transport(
    conversations: Mapping[str, Conversation] | Sequence[Conversation],
    behavior: Behavior,
    vocabularies: Mapping[str, Sequence[str]] | None = None,
) -> httpx.MockTransport:
    """In-process endpoint speaking the harness wire format."""
    if not isinstance(conversations, Mapping):
        conversations = {c.conversation_id: c for c in conversations}

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        meta = body.get("metadata", {})
        conv = conversations.get(meta.get("conversation_id"))
        if conv is None:
            return httpx.Response(404, json={"error": "unknown conversation"})
        idx = int(meta.get("turn_index", len(conv.turns) - 1))
        text = mock_generate(conv, behavior, idx, vocabularies)
        return httpx.Response(200, json={"text": text, "refused": text == REFUSAL_TEXT})

    return httpx.MockTransport(handler)
