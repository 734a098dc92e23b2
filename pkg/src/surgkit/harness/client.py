"""HTTP client for the generation wire contract.

Request body::

    {"model": ..., "messages": [{"role": "user", "content": [{"type": "image", "uri": ...},
                                                          {"type": "text", "text": ...}]}, ...],
     "decoding": {"temperature": 0.0, "top_p": 1.0, "max_tokens": 512},
     "metadata": {"conversation_id": ..., "turn_index": ...}}

Response body: ``{"text": ..., "refused": false}``.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import httpx

from ..datamodel import Conversation, ParseStatus, PredictionRecord
from ..parsing import ParseResult, is_refusal
from .suite import ModelEndpoint

log = logging.getLogger(__name__)

ImageProvider = Callable[[str], bytes | None]
Parser = Callable[[str, object], ParseResult]


def uri_only(path: str) -> None:
    """Image provider for dry runs: send the path, never read the file."""
    return None


def read_image_file(path: str) -> bytes | None:
    p = Path(path)
    return p.read_bytes() if p.is_file() else None


def _image_part(image: str | None, images: ImageProvider) -> list[dict]:
    if not image:
        return []
    data = images(image)
    if data is None:
        return [{"type": "image", "uri": image}]
    return [{"type": "image", "base64": base64.b64encode(data).decode("ascii")}]


def build_request(
    endpoint: ModelEndpoint,
    conversation: Conversation,
    turn_index: int = -1,
    images: ImageProvider = uri_only,
) -> dict:
    """Messages for one turn; earlier turns go first with their reference answers."""
    idx = turn_index % len(conversation.turns)
    messages = []
    for i, turn in enumerate(conversation.turns[: idx + 1]):
        content = (_image_part(conversation.image, images) if i == 0 else []) + [{"type": "text", "text": turn.prompt}]
        messages.append({"role": "user", "content": content})
        if i < idx:
            messages.append({"role": "assistant", "content": [{"type": "text", "text": turn.answer}]})
    return {
        "model": endpoint.model or endpoint.name,
        "messages": messages,
        "decoding": dict(endpoint.decoding),
        "metadata": {"conversation_id": conversation.conversation_id, "turn_index": idx},
    }


def _headers(endpoint: ModelEndpoint) -> dict[str, str]:
    if endpoint.token_env:
        token = os.environ.get(endpoint.token_env)
        if token:
            return {"Authorization": f"Bearer {token}"}
    return {}


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart across threads."""

    def __init__(self, rate: float | None, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


def _transient(status: int) -> bool:
    return status == 429 or status >= 500


def query_model(
    endpoint: ModelEndpoint,
    conversation: Conversation,
    images: ImageProvider = uri_only,
    *,
    turn_index: int = -1,
    client: httpx.Client | None = None,
    parser: Parser | None = None,
    limiter: RateLimiter | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> PredictionRecord:
    """Send one turn and wrap the outcome.

    Transient failures (429, 5xx, connection errors) are retried with
    exponential backoff. Without a ``parser`` a received reply is stored as
    ``parsed`` with the raw text as its answer.
    """
    idx = turn_index % len(conversation.turns)
    turn = conversation.turns[idx]
    body = build_request(endpoint, conversation, idx, images)
    own = client is None
    client = client or httpx.Client(timeout=endpoint.timeout)
    base = dict(conversation_id=conversation.conversation_id, turn_index=idx, sample_id=conversation.sample_id, task=turn.task)
    retries = 0
    error = None
    try:
        while True:
            if limiter:
                limiter.wait()
            try:
                resp = client.post(
                    endpoint.url.rstrip("/") + "/generate",
                    json=body,
                    headers=_headers(endpoint),
                    timeout=endpoint.timeout,
                )
                if resp.status_code == 200:
                    break
                error = f"HTTP {resp.status_code}"
                retryable = _transient(resp.status_code)
            except httpx.TransportError as exc:
                error = f"{type(exc).__name__}: {exc}"
                retryable = True
            if not retryable or retries >= endpoint.max_retries:
                log.warning("%s turn %d failed after %d retries: %s", conversation.conversation_id, idx, retries, error)
                return PredictionRecord(response="", status=ParseStatus.TRANSPORT_ERROR, retries=retries, error=error, **base)
            sleep(endpoint.backoff * 2**retries)
            retries += 1
    finally:
        if own:
            client.close()

    try:
        payload = resp.json()
        text = str(payload.get("text", ""))
    except ValueError:
        return PredictionRecord(response="", status=ParseStatus.TRANSPORT_ERROR, retries=retries, error="malformed response body", **base)
    if payload.get("refused") or is_refusal(text):
        return PredictionRecord(response=text, status=ParseStatus.REFUSED, retries=retries, **base)
    if parser is None:
        return PredictionRecord(response=text, status=ParseStatus.PARSED, answer=text, retries=retries, **base)
    parsed = parser(text, turn)
    return PredictionRecord(response=text, status=parsed.status, answer=parsed.value if parsed.ok else None, retries=retries, **base)


def query_all(
    endpoint: ModelEndpoint,
    conversations: Sequence[Conversation],
    images: ImageProvider = uri_only,
    *,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[PredictionRecord]:
    """Query every turn of every conversation, at most ``max_in_flight`` at once.

    Results come back in input order whatever the completion order.
    """
    jobs = [(c, i) for c in conversations for i in range(len(c.turns))]
    limiter = RateLimiter(endpoint.rate_limit)
    with httpx.Client(timeout=endpoint.timeout, transport=transport) as client:

        def one(job):
            conv, idx = job
            return query_model(endpoint, conv, images, turn_index=idx, client=client, limiter=limiter, sleep=sleep)

        if endpoint.max_in_flight == 1:
            return [one(j) for j in jobs]
        with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
            return list(pool.map(one, jobs))
