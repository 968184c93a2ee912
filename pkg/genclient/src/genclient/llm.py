"""Adapter template wrapping a chat-completion style LLM API.

The adapter turns protocol requests into prompts (task instructions for
direct generation; ancestor answers plus feedback for refinement), calls
a transport, and reports the answer. It never scores anything itself:
scoring is task-specific and supplied as a callback, mirroring how the
engine treats the evaluator as external.

Transient transport errors retry with exponential backoff; exhausting
the retries, or any non-retryable error, yields a failed=true response
so the search continues without this node.
"""

from __future__ import annotations

import json
import os
import sys
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable

from .protocol import Request, Response
from .server import serve


class TransportError(RuntimeError):
    """Raised by transports for retryable failures (rate limit, timeout)."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    factor: float = 2.0
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * self.factor**attempt)


def build_prompt(request: Request) -> str:
    """Direct prompts restate the task; refinement prompts replay every
    ancestor answer with its feedback, oldest first, then ask for an
    improved answer."""
    lines = [f"Task: {request.task}"]
    if request.mode == "direct":
        lines.append("Produce your best answer to the task.")
        return "\n".join(lines)
    lines.append("Previous attempts, oldest first:")
    for i, entry in enumerate(request.lineage, 1):
        lines.append(f"--- attempt {i} ---")
        lines.append(entry.payload)
        if entry.score is not None:
            lines.append(f"evaluator score: {entry.score}")
        if entry.feedback:
            lines.append(f"feedback: {entry.feedback}")
    lines.append(
        "Improve on the most recent attempt, fixing the problems the "
        "feedback points out. Reply with the full revised answer."
    )
    return "\n".join(lines)


def chat_completion_transport(
    url: str | None = None,
    api_key: str | None = None,
    model: str | None = None,
    timeout: float = 120.0,
) -> Callable[[str], str]:
    """Transport hitting an OpenAI-style /chat/completions endpoint.

    Credentials and model come from GEN_API_URL / GEN_API_KEY / GEN_MODEL
    unless given explicitly.
    """
    url = url or os.environ.get("GEN_API_URL")
    api_key = api_key or os.environ.get("GEN_API_KEY")
    model = model or os.environ.get("GEN_MODEL")
    if not url or not model:
        raise ValueError("transport needs GEN_API_URL and GEN_MODEL")

    def call(prompt: str) -> str:
        body = json.dumps(
            {"model": model, "messages": [{"role": "user", "content": prompt}]}
        ).encode("utf-8")
        req = urllib.request.Request(url, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if api_key:
            req.add_header("Authorization", f"Bearer {api_key}")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (408, 409, 429) or exc.code >= 500:
                raise TransportError(f"HTTP {exc.code}") from exc
            raise
        except (urllib.error.URLError, TimeoutError) as exc:
            raise TransportError(str(exc)) from exc
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc

    return call


class LlmAdapter:
    """Request handler: prompt construction + transport + pluggable scoring.

    `scorer(payload, request)` must return a score, or None to mark the
    generation failed (e.g. the answer did not parse)."""

    def __init__(
        self,
        transport: Callable[[str], str],
        scorer: Callable[[str, Request], float | None],
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.transport = transport
        self.scorer = scorer
        self.retry = retry
        self.sleep = sleep

    def __call__(self, request: Request) -> Response:
        prompt = build_prompt(request)
        last_error = "no attempts made"
        for attempt in range(self.retry.max_attempts):
            try:
                payload = self.transport(prompt)
            except TransportError as exc:
                last_error = str(exc)
                if attempt + 1 < self.retry.max_attempts:
                    self.sleep(self.retry.delay(attempt))
                continue
            score = self.scorer(payload, request)
            if score is None:
                return Response(
                    id=request.id,
                    payload=payload,
                    failed=True,
                    error="scorer rejected the answer",
                )
            return Response(
                id=request.id, payload=payload, score=float(score), feedback=""
            )
        return Response(
            id=request.id, failed=True, error=f"transport exhausted: {last_error}"
        )


def main(argv=None) -> int:
    """Serve an adapter configured from the environment. The default
    scorer fails everything; real deployments must inject one."""

    def unscored(payload, request):
        return None

    adapter = LlmAdapter(chat_completion_transport(), unscored)
    return serve(adapter)


if __name__ == "__main__":
    sys.exit(main())
