"""Answer generators: synthetic landscapes and external child processes.

A generator maps a request (task id, direct-vs-refine mode, ancestor
lineage) to an answer payload plus an evaluator score. The synthetic
implementation models answer quality as a latent q in [0, 1]: fresh
answers draw q from a Beta root distribution, refinements take a drift
step from the parent's latent, and the observed score is the latent plus
optional evaluation noise. The latent rides along in the result so test
oracles can judge true success independently of the observed score.

External generators speak a newline-delimited JSON protocol over child
stdio; see docs/wire-protocol.md for the exact framing.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
from dataclasses import dataclass

import numpy as np

PROTOCOL_VERSION = 1
PROTOCOL_ENV = "ANSWER_GEN_PROTOCOL"


class GeneratorUnavailable(RuntimeError):
    """The generator cannot be brought up at all (e.g. spawn failure)."""


@dataclass(frozen=True)
class LineageRecord:
    payload: str
    score: float | None
    feedback: str | None


@dataclass(frozen=True)
class GenerationRequest:
    task: str
    mode: str  # "direct" | "refine"
    lineage: tuple[LineageRecord, ...]
    stream: int  # per-call rng stream id, unique within a run

    def __post_init__(self):
        if self.mode not in ("direct", "refine"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.mode == "direct") != (len(self.lineage) == 0):
            raise ValueError("mode is direct iff the lineage is empty")


@dataclass(frozen=True)
class GenerationResult:
    payload: str = ""
    score: float | None = None
    feedback: str | None = None
    failed: bool = False
    latent: float | None = None
    error: str | None = None

    def __post_init__(self):
        if self.failed != (self.score is None):
            raise ValueError("failed results carry no score, and vice versa")


@dataclass(frozen=True)
class LandscapeParams:
    """Synthetic answer-quality dynamics.

    Direct generations draw latent quality q ~ Beta(root_a, root_b).
    A refinement moves the parent latent by N(+drift, sd^2) with
    probability improve_prob, else N(-drift, sd^2), clamped to [0, 1].
    The observed score adds N(0, obs_noise^2) evaluation noise (clamped);
    true success means latent >= success_threshold.
    """

    root_a: float = 1.0
    root_b: float = 1.0
    refine_drift: float = 0.1
    refine_sd: float = 0.05
    improve_prob: float = 0.8
    obs_noise: float = 0.0
    success_threshold: float = 0.7

    def __post_init__(self):
        if self.root_a <= 0 or self.root_b <= 0 or self.refine_sd <= 0:
            raise ValueError("root_a, root_b and refine_sd must be positive")
        if not 0.0 <= self.improve_prob <= 1.0:
            raise ValueError("improve_prob must lie in [0, 1]")
        if self.obs_noise < 0:
            raise ValueError("obs_noise must be non-negative")
        if not 0.0 <= self.success_threshold <= 1.0:
            raise ValueError("success_threshold must lie in [0, 1]")


# Refinement pays off: low-quality starts, reliable improvement steps.
DEEP_FAVORED = LandscapeParams(
    root_a=2.0,
    root_b=8.0,
    refine_drift=0.15,
    refine_sd=0.05,
    improve_prob=0.9,
    obs_noise=0.0,
    success_threshold=0.7,
)

# Heavy-tailed root draws, refinement is a mean-zero walk: width wins.
WIDE_FAVORED = LandscapeParams(
    root_a=0.5,
    root_b=4.0,
    refine_drift=0.0,
    refine_sd=0.03,
    improve_prob=0.5,
    obs_noise=0.0,
    success_threshold=0.5,
)

LANDSCAPE_PRESETS = {"deep-favored": DEEP_FAVORED, "wide-favored": WIDE_FAVORED}

_LATENT_PREFIX = "q="


def _parse_latent(payload: str) -> float:
    if not payload.startswith(_LATENT_PREFIX):
        raise ValueError(f"not a synthetic payload: {payload!r}")
    return float(payload[len(_LATENT_PREFIX):])


def _nearest_latent(req: GenerationRequest) -> float | None:
    """Latest ancestor whose payload carries a latent; failed ancestors
    have no usable payload, so refinement builds on the nearest good one."""
    for rec in reversed(req.lineage):
        if rec.payload.startswith(_LATENT_PREFIX):
            return _parse_latent(rec.payload)
    return None


def synth_generate(
    req: GenerationRequest, params: LandscapeParams, rng: np.random.Generator
) -> GenerationResult:
    """Pure function of (request, params, rng state)."""
    q_parent = None if req.mode == "direct" else _nearest_latent(req)
    if q_parent is None:
        # direct generation, or a lineage with nothing usable to refine
        q = float(rng.beta(params.root_a, params.root_b))
    else:
        sign = 1.0 if rng.random() < params.improve_prob else -1.0
        step = rng.normal(sign * params.refine_drift, params.refine_sd)
        q = float(np.clip(q_parent + step, 0.0, 1.0))
    if params.obs_noise > 0:
        score = float(np.clip(q + rng.normal(0.0, params.obs_noise), 0.0, 1.0))
    else:
        score = q
    return GenerationResult(
        payload=f"{_LATENT_PREFIX}{q:.17g}",
        score=score,
        feedback=f"observed={score:.17g}",
        latent=q,
    )


class SyntheticGenerator:
    """Landscape-backed generator with per-request derived rng streams."""

    def __init__(self, params: LandscapeParams, seed: int = 0):
        self.params = params
        self.seed = seed

    def generate(self, req: GenerationRequest) -> GenerationResult:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(req.stream,))
        )
        return synth_generate(req, self.params, rng)


class ScriptedGenerator:
    """Fixed score sequence, cycling; the k-th request (0-based arrival
    order) yields score=scores[k % len], payload "answer-k", feedback "".

    This exact behavior is pinned in docs/wire-protocol.md so clients can
    mirror it for cross-implementation tree-equality tests.
    """

    def __init__(self, scores: list[float]):
        if not scores:
            raise ValueError("need at least one scripted score")
        self.scores = list(scores)
        self._k = 0

    def generate(self, req: GenerationRequest) -> GenerationResult:
        score = float(self.scores[self._k % len(self.scores)])
        payload = f"answer-{self._k}"
        self._k += 1
        return GenerationResult(
            payload=payload, score=score, feedback="", latent=score
        )


# --- wire protocol ----------------------------------------------------------


class ProtocolError(ValueError):
    pass


def encode_request(req: GenerationRequest, request_id: str) -> str:
    doc = {
        "v": PROTOCOL_VERSION,
        "type": "request",
        "id": request_id,
        "task": req.task,
        "mode": req.mode,
        "lineage": [
            {"payload": rec.payload, "score": rec.score, "feedback": rec.feedback}
            for rec in req.lineage
        ],
        "stream": req.stream,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def parse_response(line: str, request_id: str) -> GenerationResult:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable response line: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "response":
        raise ProtocolError("response line is not a response object")
    if doc.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version mismatch: {doc.get('v')!r}")
    if doc.get("id") != request_id:
        raise ProtocolError(
            f"response id {doc.get('id')!r} does not match {request_id!r}"
        )
    failed = bool(doc.get("failed", False))
    score = doc.get("score")
    if failed:
        if score is not None:
            raise ProtocolError("failed response must not carry a score")
    else:
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError("successful response needs a numeric score")
        score = float(score)
    latent = doc.get("latent")
    if latent is not None:
        if not isinstance(latent, (int, float)) or isinstance(latent, bool):
            raise ProtocolError("latent must be numeric when present")
        latent = float(latent)
    payload = doc.get("payload", "")
    feedback = doc.get("feedback")
    if not isinstance(payload, str):
        raise ProtocolError("payload must be a string")
    if feedback is not None and not isinstance(feedback, str):
        raise ProtocolError("feedback must be a string")
    return GenerationResult(
        payload=payload,
        score=score,
        feedback=feedback,
        failed=failed,
        latent=latent,
        error=str(doc["error"]) if failed and "error" in doc else None,
    )


class _Child:
    """One worker process; at most one request in flight."""

    def __init__(self, cmd: list[str]):
        env = dict(os.environ)
        env[PROTOCOL_ENV] = str(PROTOCOL_VERSION)
        self.proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env=env,
        )
        self.buffer = bytearray()

    def alive(self) -> bool:
        return self.proc.poll() is None

    def send_line(self, line: str) -> None:
        self.proc.stdin.write(line.encode("utf-8"))
        self.proc.stdin.flush()

    def read_line(self, timeout: float) -> str:
        import time

        deadline = time.monotonic() + timeout
        fd = self.proc.stdout.fileno()
        while True:
            nl = self.buffer.find(b"\n")
            if nl >= 0:
                raw = bytes(self.buffer[:nl])
                del self.buffer[: nl + 1]
                try:
                    return raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise ProtocolError(f"non-UTF-8 response: {exc}") from exc
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("generator response timed out")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise TimeoutError("generator response timed out")
            chunk = os.read(fd, 65536)
            if chunk == b"":
                raise EOFError("generator closed its output stream")
            self.buffer.extend(chunk)

    def close(self) -> None:
        try:
            if self.proc.poll() is None:
                self.proc.terminate()
                try:
                    self.proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self.proc.kill()
                    self.proc.wait()
        finally:
            for stream in (self.proc.stdin, self.proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass


class ExternalGenerator:
    """Child-process generator speaking the line protocol.

    A child that times out, crashes, or answers garbage yields a
    failed=True result and is replaced before the next request; a command
    that cannot be spawned at all raises GeneratorUnavailable.
    """

    def __init__(self, cmd: list[str], timeout: float = 600.0, pool: int = 1):
        if pool < 1:
            raise ValueError("pool must be >= 1")
        self.cmd = list(cmd)
        self.timeout = timeout
        self.pool = pool
        self._children: list[_Child | None] = [None] * pool

    def _child(self, slot: int) -> _Child:
        child = self._children[slot]
        if child is None or not child.alive():
            if child is not None:
                child.close()
            try:
                child = _Child(self.cmd)
            except OSError as exc:
                raise GeneratorUnavailable(
                    f"cannot spawn generator {self.cmd!r}: {exc}"
                ) from exc
            self._children[slot] = child
        return child

    def _drop(self, slot: int) -> None:
        child = self._children[slot]
        if child is not None:
            child.close()
        self._children[slot] = None

    def _exchange(self, req: GenerationRequest, slot: int) -> GenerationResult:
        request_id = f"r-{req.stream}"
        try:
            child = self._child(slot)
            child.send_line(encode_request(req, request_id))
        except GeneratorUnavailable:
            raise
        except OSError as exc:
            self._drop(slot)
            return GenerationResult(failed=True, error=f"write failed: {exc}")
        return self._collect(req, slot, request_id)

    def _collect(
        self, req: GenerationRequest, slot: int, request_id: str
    ) -> GenerationResult:
        child = self._children[slot]
        try:
            line = child.read_line(self.timeout)
            return parse_response(line, request_id)
        except TimeoutError:
            self._drop(slot)
            return GenerationResult(failed=True, error="timeout")
        except EOFError:
            self._drop(slot)
            return GenerationResult(failed=True, error="crash")
        except ProtocolError as exc:
            self._drop(slot)
            return GenerationResult(failed=True, error=f"protocol: {exc}")

    def generate(self, req: GenerationRequest) -> GenerationResult:
        return self._exchange(req, 0)

    def generate_many(self, reqs: list[GenerationRequest]) -> list:
        """Pipeline requests across the child pool, one in flight each."""
        results: list[GenerationResult | None] = [None] * len(reqs)
        for start in range(0, len(reqs), self.pool):
            wave = list(enumerate(reqs))[start : start + self.pool]
            pending = []
            for slot, (i, req) in enumerate(wave):
                request_id = f"r-{req.stream}"
                try:
                    child = self._child(slot)
                    child.send_line(encode_request(req, request_id))
                    pending.append((i, req, slot, request_id))
                except GeneratorUnavailable:
                    raise
                except OSError as exc:
                    self._drop(slot)
                    results[i] = GenerationResult(
                        failed=True, error=f"write failed: {exc}"
                    )
            for i, req, slot, request_id in pending:
                results[i] = self._collect(req, slot, request_id)
        return results

    def close(self) -> None:
        for slot in range(self.pool):
            self._drop(slot)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def generate_many(generator, reqs: list[GenerationRequest]) -> list:
    """Batched generation; uses the generator's pipelining when offered."""
    if hasattr(generator, "generate_many"):
        return generator.generate_many(reqs)
    return [generator.generate(r) for r in reqs]
