"""Message types and framing for the answer-generator wire protocol.

One JSON object per line, UTF-8, LF-terminated; requests flow to the
worker's stdin, responses back on stdout, one exchange in flight at a
time. The protocol version is pinned through the ANSWER_GEN_PROTOCOL
environment variable at spawn. See docs/wire-protocol.md at the
repository root for the normative description.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1
PROTOCOL_ENV = "ANSWER_GEN_PROTOCOL"


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class LineageEntry:
    payload: str
    score: float | None = None
    feedback: str | None = None


@dataclass(frozen=True)
class Request:
    id: str
    task: str
    mode: str  # "direct" | "refine"
    lineage: tuple[LineageEntry, ...] = ()
    stream: int = 0

    def __post_init__(self):
        if self.mode not in ("direct", "refine"):
            raise ProtocolError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class Response:
    id: str
    payload: str = ""
    score: float | None = None
    feedback: str | None = None
    failed: bool = False
    latent: float | None = None
    error: str | None = None

    def __post_init__(self):
        if self.failed != (self.score is None):
            raise ProtocolError("failed responses carry no score, and vice versa")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ProtocolError(message)


def _opt_number(doc: dict, key: str) -> float | None:
    value = doc.get(key)
    if value is None:
        return None
    _require(
        isinstance(value, (int, float)) and not isinstance(value, bool),
        f"{key} must be numeric",
    )
    return float(value)


def _opt_text(doc: dict, key: str) -> str | None:
    value = doc.get(key)
    _require(value is None or isinstance(value, str), f"{key} must be a string")
    return value


def parse_request(line: str) -> Request:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"request is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "request must be an object")
    _require(doc.get("type") == "request", "message type must be 'request'")
    _require(
        doc.get("v") == PROTOCOL_VERSION,
        f"unsupported protocol version {doc.get('v')!r}",
    )
    _require(isinstance(doc.get("id"), str) and doc["id"], "missing request id")
    _require(isinstance(doc.get("task"), str), "missing task id")
    mode = doc.get("mode")
    _require(mode in ("direct", "refine"), f"bad mode {mode!r}")
    raw_lineage = doc.get("lineage", [])
    _require(isinstance(raw_lineage, list), "lineage must be a list")
    lineage = []
    for entry in raw_lineage:
        _require(isinstance(entry, dict), "lineage entries must be objects")
        _require(isinstance(entry.get("payload"), str), "lineage payload must be text")
        lineage.append(
            LineageEntry(
                payload=entry["payload"],
                score=_opt_number(entry, "score"),
                feedback=_opt_text(entry, "feedback"),
            )
        )
    stream = doc.get("stream", 0)
    _require(isinstance(stream, int) and not isinstance(stream, bool), "stream must be an int")
    return Request(
        id=doc["id"],
        task=doc["task"],
        mode=mode,
        lineage=tuple(lineage),
        stream=stream,
    )


def serialize_request(req: Request) -> str:
    doc = {
        "v": PROTOCOL_VERSION,
        "type": "request",
        "id": req.id,
        "task": req.task,
        "mode": req.mode,
        "lineage": [
            {"payload": e.payload, "score": e.score, "feedback": e.feedback}
            for e in req.lineage
        ],
        "stream": req.stream,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def parse_response(line: str) -> Response:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "response must be an object")
    _require(doc.get("type") == "response", "message type must be 'response'")
    _require(
        doc.get("v") == PROTOCOL_VERSION,
        f"unsupported protocol version {doc.get('v')!r}",
    )
    _require(isinstance(doc.get("id"), str), "missing response id")
    failed = doc.get("failed", False)
    _require(isinstance(failed, bool), "failed must be a boolean")
    payload = doc.get("payload", "")
    _require(isinstance(payload, str), "payload must be a string")
    return Response(
        id=doc["id"],
        payload=payload,
        score=_opt_number(doc, "score"),
        feedback=_opt_text(doc, "feedback"),
        failed=failed,
        latent=_opt_number(doc, "latent"),
        error=_opt_text(doc, "error"),
    )


def serialize_response(resp: Response) -> str:
    doc = {
        "v": PROTOCOL_VERSION,
        "type": "response",
        "id": resp.id,
        "payload": resp.payload,
        "score": resp.score,
        "feedback": resp.feedback,
        "failed": resp.failed,
        "latent": resp.latent,
    }
    if resp.error is not None:
        doc["error"] = resp.error
    line = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    if "\n" in line:  # json.dumps never emits raw newlines, but be exact
        raise ProtocolError("serialized response would span lines")
    return line + "\n"
