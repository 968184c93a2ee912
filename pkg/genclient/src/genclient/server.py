"""Stdio request loop for generator workers.

`serve` reads one request per line, hands it to the handler, and writes
exactly one response line per request. Handler exceptions never kill the
process: they turn into failed=true responses. A protocol-version
mismatch in the environment refuses service immediately with a
diagnostic on stderr.
"""

from __future__ import annotations

import json
import os
import sys
from typing import Callable

from .protocol import (
    PROTOCOL_ENV,
    PROTOCOL_VERSION,
    ProtocolError,
    Request,
    Response,
    parse_request,
    serialize_response,
)

Handler = Callable[[Request], Response]


def check_version(environ=os.environ, stderr=sys.stderr) -> bool:
    """False (with a diagnostic) when the engine pinned another version."""
    pinned = environ.get(PROTOCOL_ENV)
    if pinned is not None and pinned != str(PROTOCOL_VERSION):
        print(
            f"generator protocol mismatch: engine pinned {pinned!r}, "
            f"this worker speaks {PROTOCOL_VERSION}",
            file=stderr,
        )
        return False
    return True


def _best_effort_id(line: str) -> str:
    try:
        doc = json.loads(line)
        rid = doc.get("id") if isinstance(doc, dict) else None
        return rid if isinstance(rid, str) else ""
    except json.JSONDecodeError:
        return ""


def serve(
    handler: Handler,
    stdin=None,
    stdout=None,
    environ=os.environ,
    stderr=None,
) -> int:
    """Run until the input stream closes; returns a process exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    if not check_version(environ, stderr):
        return 2
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = parse_request(line)
            response = handler(request)
            if response.id != request.id:
                raise ProtocolError("handler changed the request id")
        except ProtocolError as exc:
            response = Response(
                id=_best_effort_id(line), failed=True, error=f"protocol: {exc}"
            )
        except Exception as exc:  # handler bug: stay alive, report failure
            response = Response(
                id=_best_effort_id(line),
                failed=True,
                error=f"{type(exc).__name__}: {exc}",
            )
        stdout.write(serialize_response(response))
        stdout.flush()
    return 0
