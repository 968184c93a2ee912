"""Scripted mock worker for integration tests.

Implements the pinned reference behavior (docs/wire-protocol.md): the
k-th request served, counting from 0 in arrival order, answers with
score = scores[k % len(scores)], payload "answer-k", feedback "" and
latent equal to the score, so an engine driving this worker over the
wire builds byte-identical trees to its in-process scripted generator.

Fault modes let tests inject protocol violations on demand:
  malformed  - emit a non-JSON line for every request
  silent     - read requests but never answer
  crash      - exit immediately after the first request arrives
"""

from __future__ import annotations

import argparse
import sys

from .protocol import Request, Response
from .server import serve


class ScriptedHandler:
    def __init__(self, scores: list[float]):
        if not scores:
            raise ValueError("need at least one score")
        self.scores = list(scores)
        self.served = 0

    def __call__(self, request: Request) -> Response:
        score = float(self.scores[self.served % len(self.scores)])
        payload = f"answer-{self.served}"
        self.served += 1
        return Response(
            id=request.id,
            payload=payload,
            score=score,
            feedback="",
            latent=score,
        )


def _faulty_loop(mode: str, stdin, stdout) -> int:
    for _ in stdin:
        if mode == "malformed":
            stdout.write("%%% this is not a protocol line\n")
            stdout.flush()
        elif mode == "crash":
            return 3
        # silent: swallow the request
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="genclient.scripted", description="scripted mock generator worker"
    )
    parser.add_argument(
        "--scores",
        default="0.5",
        help="comma-separated score cycle, e.g. 0.1,0.9",
    )
    parser.add_argument(
        "--fault",
        choices=("malformed", "silent", "crash"),
        help="misbehave instead of answering (for fault-injection tests)",
    )
    args = parser.parse_args(argv)
    if args.fault:
        return _faulty_loop(args.fault, sys.stdin, sys.stdout)
    scores = [float(s) for s in args.scores.split(",") if s != ""]
    return serve(ScriptedHandler(scores))


if __name__ == "__main__":
    sys.exit(main())
