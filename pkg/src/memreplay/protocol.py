"""Newline-delimited JSON coprocess protocol over stdin/stdout.

One request per line: {"id": <correlation>, "op": <name>, "args": {...}}.
Every request gets exactly one response echoing the id:
{"id": ..., "ok": true, "result": ...} or
{"id": ..., "ok": false, "error": {"code": ..., "msg": ...}}.
Requests are processed serially in arrival order.
"""

from __future__ import annotations

import json
import sys
from typing import IO

from .engine import Engine, canonical_json
from .errors import EngineError, ProtocolError

OPS = (
    "register_samples",
    "report_losses",
    "advance_epoch",
    "tick",
    "query_replay",
    "mark_replayed",
    "snapshot",
    "restore",
    "stats",
)


def handle_request(engine: Engine, request: dict) -> dict:
    op = request.get("op")
    args = request.get("args") or {}
    if not isinstance(args, dict):
        raise ProtocolError("args must be a mapping")
    if op == "register_samples":
        return engine.register_samples(
            [str(s) for s in args.get("ids", [])], str(args.get("dataset_tag", ""))
        )
    if op == "report_losses":
        return engine.report_losses(
            args.get("losses", []),
            epoch_end=bool(args.get("epoch_end", False)),
            replay=bool(args.get("replay", False)),
        )
    if op == "advance_epoch":
        return engine.advance_epoch()
    if op == "tick":
        decision = engine.tick(int(args.get("steps", 1)))
        return {"decision": decision.to_record() if decision else None}
    if op == "query_replay":
        decision = engine.query_replay()
        return {"decision": decision.to_record() if decision else None}
    if op == "mark_replayed":
        return engine.mark_replayed([str(s) for s in args.get("ids", [])])
    if op == "snapshot":
        payload = engine.snapshot()
        path = args.get("path") or engine.config.snapshot_path
        if path:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh)
            return {"path": path, "step": engine.step_clock}
        return {"snapshot": payload}
    if op == "restore":
        if "path" in args:
            with open(args["path"], "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        else:
            payload = args.get("snapshot")
        if not isinstance(payload, dict):
            raise ProtocolError("restore requires a snapshot payload or path")
        engine.restore(payload)
        return {"restored": True, "step": engine.step_clock}
    if op == "stats":
        return engine.stats()
    raise ProtocolError(f"unknown op {op!r}", code="unknown_op")


def serve(engine: Engine, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    """Serve requests line by line until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        req_id = None
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ProtocolError("request must be a JSON object")
            req_id = request.get("id")
            result = handle_request(engine, request)
            response = {"id": req_id, "ok": True, "result": result}
        except EngineError as exc:
            response = {"id": req_id, "ok": False,
                        "error": {"code": exc.code, "msg": str(exc)}}
        except json.JSONDecodeError as exc:
            response = {"id": req_id, "ok": False,
                        "error": {"code": "malformed", "msg": f"bad JSON: {exc}"}}
        stdout.write(canonical_json(response) + "\n")
        stdout.flush()
