"""Engine coprocess handle: spawn, request/response, lifecycle helpers.

All calls are synchronous and serialized through the handle; every request
gets exactly one response (matched by correlation id) or raises within the
configured timeout.  Killing the engine mid-request surfaces an error, never
a hang.
"""

from __future__ import annotations

import json
import queue
import subprocess
import sys
import threading
from dataclasses import dataclass, field


class ClientError(Exception):
    pass


class SpawnError(ClientError):
    pass


class RequestTimeout(ClientError):
    pass


class EngineCrashError(ClientError):
    pass


class RemoteEngineError(ClientError):
    """The engine answered with an error response; code and message kept."""

    def __init__(self, code: str, msg: str):
        super().__init__(f"[{code}] {msg}")
        self.code = code
        self.msg = msg


@dataclass
class MixedBatchPlan:
    """Batch composition for one step: fresh ids plus replay ids at ratio."""

    new_ids: list[str]
    replay_ids: list[str]
    lambda_: float
    step: int
    cycle: int

    def __post_init__(self):
        overlap = set(self.new_ids) & set(self.replay_ids)
        if overlap:
            raise ClientError(f"plan id sets overlap: {sorted(overlap)[:3]}")


_EOF = object()


class EngineHandle:
    """One engine subprocess plus the reader thread feeding its responses."""

    def __init__(self, proc: subprocess.Popen, timeout: float = 5.0):
        self._proc = proc
        self.timeout = timeout
        self._next_id = 0
        self._responses: queue.Queue = queue.Queue()
        self._pending: dict[int, dict] = {}
        self._lock = threading.Lock()
        self.config_echo: dict = {}
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._responses.put(line)
        self._responses.put(_EOF)

    def _crash_message(self) -> str:
        err = ""
        try:
            err = self._proc.stderr.read() or ""
        except Exception:
            pass
        code = self._proc.poll()
        lines = err.strip().splitlines()
        flagged = [l for l in lines if l.startswith("error [")]
        detail = " | ".join(flagged or lines[-6:]) if lines else "no stderr"
        return f"engine exited (code {code}): {detail}"

    def request(self, op: str, args: dict | None = None, timeout: float | None = None) -> dict:
        """Send one request and wait for its response (or raise)."""
        timeout = self.timeout if timeout is None else timeout
        with self._lock:
            self._next_id += 1
            req_id = self._next_id
            payload = json.dumps({"id": req_id, "op": op, "args": args or {}})
            try:
                self._proc.stdin.write(payload + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError, OSError) as exc:
                raise EngineCrashError(self._crash_message()) from exc
            while True:
                if req_id in self._pending:
                    response = self._pending.pop(req_id)
                else:
                    try:
                        line = self._responses.get(timeout=timeout)
                    except queue.Empty:
                        raise RequestTimeout(
                            f"no response to {op!r} within {timeout} s"
                        ) from None
                    if line is _EOF:
                        raise EngineCrashError(self._crash_message())
                    response = json.loads(line)
                    if response.get("id") != req_id:
                        self._pending[response.get("id")] = response
                        continue
                if response.get("ok"):
                    return response.get("result") or {}
                error = response.get("error") or {}
                raise RemoteEngineError(error.get("code", "unknown"), error.get("msg", ""))

    # ---------------------------------------------------------- lifecycle ops

    def register(self, sample_ids: list[str], dataset_tag: str) -> dict:
        return self.request("register_samples", {"ids": sample_ids, "dataset_tag": dataset_tag})

    def step(self, losses: dict[str, float], epoch_end: bool = False) -> MixedBatchPlan | None:
        """Report one step's losses, advance the clock, and return any plan."""
        self.request(
            "report_losses",
            {"losses": [[sid, loss] for sid, loss in losses.items()], "epoch_end": epoch_end},
        )
        result = self.request("tick", {"steps": 1})
        decision = result.get("decision")
        if decision is None:
            return None
        return MixedBatchPlan(
            new_ids=list(losses.keys()),
            replay_ids=list(decision["selected"]),
            lambda_=float(decision["lambda"]),
            step=int(decision["step"]),
            cycle=int(decision["cycle"]),
        )

    def confirm(self, plan: MixedBatchPlan | None) -> int:
        """Consolidate a plan's replay ids after they were actually trained."""
        if plan is None or not plan.replay_ids:
            return 0
        result = self.request("mark_replayed", {"ids": plan.replay_ids})
        return int(result.get("consolidated", 0))

    def stats(self) -> dict:
        return self.request("stats")

    def snapshot(self, path: str | None = None) -> dict:
        return self.request("snapshot", {"path": path} if path else {})

    def close(self) -> None:
        try:
            if self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=self.timeout)
                except subprocess.TimeoutExpired:
                    self._proc.terminate()
                    self._proc.wait(timeout=self.timeout)
        finally:
            for stream in (self._proc.stdout, self._proc.stderr):
                try:
                    stream.close()
                except Exception:
                    pass

    def __enter__(self) -> EngineHandle:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def default_binary() -> list[str]:
    return [sys.executable, "-m", "memreplay"]


def connect(
    config_path: str | None = None,
    binary: list[str] | None = None,
    timeout: float = 5.0,
    metrics_out: str | None = None,
    seed: int | None = None,
) -> EngineHandle:
    """Spawn the engine and complete the handshake (an initial stats call)."""
    argv = list(binary or default_binary()) + ["serve"]
    if config_path:
        argv += ["--config", config_path]
    if metrics_out:
        argv += ["--metrics-out", metrics_out]
    if seed is not None:
        argv += ["--seed", str(seed)]
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        raise SpawnError(f"failed to spawn {argv[0]!r}: {exc}") from exc
    handle = EngineHandle(proc, timeout=timeout)
    try:
        handle.config_echo = handle.stats()
    except ClientError:
        handle.close()
        raise
    return handle
