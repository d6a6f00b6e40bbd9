from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest

from replay_client import (
    ClientError,
    EngineCrashError,
    MixedBatchPlan,
    RemoteEngineError,
    SpawnError,
    connect,
)
from replay_client.client import default_binary

TOY_CONFIG = """\
scheduler:
  initial_interval: 30
buffer:
  refresh_interval: 25
engine:
  batch_size: 64
  seed: 11
"""


@pytest.fixture
def toy_config(tmp_path):
    path = tmp_path / "engine.yaml"
    path.write_text(TOY_CONFIG)
    return str(path)


def test_connect_echoes_engine_defaults():
    with connect() as engine:
        assert engine.config_echo["lambda0"] == 0.3
        assert engine.config_echo["tracked"] == 0


def test_connect_missing_binary_raises_spawn_error():
    with pytest.raises(SpawnError):
        connect(binary=["/nonexistent/engine-binary"])


def test_connect_malformed_config_surfaces_engine_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scheduler: [unclosed\n")
    with pytest.raises(ClientError) as exc:
        connect(str(bad))
    assert "malformed" in str(exc.value)


def test_unknown_id_error_passthrough():
    with connect() as engine:
        with pytest.raises(RemoteEngineError) as exc:
            engine.confirm(
                MixedBatchPlan(new_ids=[], replay_ids=["ghost"], lambda_=0.1, step=1, cycle=1)
            )
        assert exc.value.code == "unknown_id"


def test_plan_rejects_overlapping_id_sets():
    with pytest.raises(ClientError):
        MixedBatchPlan(new_ids=["a"], replay_ids=["a"], lambda_=0.1, step=1, cycle=1)


def test_pre_trigger_step_returns_no_plan(toy_config):
    with connect(toy_config) as engine:
        engine.register(["a", "b"], "t0")
        plan = engine.step({"a": 0.5, "b": 0.25})
        assert plan is None


def test_epoch_end_propagates_and_mean_m_drops(toy_config):
    with connect(toy_config) as engine:
        engine.register([f"s{i}" for i in range(10)], "t0")
        for _ in range(9):
            engine.step({"s0": 0.5})
        before = engine.stats()["mean_m"]
        engine.step({"s0": 0.5}, epoch_end=True)
        after = engine.stats()["mean_m"]
        assert after < before


def test_dropped_plan_keeps_decaying_versus_confirmed(toy_config):
    def run(confirm: bool) -> float:
        with connect(toy_config) as engine:
            engine.register([f"o{i}" for i in range(50)], "t0")
            engine.register([f"n{i}" for i in range(10)], "t1")
            for step in range(120):
                plan = engine.step({"n0": 0.4}, epoch_end=(step % 25 == 24))
                if confirm and plan is not None:
                    engine.confirm(plan)
            return engine.stats()["mean_m"]

    assert run(confirm=True) > run(confirm=False)


def run_toy_stages(engine, n_stages=3, per_stage=100, samples_per_stage=100):
    """Scripted toy run: register each stage, step with small loss batches."""
    decisions = []
    for stage in range(n_stages):
        ids = [f"t{stage}_{i}" for i in range(samples_per_stage)]
        engine.register(ids, f"task{stage}")
        for local in range(per_stage):
            losses = {ids[(local * 7 + j) % len(ids)]: 0.2 + 0.01 * j for j in range(8)}
            plan = engine.step(losses, epoch_end=(local % 25 == 24))
            if plan is not None:
                decisions.append(plan)
                engine.confirm(plan)
    return decisions


def test_three_stage_round_trip_matches_engine_metrics(tmp_path, toy_config):
    # released-binary round trip: the client's decision log must match the
    # engine's own metrics log record for record
    metrics_path = tmp_path / "metrics.jsonl"
    with connect(toy_config, metrics_out=str(metrics_path)) as engine:
        decisions = run_toy_stages(engine)
        tracked = engine.stats()["tracked"]
    assert tracked == 300
    replayed = [d for d in decisions if d.replay_ids]
    assert len(replayed) >= 2

    engine_records = [
        json.loads(line) for line in metrics_path.read_text().splitlines()
    ]
    engine_replays = [r for r in engine_records if r["kind"] == "replay"]
    client_log = [(d.step, d.cycle, d.lambda_, len(d.replay_ids)) for d in decisions]
    engine_log = [
        (r["step"], r["cycle"], r["lambda"], r["selected_count"]) for r in engine_replays
    ]
    assert client_log == engine_log


def test_client_matches_hand_written_wire_messages(toy_config):
    ops = [
        ("register_samples", {"ids": [f"o{i}" for i in range(40)], "dataset_tag": "t0"}),
        ("register_samples", {"ids": [f"n{i}" for i in range(10)], "dataset_tag": "t1"}),
        ("report_losses", {"losses": [["o0", 1.0], ["o1", 0.5]]}),
        ("tick", {"steps": 40}),
        ("query_replay", {}),
        ("stats", {}),
    ]
    with connect(toy_config) as engine:
        via_client = [engine.request(op, args) for op, args in ops]

    proc = subprocess.Popen(
        default_binary() + ["serve", "--config", toy_config],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    try:
        raw = []
        for i, (op, args) in enumerate(ops, start=1):
            proc.stdin.write(json.dumps({"id": i, "op": op, "args": args}) + "\n")
            proc.stdin.flush()
            response = json.loads(proc.stdout.readline())
            assert response["id"] == i and response["ok"]
            raw.append(response["result"])
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
        proc.stdout.close()
        proc.stderr.close()
    assert via_client == raw


def test_killed_engine_raises_within_timeout(toy_config):
    engine = connect(toy_config, timeout=5.0)
    try:
        engine.register(["a"], "t0")
        engine._proc.kill()
        engine._proc.wait(timeout=5)
        start = time.monotonic()
        with pytest.raises((EngineCrashError, ClientError)):
            engine.step({"a": 0.5})
        assert time.monotonic() - start < 5.0
    finally:
        engine.close()


def test_example_training_loop_runs():
    import os

    example = os.path.join(os.path.dirname(__file__), "..", "examples",
                           "stub_training_loop.py")
    proc = subprocess.run(
        [sys.executable, example], capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert "replayed" in proc.stdout
