"""Performance harness over synthetic populations.

Measures the two hot paths: the vectorized epoch update over a large
tracked population, and building one prioritized decision from a full
buffer.  Reports best-of-N wall times so the overhead budget is checkable
on any machine.
"""

from __future__ import annotations

import time

import numpy as np

from .config import config_from_dict
from .engine import Engine
from .sampler import ReplayBuffer, SamplerParams, build_decision


def bench_epoch_update(n_samples: int = 100_000, repeats: int = 5, seed: int = 0) -> dict:
    eng = Engine(config_from_dict({}))
    eng.register_samples([f"s{i}" for i in range(n_samples)], "bench")
    rng = np.random.default_rng(seed)
    eng.store.norm[:n_samples] = rng.uniform(0, 1, n_samples)
    best = float("inf")
    for _ in range(repeats):
        eng.tick(10)
        t0 = time.perf_counter()
        eng.advance_epoch()
        best = min(best, time.perf_counter() - t0)
    return {"n_samples": n_samples, "repeats": repeats, "best_ms": best * 1e3}


def bench_decision(buffer_size: int = 1024, select: int = 256, repeats: int = 20,
                   seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    buffer = ReplayBuffer(capacity=buffer_size,
                          entries=[f"s{i}" for i in range(buffer_size)])
    retentions = rng.uniform(0.01, 1.0, buffer_size)
    gaps = rng.integers(0, 500, buffer_size).astype(float)
    params = SamplerParams()
    lam = select / 1024.0
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        decision = build_decision(buffer, lam, 1024, params, 0, 0, rng,
                                  retentions=retentions, gaps=gaps)
        best = min(best, time.perf_counter() - t0)
        assert len(decision.selected) == select
    return {"buffer_size": buffer_size, "select": select, "repeats": repeats,
            "best_ms": best * 1e3}


def run_bench(n_samples: int = 100_000, buffer_size: int = 1024, select: int = 256,
              seed: int = 0) -> dict:
    return {
        "epoch_update": bench_epoch_update(n_samples=n_samples, seed=seed),
        "decision": bench_decision(buffer_size=buffer_size, select=select, seed=seed),
    }
