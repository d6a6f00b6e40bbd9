"""Minimal training-loop integration: three tasks, mixed batches on demand.

Run with the engine package installed:

    python examples/stub_training_loop.py
"""

from __future__ import annotations

import random
import tempfile

from replay_client import connect

CONFIG = """\
scheduler:
  initial_interval: 40
engine:
  batch_size: 64
  seed: 7
"""


def fake_losses(ids: list[str], rng: random.Random) -> dict[str, float]:
    return {sid: rng.uniform(0.1, 2.0) for sid in ids}


def main() -> None:
    with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as fh:
        fh.write(CONFIG)
        config_path = fh.name

    rng = random.Random(0)
    with connect(config_path) as engine:
        print("connected; engine defaults:", engine.config_echo["lambda0"])
        for task in range(3):
            ids = [f"t{task}_{i}" for i in range(100)]
            engine.register(ids, f"task{task}")
            for step in range(100):
                batch = rng.sample(ids, 16)
                plan = engine.step(fake_losses(batch, rng), epoch_end=(step % 25 == 24))
                if plan is not None and plan.replay_ids:
                    # ... train on batch + plan.replay_ids here ...
                    engine.confirm(plan)
                    print(
                        f"step {plan.step}: replayed {len(plan.replay_ids)} "
                        f"samples at ratio {plan.lambda_:.3f}"
                    )
        print("final stats:", engine.stats())


if __name__ == "__main__":
    main()
