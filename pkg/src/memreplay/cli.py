"""Command-line entry points.

``serve`` runs the engine as a line-delimited JSON coprocess on
stdin/stdout; ``inspect-snapshot`` summarizes a saved snapshot;
``bench`` times the hot paths; ``simulate`` runs the continual-learning
strategy comparison and writes the table, per-run logs, and figures.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .bench import run_bench
from .config import EngineConfig, load_config
from .engine import Engine, canonical_json
from .errors import EngineError


def _cmd_serve(args) -> int:
    config = load_config(args.config) if args.config else EngineConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.snapshot_out:
        config.snapshot_path = args.snapshot_out
    engine = Engine(config, metrics_path=args.metrics_out)
    from .protocol import serve

    try:
        serve(engine)
    finally:
        engine.close()
    return 0


def _cmd_inspect_snapshot(args) -> int:
    with open(args.path, "r", encoding="utf-8") as fh:
        snap = json.load(fh)
    samples = snap.get("samples", {})
    ids = samples.get("ids", [])
    m = samples.get("m", [])
    s = samples.get("s", [])
    tags: dict[str, int] = {}
    for t in samples.get("tags", []):
        tags[t] = tags.get(t, 0) + 1
    summary = {
        "format_version": snap.get("format_version"),
        "step_clock": snap.get("step_clock"),
        "epoch_index": snap.get("epoch_index"),
        "tracked": len(ids),
        "samples_by_tag": tags,
        "mean_m": sum(m) / len(m) if m else None,
        "mean_s": sum(s) / len(s) if s else None,
        "buffer_size": len(snap.get("buffer_entries", [])),
        "schedule": snap.get("schedule", {}),
        "last_decision": snap.get("last_decision"),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    results = run_bench(n_samples=args.samples, buffer_size=args.buffer,
                        select=args.select, seed=args.seed)
    print(canonical_json(results))
    epoch_ms = results["epoch_update"]["best_ms"]
    decision_ms = results["decision"]["best_ms"]
    print(f"epoch update over {args.samples} samples: {epoch_ms:.2f} ms "
          f"({'ok' if epoch_ms < 100 else 'over budget'}, target < 100 ms)")
    print(f"decision from {args.buffer}-entry buffer selecting {args.select}: "
          f"{decision_ms:.3f} ms ({'ok' if decision_ms < 1 else 'over budget'}, target < 1 ms)")
    return 0


def _cmd_simulate(args) -> int:
    from .sim import compare_strategies, default_scenario, load_scenario
    from .sim.report import write_outputs
    from .sim.strategies import StrategyConfig, strategy_catalog

    scenario = load_scenario(args.scenario) if args.scenario else default_scenario()
    if args.strategy == "all":
        strategies = strategy_catalog()
    else:
        strategies = [StrategyConfig(name.strip()) for name in args.strategy.split(",")]
    seeds = list(range(1, args.seeds + 1))
    rows = compare_strategies(scenario, strategies, seeds)
    written = write_outputs(rows, args.out, figures=not args.no_figures)
    width = max(len(r.strategy) for r in rows)
    print(f"{'strategy':{width}s}  forgetting  (std)    volume    events")
    for row in rows:
        print(
            f"{row.strategy:{width}s}  {row.forgetting_mean:9.4f}  "
            f"({row.forgetting_std:.4f})  {row.replay_volume_mean:8.1f}  "
            f"{row.event_count_mean:8.1f}"
        )
    print(f"table: {written['comparison']}")
    for fig in written["figures"]:
        print(f"figure: {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memreplay",
        description="Memory-aware replay scheduling engine and simulator",
    )
    parser.add_argument("--version", action="version", version=f"memreplay {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the engine as a stdio coprocess")
    p.add_argument("--config", help="engine config file (YAML or JSON)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--metrics-out", help="append metrics records to this file")
    p.add_argument("--snapshot-out", help="default path for snapshot requests")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("inspect-snapshot", help="summarize a snapshot file")
    p.add_argument("path")
    p.set_defaults(fn=_cmd_inspect_snapshot)

    p = sub.add_parser("bench", help="time the engine hot paths")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--buffer", type=int, default=1024)
    p.add_argument("--select", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("simulate", help="run the strategy comparison")
    p.add_argument("--scenario", help="scenario file (defaults to the desk-scale scenario)")
    p.add_argument("--strategy", default="all",
                   help="strategy name, comma list, or 'all'")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (1..N)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(fn=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EngineError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
