"""Comparison outputs: delimited table, per-run logs, and figures.

``write_outputs`` lays out one directory per comparison:

    comparison.csv            one row per strategy (means over seeds)
    runs/<strategy>_s<seed>.json    full per-run report
    figures/forgetting.png    forgetting per strategy with per-seed points
    figures/retention_curves.png    old-task accuracy over the run
    figures/replay_timeline.png     event raster with volumes
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .runner import ComparisonRow


def write_comparison_csv(rows: list[ComparisonRow], path: str) -> None:
    n_tasks = len(rows[0].final_accuracy_mean) if rows else 0
    fields = (
        ["strategy", "seeds", "forgetting_mean", "forgetting_std", "forgetting_clamped_mean"]
        + [f"final_acc_task{i}" for i in range(n_tasks)]
        + ["event_count_mean", "replay_volume_mean"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(
                [
                    row.strategy,
                    len(row.seeds),
                    f"{row.forgetting_mean:.6f}",
                    f"{row.forgetting_std:.6f}",
                    f"{row.forgetting_clamped_mean:.6f}",
                ]
                + [f"{v:.6f}" for v in row.final_accuracy_mean]
                + [f"{row.event_count_mean:.1f}", f"{row.replay_volume_mean:.1f}"]
            )


def plot_forgetting(rows: list[ComparisonRow], path: str) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    names = [r.strategy for r in rows]
    means = [r.forgetting_mean for r in rows]
    ax.bar(range(len(rows)), means, color="#4878a8", alpha=0.85, zorder=2)
    for i, row in enumerate(rows):
        ax.scatter([i] * len(row.forgetting_values), row.forgetting_values,
                   color="#222222", s=12, zorder=3)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("average forgetting")
    ax.set_title("Forgetting by replay strategy (dots: individual seeds)")
    ax.grid(axis="y", alpha=0.3, zorder=0)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_retention_curves(rows: list[ComparisonRow], path: str) -> None:
    fig, ax = plt.subplots(figsize=(9, 4.5))
    cmap = plt.get_cmap("tab10")
    for i, row in enumerate(rows):
        curve = row.reports[0].accuracy_curves.get("task0", [])
        if not curve:
            continue
        steps = [p[0] for p in curve]
        accs = [p[1] for p in curve]
        ax.plot(steps, accs, label=row.strategy, color=cmap(i % 10), linewidth=1.4)
    ax.set_xlabel("training step")
    ax.set_ylabel("task 0 accuracy")
    ax.set_title("First-task retention across the run (seed %d)" % rows[0].seeds[0])
    ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_replay_timeline(rows: list[ComparisonRow], path: str) -> None:
    fig, ax = plt.subplots(figsize=(9, 0.5 + 0.45 * len(rows)))
    cmap = plt.get_cmap("tab10")
    for i, row in enumerate(rows):
        events = row.reports[0].replay_events
        steps = [e["step"] for e in events]
        sizes = [6 + e["count"] / 4 for e in events]
        ax.scatter(steps, [i] * len(steps), s=sizes, color=cmap(i % 10), alpha=0.8)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([r.strategy for r in rows])
    ax.set_xlabel("training step")
    ax.set_title("Replay events (marker size tracks samples replayed)")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_outputs(rows: list[ComparisonRow], out_dir: str, figures: bool = True) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "comparison.csv")
    write_comparison_csv(rows, csv_path)
    written = {"comparison": csv_path, "runs": [], "figures": []}
    for row in rows:
        for report in row.reports:
            p = os.path.join(runs_dir, f"{report.strategy}_s{report.seed}.json")
            with open(p, "w", encoding="utf-8") as fh:
                fh.write(report.to_json())
            written["runs"].append(p)
    if figures and rows:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        for name, fn in (
            ("forgetting.png", plot_forgetting),
            ("retention_curves.png", plot_retention_curves),
            ("replay_timeline.png", plot_replay_timeline),
        ):
            p = os.path.join(fig_dir, name)
            fn(rows, p)
            written["figures"].append(p)
    return written
