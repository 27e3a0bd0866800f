"""Report generation: plot-data tables plus rendered figures.

Reads a run directory's results.csv / stats.csv / plotdata tables and
writes derived CSVs alongside PNG figures (accuracy-vs-steps curves,
spread bars per attack variant, attack comparison bars).
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIG_SIZE = (5.0, 3.2)


def write_plotdata(path, columns, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] if not isinstance(row[c], float) else f"{row[c]:.8g}"
                             for c in columns])


def _read_csv(path, skip_comment=True):
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not (skip_comment and ln.startswith("#"))]
    reader = csv.DictReader(lines)
    for row in reader:
        rows.append(row)
    return rows


def _save(fig, out_dir, name):
    os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    path = os.path.join(out_dir, "figures", name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_acc_vs_steps(out_dir) -> str | None:
    plot_dir = os.path.join(out_dir, "plotdata")
    files = [f for f in sorted(os.listdir(plot_dir)) if f.startswith("acc_vs_steps")] \
        if os.path.isdir(plot_dir) else []
    if not files:
        return None
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for f in files:
        rows = _read_csv(os.path.join(plot_dir, f))
        if not rows:
            continue
        steps = [int(r["steps"]) for r in rows]
        acc = [float(r["adv_acc"]) for r in rows]
        ax.plot(steps, acc, marker="o", label=rows[0]["attack"])
    ax.set_xlabel("attack steps")
    ax.set_ylabel("adversarial accuracy")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, "acc_vs_steps.png")


def figure_spread(out_dir) -> list[str]:
    stats_path = os.path.join(out_dir, "stats.csv")
    if not os.path.exists(stats_path):
        return []
    rows = _read_csv(stats_path)
    by_variant = defaultdict(lambda: defaultdict(list))
    for r in rows:
        for key in ("variance", "cosine", "sign_match"):
            try:
                by_variant[r["modifier"]][key].append(float(r[key]))
            except ValueError:
                pass
    variants = list(by_variant)
    out_paths = []
    table_rows = []
    for key in ("variance", "cosine", "sign_match"):
        med = [float(np.median(by_variant[v][key])) for v in variants]
        fig, ax = plt.subplots(figsize=FIG_SIZE)
        ax.bar(range(len(variants)), med, color="#4878a8")
        ax.set_xticks(range(len(variants)))
        ax.set_xticklabels(variants, rotation=20, fontsize=7)
        ax.set_ylabel(f"median {key.replace('_', ' ')}")
        ax.grid(alpha=0.3, axis="y")
        out_paths.append(_save(fig, out_dir, f"{key}_bars.png"))
    for v in variants:
        table_rows.append({
            "modifier": v,
            "median_variance": float(np.median(by_variant[v]["variance"])),
            "median_cosine": float(np.median(by_variant[v]["cosine"])),
            "median_sign_match": float(np.median(by_variant[v]["sign_match"])),
        })
    write_plotdata(os.path.join(out_dir, "plotdata", "spread_by_variant.csv"),
                   ["modifier", "median_variance", "median_cosine", "median_sign_match"],
                   table_rows)
    return out_paths


def figure_attack_comparison(out_dir) -> str | None:
    path = os.path.join(out_dir, "plotdata", "attack_comparison.csv")
    if not os.path.exists(path):
        return None
    rows = _read_csv(path)
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    names = [r["attack"] for r in rows]
    means = [float(r["adv_acc_mean"]) for r in rows]
    errs = [float(r["adv_acc_ci95"] or 0) for r in rows]
    ax.bar(range(len(names)), means, yerr=errs, capsize=3, color="#a85448")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=15, fontsize=7)
    ax.set_ylabel("adversarial accuracy")
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, out_dir, "attack_comparison.png")


def generate(out_dir) -> list[str]:
    """Render every figure the run directory has data for."""
    made = []
    p = figure_acc_vs_steps(out_dir)
    if p:
        made.append(p)
    made.extend(figure_spread(out_dir))
    p = figure_attack_comparison(out_dir)
    if p:
        made.append(p)
    return made
