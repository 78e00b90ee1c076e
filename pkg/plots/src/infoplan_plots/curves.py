"""Read experiment CSVs and render figures.

Learning curves come from curve.csv (per-episode means and standard
deviations across trials); experiment summaries come from aggregate.csv.
Figures are written as 150-dpi PNGs: a mean line with a shaded one-standard-
deviation band for curves, grouped bars for aggregates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DPI = 150

CURVE_REQUIRED = ("episode", "score_mean", "score_std", "epsilon")
AGGREGATE_REQUIRED = (
    "domain", "n", "m", "f",
    "total_score_mean", "total_score_std",
    "infos_per_timestep_mean", "infos_per_timestep_std",
)


class SchemaError(ValueError):
    """The CSV does not match the expected column schema."""


@dataclass
class CurveTable:
    episode: np.ndarray
    score_mean: np.ndarray
    score_std: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        if len(self.episode) == 0:
            raise SchemaError("curve table has no rows")
        if not np.all(np.diff(self.episode) > 0):
            raise SchemaError("episodes must be strictly increasing")
        if np.any(self.score_std < 0):
            raise SchemaError("standard deviations must be nonnegative")


def _read_rows(path: str, required) -> List[dict]:
    with open(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def load_curve(path: str) -> CurveTable:
    rows = _read_rows(path, CURVE_REQUIRED)
    try:
        return CurveTable(
            episode=np.array([int(float(r["episode"])) for r in rows]),
            score_mean=np.array([float(r["score_mean"]) for r in rows]),
            score_std=np.array([float(r["score_std"]) for r in rows]),
            epsilon=np.array([float(r["epsilon"]) for r in rows]),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed numeric cell ({exc})") from exc


def render_curve(csv_path: str, out_path: str) -> str:
    """Mean learning curve with a shaded one-standard-deviation band."""
    table = load_curve(csv_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(table.episode, table.score_mean, color="tab:blue", label="mean score")
    ax.fill_between(
        table.episode,
        table.score_mean - table.score_std,
        table.score_mean + table.score_std,
        color="tab:green",
        alpha=0.3,
        label="±1 std",
    )
    ax2 = ax.twinx()
    ax2.plot(table.episode, table.epsilon, color="tab:gray", linestyle="--",
             linewidth=1.0, label="exploration rate")
    ax2.set_ylabel("exploration rate")
    ax.set_xlabel("episode")
    ax.set_ylabel("score per episode")
    ax.set_title("Online score-function learning")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path


def render_table(csv_path: str, out_path: str) -> str:
    """Grouped bars of mean scores and transmission rates per experiment row."""
    rows = _read_rows(csv_path, AGGREGATE_REQUIRED)
    labels = [f"{r['domain']} n={r['n']} m={r['m']} f={r['f']}" for r in rows]
    score = np.array([float(r["total_score_mean"]) for r in rows])
    score_std = np.array([float(r["total_score_std"]) for r in rows])
    rate = np.array([float(r["infos_per_timestep_mean"]) for r in rows])
    rate_std = np.array([float(r["infos_per_timestep_std"]) for r in rows])

    x = np.arange(len(rows))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.bar(x, score, yerr=score_std, color="tab:blue", capsize=3)
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax1.set_ylabel("score from teammate")
    ax2.bar(x, rate, yerr=rate_std, color="tab:orange", capsize=3)
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax2.set_ylabel("transmissions per timestep")
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path
