"""Experiment reports: aggregation, persistence, tables, and plots.

A report is self-contained: the full config snapshot, its fingerprint,
every per-seed metrics record, and an aggregate recomputable from those
records. Emission writes line-delimited per-seed records, a summary
table, and static plots whose bytes are reproducible run to run.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..core.metrics import aggregate_ci
from ..core.rng import RNGPolicy
from ..errors import InsufficientDataError

PLOT_DPI = 120
FIGSIZE = (6.0, 4.0)
# deterministic output: strip the writer-version stamp from the PNG header
PNG_METADATA = {"Software": None}


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    fingerprint: str
    records: list
    aggregate: dict
    partial: bool = False
    failed_seeds: dict = field(default_factory=dict)
    walltime: dict | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "records": self.records,
            "aggregate": self.aggregate,
            "partial": self.partial,
            "failed_seeds": self.failed_seeds,
            "walltime": self.walltime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(config=d["config"], fingerprint=d["fingerprint"],
                   records=list(d["records"]), aggregate=d["aggregate"],
                   partial=bool(d["partial"]), failed_seeds=dict(d["failed_seeds"]),
                   walltime=d.get("walltime"))


def aggregate_records(records: list, key: str = "score") -> dict:
    """Bootstrap mean/CI of one scalar per record; empty input aggregates
    to an explicit null rather than raising, so partial reports survive."""
    values = [float(r[key]) for r in records]
    if not values:
        return {key: None}
    if len(values) == 1:
        v = values[0]
        return {key: {"mean": v, "lo": v, "hi": v, "n": 1}}
    mean, lo, hi = aggregate_ci(values, rng=RNGPolicy(0))
    return {key: {"mean": mean, "lo": lo, "hi": hi, "n": len(values)}}


def strip_volatile(record: dict) -> dict:
    """Copy of a metrics record without wall-clock fields, for equality
    checks between runs that are identical modulo timing."""
    return {k: v for k, v in record.items() if k != "walltime"}


def save_report(report: ExperimentReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)


def load_report(path: str) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))


def record_curve(record: dict) -> tuple[list, list]:
    """(steps, scores) of a per-seed record, tolerant of both series
    layouts: BC MetricSeries dicts and RL evaluation record lists."""
    series = record.get("series")
    if isinstance(series, dict):
        return list(series["steps"]), list(series["scores"])
    if isinstance(series, list):
        return ([r["step"] for r in series],
                [r.get("normalized_return", r.get("success_rate")) for r in series])
    return [], []


def write_jsonl(report: ExperimentReport, path: str) -> None:
    with open(path, "w") as fh:
        for record in report.records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_summary_csv(report: ExperimentReport, path: str) -> None:
    """Per-seed scores plus the aggregate row; failed seeds keep an NA row."""
    agg = report.aggregate.get("score")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "seed", "score", "ci_lo", "ci_hi"])
        for record in report.records:
            w.writerow(["seed", record["seed"], f"{record['score']:.6f}", "", ""])
        for seed in report.failed_seeds:
            w.writerow(["seed", seed, "NA", "", ""])
        if agg is None:
            w.writerow(["aggregate", "", "NA", "NA", "NA"])
        else:
            w.writerow(["aggregate", "",
                        f"{agg['mean']:.6f}", f"{agg['lo']:.6f}", f"{agg['hi']:.6f}"])


def read_summary_csv(path: str) -> dict:
    out: dict = {"seeds": {}, "aggregate": None}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] == "seed":
                score = None if row["score"] == "NA" else float(row["score"])
                out["seeds"][row["seed"]] = score
            elif row["kind"] == "aggregate" and row["score"] != "NA":
                out["aggregate"] = {"mean": float(row["score"]),
                                    "lo": float(row["ci_lo"]),
                                    "hi": float(row["ci_hi"])}
    return out


def _figure():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_learning_curves(report: ExperimentReport, path: str) -> None:
    if not report.records:
        raise InsufficientDataError("no per-seed records to plot")
    plt = _figure()
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=PLOT_DPI)
    curves = []
    for record in report.records:
        steps, scores = record_curve(record)
        if not steps:
            continue
        ax.plot(steps, scores, alpha=0.45, linewidth=1.0,
                label=f"seed {record['seed']}")
        curves.append((steps, scores))
    if not curves:
        plt.close(fig)
        raise InsufficientDataError("records carry no checkpoint series")
    if len({tuple(s) for s, _ in curves}) == 1:
        mean = np.mean([sc for _, sc in curves], axis=0)
        ax.plot(curves[0][0], mean, color="black", linewidth=2.0, label="mean")
    ax.set_xlabel("environment steps" if report.config.get("algorithm") != "bc" else "epoch")
    ax.set_ylabel("score")
    ax.set_title(f"{report.config.get('method')} / {report.config.get('algorithm')}")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def plot_score_bar(report: ExperimentReport, path: str) -> None:
    if not report.records:
        raise InsufficientDataError("no per-seed records to plot")
    agg = report.aggregate.get("score")
    plt = _figure()
    fig, ax = plt.subplots(figsize=(3.2, 4.0), dpi=PLOT_DPI)
    scores = [r["score"] for r in report.records]
    yerr = None
    if agg is not None and agg["n"] > 1:
        yerr = [[agg["mean"] - agg["lo"]], [agg["hi"] - agg["mean"]]]
    ax.bar([0], [np.mean(scores)], width=0.5, yerr=yerr, capsize=6, color="#4878b0")
    ax.scatter([0] * len(scores), scores, color="black", zorder=3, s=14)
    ax.set_xticks([0])
    ax.set_xticklabels([report.config.get("method", "")], fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def emit_outputs(report: ExperimentReport, out_dir: str,
                 formats: tuple[str, ...] = ("jsonl", "csv", "png")) -> list[str]:
    """Write the requested artifact files; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report.fingerprint)
    written = []
    if "jsonl" in formats:
        p = base + "_seeds.jsonl"
        write_jsonl(report, p)
        written.append(p)
    if "csv" in formats:
        p = base + "_summary.csv"
        write_summary_csv(report, p)
        written.append(p)
    if "png" in formats:
        p1, p2 = base + "_curves.png", base + "_scores.png"
        plot_learning_curves(report, p1)
        plot_score_bar(report, p2)
        written.extend([p1, p2])
    return written
