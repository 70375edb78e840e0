"""Campaign reporting: delimited data files plus rendered figures.

``write_report`` lays down three machine-readable files under
``<out>/report`` — coverage_over_time.csv, roadblocks.csv, and
summary.json — then renders PNG charts next to them. The CSVs are the
source of truth: ``render_figures`` (and the ``report`` CLI command)
can rebuild the figures from them alone, so a finished campaign
directory can be re-plotted without rerunning anything.
"""

from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path
from typing import Optional

from .orchestrator import CampaignResult, RoadblockAttempt

REPORT_DIRNAME = "report"

_ROADBLOCK_FIELDS = [
    "attempt", "elapsed_s", "cond_id", "arm_id", "arm_kind", "synthetic",
    "interest", "witness_size", "solver_status", "outcome", "requests",
    "pipeline_latency_s", "solver_latency_s", "injected_id", "new_arms",
    "detail",
]


def _latency_medians(attempts: list[RoadblockAttempt]) -> dict:
    pipeline = [a.pipeline_latency_s for a in attempts
                if a.pipeline_latency_s > 0.0]
    solver = [a.solver_latency_s for a in attempts
              if a.solver_status not in ("", None)]
    return {
        "pipeline_median_s": (round(statistics.median(pipeline), 6)
                              if pipeline else None),
        "solver_median_s": (round(statistics.median(solver), 6)
                            if solver else None),
    }


def summarize(result: CampaignResult) -> dict:
    totals = result.outcome_totals()
    injected = result.injected_count()
    ratio = result.effective_ratio()
    return {
        "mode": result.mode,
        "rng_seed": result.rng_seed,
        "elapsed_s": round(result.elapsed_s, 3),
        "execs": result.execs,
        "kept": result.kept,
        "crashes": result.crashes,
        "timeouts": result.timeouts,
        "coverage": result.counts,
        "injections": {
            "attempts": len(result.attempts),
            "kept": totals["kept"],
            "discarded": totals["discarded"],
            "decode_failed": totals["decode-failed"],
            "skipped": totals["skipped"],
            "injected": injected,
            "effective_ratio": ratio,
        },
        "solver": {
            "backend": result.solver_backend,
            "requests": result.solver_requests,
            "budget_left": result.budget_left,
        },
        "latency": _latency_medians(result.attempts),
    }


def write_report(result: CampaignResult,
                 report_dir: Optional[Path] = None,
                 figures: bool = True) -> Path:
    """Write the delimited outputs (and figures) for one campaign."""
    report_dir = Path(report_dir or (result.out_dir / REPORT_DIRNAME))
    report_dir.mkdir(parents=True, exist_ok=True)

    with open(report_dir / "coverage_over_time.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["elapsed_s", "arms"])
        for elapsed, arms in result.coverage_samples:
            writer.writerow([f"{elapsed:.3f}", arms])

    with open(report_dir / "roadblocks.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_ROADBLOCK_FIELDS)
        writer.writeheader()
        for att in result.attempts:
            writer.writerow({
                "attempt": att.attempt,
                "elapsed_s": f"{att.elapsed_s:.3f}",
                "cond_id": att.cond_id,
                "arm_id": att.arm_id,
                "arm_kind": att.arm_kind,
                "synthetic": int(att.synthetic),
                "interest": att.interest,
                "witness_size": att.witness_size,
                "solver_status": att.solver_status,
                "outcome": att.outcome,
                "requests": att.requests,
                "pipeline_latency_s": f"{att.pipeline_latency_s:.6f}",
                "solver_latency_s": f"{att.solver_latency_s:.6f}",
                "injected_id": ("" if att.injected_id is None
                                else att.injected_id),
                "new_arms": att.new_arms,
                "detail": att.detail,
            })

    with open(report_dir / "summary.json", "w") as fh:
        json.dump(summarize(result), fh, indent=2, sort_keys=True)
        fh.write("\n")

    if figures:
        render_figures(report_dir)
    return report_dir


# ---------------------------------------------------------------------------
# reading a finished report directory back


def read_coverage_csv(report_dir: Path) -> list[tuple[float, int]]:
    path = Path(report_dir) / "coverage_over_time.csv"
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((float(row["elapsed_s"]), int(row["arms"])))
    return out


def read_roadblocks_csv(report_dir: Path) -> list[dict]:
    path = Path(report_dir) / "roadblocks.csv"
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row["attempt"] = int(row["attempt"])
            row["elapsed_s"] = float(row["elapsed_s"])
            row["synthetic"] = bool(int(row["synthetic"]))
            row["pipeline_latency_s"] = float(row["pipeline_latency_s"])
            row["solver_latency_s"] = float(row["solver_latency_s"])
            out.append(row)
    return out


def read_summary(report_dir: Path) -> dict:
    with open(Path(report_dir) / "summary.json") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# figures


def render_figures(report_dir: str | Path) -> list[Path]:
    """Rebuild the PNG charts from the CSVs in a report directory."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_dir = Path(report_dir)
    written = []

    samples = read_coverage_csv(report_dir)
    fig, ax = plt.subplots(figsize=(7, 4))
    if samples:
        xs = [s[0] for s in samples]
        ys = [s[1] for s in samples]
        ax.step(xs, ys, where="post", color="#2b6cb0")
        ax.fill_between(xs, ys, step="post", alpha=0.15, color="#2b6cb0")
    ax.set_xlabel("elapsed (s)")
    ax.set_ylabel("branch arms covered")
    ax.set_title("coverage over time")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = report_dir / "coverage_over_time.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    rows = read_roadblocks_csv(report_dir)
    fig, ax = plt.subplots(figsize=(7, 4))
    if rows:
        xs = [r["attempt"] for r in rows]
        width = 0.4
        ax.bar([x - width / 2 for x in xs],
               [r["pipeline_latency_s"] for r in rows],
               width=width, label="pipeline", color="#2b6cb0")
        ax.bar([x + width / 2 for x in xs],
               [r["solver_latency_s"] for r in rows],
               width=width, label="solver", color="#c05621")
        for r in rows:
            if r["outcome"] == "kept":
                ax.axvline(r["attempt"], color="#2f855a", alpha=0.25,
                           linewidth=6, zorder=0)
        ax.legend()
        ax.set_xticks(xs)
    ax.set_xlabel("roadblock attempt")
    ax.set_ylabel("latency (s)")
    ax.set_title("roadblock attempt latency (kept attempts shaded)")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = report_dir / "roadblocks.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    return written
