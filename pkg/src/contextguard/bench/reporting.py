"""Aggregation of raw benchmark rows into the quadrant report.

Output files are deterministic for a given input: fixed column order, fixed
float formatting, rows sorted, no timestamps, so identical seeds yield
byte-identical CSVs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from scipy.stats import spearmanr

from ..errors import ContractViolationError

QUADRANT_COLUMNS = ("quadrant", "samples", "secrets", "leaked",
                    "leakage_rate", "mean_reduction", "opex_reduction")


@dataclass(frozen=True)
class QuadrantStats:
    quadrant: str
    samples: int
    secrets: int
    leaked: int
    leakage_rate: float
    mean_reduction: float
    opex_reduction: float


@dataclass(frozen=True)
class BenchReport:
    quadrants: tuple[QuadrantStats, ...]
    blended: QuadrantStats
    all_blocked: bool
    spearman_reduction_removal: float


def _stats(name: str, rows: list[dict]) -> QuadrantStats:
    secrets = sum(r["secrets_total"] for r in rows)
    leaked = sum(r["leaked_count"] for r in rows)
    base_cost = sum(r["baseline_cost"] for r in rows)
    guard_cost = sum(r["guarded_cost"] for r in rows)
    return QuadrantStats(
        quadrant=name,
        samples=len(rows),
        secrets=secrets,
        leaked=leaked,
        leakage_rate=(leaked / secrets) if secrets else 0.0,
        mean_reduction=sum(1.0 - r["ratio_k"] for r in rows) / len(rows),
        opex_reduction=(1.0 - guard_cost / base_cost) if base_cost else 0.0,
    )


def reduction_removal_correlation(rows: list[dict]) -> float:
    """Spearman correlation between raw-compression reduction (1-k) and the
    fraction of detected secrets that compression removed."""
    usable = [r for r in rows if r.get("error") is None]
    if len(usable) < 3:
        return float("nan")
    x = [r["one_minus_k_raw"] for r in usable]
    y = [r["removed_secret_fraction"] for r in usable]
    return float(spearmanr(x, y).correlation)


def build_report(rows: list[dict]) -> BenchReport:
    if not rows:
        raise ContractViolationError("cannot report on zero result rows")
    by_quadrant: dict[str, list[dict]] = {}
    for row in rows:
        by_quadrant.setdefault(row["quadrant"], []).append(row)
    quadrants = tuple(
        _stats(name, by_quadrant[name]) for name in sorted(by_quadrant)
    )
    return BenchReport(
        quadrants=quadrants,
        blended=_stats("blended", rows),
        all_blocked=all(r.get("blocked") for r in rows),
        spearman_reduction_removal=reduction_removal_correlation(rows),
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _stat_row(stats: QuadrantStats) -> list[str]:
    return [
        stats.quadrant,
        str(stats.samples),
        str(stats.secrets),
        str(stats.leaked),
        _fmt(stats.leakage_rate),
        _fmt(stats.mean_reduction),
        _fmt(stats.opex_reduction),
    ]


def write_quadrants_csv(report: BenchReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(QUADRANT_COLUMNS)
        for stats in report.quadrants:
            writer.writerow(_stat_row(stats))
    return path


def write_report_csv(report: BenchReport, path) -> Path:
    """Blended and per-scope rows plus run-level flags in one file."""
    path = Path(path)
    columns = QUADRANT_COLUMNS + ("all_blocked", "spearman_reduction_removal")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("scope",) + columns[1:])
        writer.writerow(
            _stat_row(report.blended)
            + [str(report.all_blocked).lower(),
               _fmt(report.spearman_reduction_removal)]
        )
        for stats in report.quadrants:
            writer.writerow(_stat_row(stats) + ["", ""])
    return path
