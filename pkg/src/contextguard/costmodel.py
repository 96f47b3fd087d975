"""Deterministic token estimation, tier pricing, and the cost ledger.

The token rule is intentionally crude -- ``ceil(utf8_bytes / 4)`` -- but it is
applied identically to the baseline and the guarded path, so every ratio the
benchmark reports (compression ratio, parsimony, OpEx reduction) is invariant
to the real tokenizer choice.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigurationError, ContractViolationError

# Versioned so reports can state which counting rule produced their numbers.
TOKEN_RULE = "utf8-bytes/4-ceil-v1"

LEDGER_COLUMNS = (
    "baseline_input_tokens",
    "guarded_input_tokens",
    "output_tokens",
    "baseline_cost",
    "guarded_cost",
    "delta",
    "quadrant",
)


def estimate_tokens(text: str) -> int:
    """Token estimate for ``text``: UTF-8 byte length / 4, rounded up."""
    if not text:
        return 0
    return (len(text.encode("utf-8")) + 3) // 4


@dataclass(frozen=True)
class TierPrice:
    """Per-1k-token prices for one price-table entry."""

    input_per_1k: float
    output_per_1k: float
    local: bool = False


@dataclass(frozen=True)
class PriceTable:
    tiers: dict[str, TierPrice]

    def __contains__(self, price_ref: str) -> bool:
        return price_ref in self.tiers


def price(tokens_in: int, tokens_out: int, price_ref: str, table: PriceTable) -> float:
    """Monetary cost of one request; Local entries always cost 0."""
    try:
        entry = table.tiers[price_ref]
    except KeyError:
        raise ConfigurationError(f"unknown price table entry {price_ref!r}") from None
    if entry.local:
        return 0.0
    return tokens_in / 1000.0 * entry.input_per_1k + tokens_out / 1000.0 * entry.output_per_1k


@dataclass(frozen=True)
class LedgerRow:
    """One request accounted on both the baseline and the guarded arm."""

    baseline_input_tokens: int
    guarded_input_tokens: int
    output_tokens: int
    baseline_cost: float
    guarded_cost: float
    quadrant: str = ""

    @property
    def delta(self) -> float:
        return self.baseline_cost - self.guarded_cost

    def as_record(self) -> dict:
        return {
            "baseline_input_tokens": self.baseline_input_tokens,
            "guarded_input_tokens": self.guarded_input_tokens,
            "output_tokens": self.output_tokens,
            "baseline_cost": self.baseline_cost,
            "guarded_cost": self.guarded_cost,
            "delta": self.delta,
            "quadrant": self.quadrant,
        }


class CostLedger:
    """Append-only, thread-safe ledger of request costs."""

    def __init__(self) -> None:
        self._rows: list[LedgerRow] = []
        self._lock = threading.Lock()

    def append(self, row: LedgerRow) -> None:
        with self._lock:
            self._rows.append(row)

    @property
    def rows(self) -> tuple[LedgerRow, ...]:
        with self._lock:
            return tuple(self._rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LEDGER_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [
                        r.baseline_input_tokens,
                        r.guarded_input_tokens,
                        r.output_tokens,
                        f"{r.baseline_cost:.8f}",
                        f"{r.guarded_cost:.8f}",
                        f"{r.delta:.8f}",
                        r.quadrant,
                    ]
                )


@dataclass(frozen=True)
class Parsimony:
    """Blended and per-quadrant cost reduction, as fractions in [0, 1]."""

    blended: float
    by_quadrant: dict[str, float]


def parsimony(rows: Iterable[LedgerRow]) -> Parsimony:
    """Cost reduction ``sum(delta) / sum(baseline_cost)``, blended and per quadrant."""
    rows = list(rows)
    if not rows:
        raise ContractViolationError("parsimony over an empty ledger")

    def reduction(subset: list[LedgerRow]) -> float:
        base = sum(r.baseline_cost for r in subset)
        if base <= 0:
            return 0.0
        return sum(r.delta for r in subset) / base

    grouped: dict[str, list[LedgerRow]] = {}
    for row in rows:
        grouped.setdefault(row.quadrant, []).append(row)
    return Parsimony(
        blended=reduction(rows),
        by_quadrant={q: reduction(v) for q, v in sorted(grouped.items())},
    )
