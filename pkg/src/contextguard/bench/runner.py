"""Benchmark execution: guarded pipeline runs and the monolithic baseline.

Each sample gets a fresh service with its own capture mocks on tiers 0-2 and
a local endpoint on tier 3, so samples are independent and the run
parallelizes without shared state.  Every outbound payload is captured;
leakage is judged by substring search for ground-truth surfaces over the
tier 0-2 captures only.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..compressor import compress_extractive
from ..config import AppConfig, load_config
from ..costmodel import estimate_tokens, price
from ..endpoints import LocalEndpoint, MockEndpoint
from ..errors import ContextGuardError, RoutingBlockedError
from ..gateway import GuardRequest, GuardService
from ..scanner import Typology, scan, scan_residual
from .generator import BenchmarkSample

CLOUD_TIERS = (0, 1, 2)


def _raw_compression_stats(sample: BenchmarkSample, config: AppConfig) -> dict:
    """Per-sample inputs for the reduction-vs-removal correlation: compress
    the raw text and count detected secrets on both sides."""
    result = compress_extractive(sample.prompt_text, config.compression)

    def residual_count(text: str) -> int:
        report = scan(text)
        return sum(
            1 for s in report.spans
            if s.secret_class.typology is not Typology.QUASI_IDENTIFIER
        )

    before = residual_count(sample.prompt_text)
    after = residual_count(result.output)
    removed = (before - after) / before if before else 0.0
    return {
        "one_minus_k_raw": 1.0 - result.ratio_k,
        "removed_secret_fraction": removed,
    }


def _base_row(sample: BenchmarkSample, mode: str) -> dict:
    return {
        "id": sample.id,
        "quadrant": sample.quadrant,
        "profile": sample.profile,
        "typology": sample.typology,
        "mode": mode,
        "secrets_total": len(sample.injected_secrets),
        "error": None,
        "blocked": False,
    }


def run_guarded_sample(sample: BenchmarkSample, config: AppConfig,
                       compressor=None) -> dict:
    endpoints = {
        0: MockEndpoint(name="tier0"),
        1: MockEndpoint(name="tier1"),
        2: MockEndpoint(name="tier2"),
        3: LocalEndpoint(),
    }
    service = GuardService(config, endpoints=endpoints, compressor=compressor)
    row = _base_row(sample, "guarded")
    row.update(_raw_compression_stats(sample, config))

    response_text = ""
    started = time.perf_counter()
    try:
        response = service.handle(GuardRequest(
            session_id=sample.id,
            prompt=sample.prompt_text,
            profile_hint=sample.profile,
        ))
        response_text = response.response
    except RoutingBlockedError:
        row["blocked"] = True
    except ContextGuardError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["elapsed_s"] = time.perf_counter() - started

    captured = "\n\n".join(
        text for tier in CLOUD_TIERS for text in endpoints[tier].payloads()
    )
    leaked = scan_residual(captured, sample.surfaces()) if captured else []

    baseline_in = estimate_tokens(sample.prompt_text)
    baseline_ref = config.tier_spec(config.bench.baseline_tier).price_ref
    rows = service.ledger.rows
    if rows:
        ledger = rows[0]
        guarded_in = ledger.guarded_input_tokens
        out_tokens = ledger.output_tokens
        guarded_cost = ledger.guarded_cost
    else:
        # Blocked or failed before ledger append: nothing left the box.
        guarded_in = 0
        out_tokens = 0
        guarded_cost = 0.0
    baseline_cost = price(baseline_in, out_tokens, baseline_ref, config.prices)

    row.update({
        "baseline_input_tokens": baseline_in,
        "guarded_input_tokens": guarded_in,
        "output_tokens": out_tokens,
        "baseline_cost": baseline_cost,
        "guarded_cost": guarded_cost,
        "delta": baseline_cost - guarded_cost,
        "ratio_k": (guarded_in / baseline_in) if baseline_in else 1.0,
        "leaked": leaked,
        "leaked_count": len(leaked),
        "response": response_text,
    })
    return row


def run_baseline_sample(sample: BenchmarkSample, config: AppConfig) -> dict:
    tier = config.bench.baseline_tier
    endpoint = MockEndpoint(name=f"tier{tier}")
    row = _base_row(sample, "baseline")
    row.update(_raw_compression_stats(sample, config))

    response_text = ""
    started = time.perf_counter()
    try:
        response = endpoint.complete(
            [{"role": "user", "content": sample.prompt_text}], max_tokens=512
        )
        response_text = response.content
    except ContextGuardError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["elapsed_s"] = time.perf_counter() - started

    captured = "\n\n".join(endpoint.payloads())
    leaked = scan_residual(captured, sample.surfaces()) if captured else []
    baseline_in = estimate_tokens(sample.prompt_text)
    out_tokens = estimate_tokens(response_text)
    ref = config.tier_spec(tier).price_ref
    cost = price(baseline_in, out_tokens, ref, config.prices)

    row.update({
        "baseline_input_tokens": baseline_in,
        "guarded_input_tokens": baseline_in,
        "output_tokens": out_tokens,
        "baseline_cost": cost,
        "guarded_cost": cost,
        "delta": 0.0,
        "ratio_k": 1.0,
        "leaked": leaked,
        "leaked_count": len(leaked),
        "response": response_text,
    })
    return row


def run(samples: list[BenchmarkSample], mode: str = "guarded",
        config: AppConfig | None = None, compressor=None,
        workers: int | None = None) -> list[dict]:
    """Run the corpus; per-sample failures are recorded, never fatal."""
    config = config or load_config()
    workers = workers or config.bench.workers
    if mode == "guarded":
        def job(sample):
            return run_guarded_sample(sample, config, compressor)
    elif mode == "baseline":
        def job(sample):
            return run_baseline_sample(sample, config)
    else:
        raise ValueError(f"mode must be guarded or baseline, not {mode!r}")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(job, samples))
    rows.sort(key=lambda r: r["id"])
    return rows


def write_results(rows: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_results(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
