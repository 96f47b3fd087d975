"""YAML configuration loading and validation.

Validation is strict and fails on the first error, naming the offending key
path (for example ``tiers[3].endpoint``).  Conditions the runtime can
recover from (an undersized memory budget that truncation will handle)
produce warnings on the returned config instead of errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .compressor import CompressionPolicy
from .costmodel import PriceTable, TierPrice
from .errors import ConfigurationError

ENV_VAR = "CONTEXTGUARD_CONFIG"


@dataclass(frozen=True)
class TierSpec:
    tier: int
    endpoint: str | None  # "mock" | "local" | URL | None
    price_ref: str
    max_severity_allowed: int
    max_quasi_density: float
    single_tenant: bool = False
    max_concurrency: int = 4
    model: str = "default"


@dataclass(frozen=True)
class RouterConfig:
    w_q: float = 2.0
    retries: int = 2


@dataclass(frozen=True)
class MemoryConfig:
    budget_tokens: int = 2000
    recent_window: int = 3


@dataclass(frozen=True)
class BenchConfig:
    boilerplate_fraction: float = 0.70
    baseline_tier: int = 1
    deep_bury_fraction: float = 0.5
    deep_bury_min_line: int = 40
    workers: int = 8


@dataclass(frozen=True)
class AppConfig:
    tiers: tuple[TierSpec, ...]
    prices: PriceTable
    router: RouterConfig
    memory: MemoryConfig
    compression: CompressionPolicy
    capabilities: dict[str, int]
    bench: BenchConfig
    audit_path: str | None
    warnings: tuple[str, ...] = field(default=())

    def tier_spec(self, tier: int) -> TierSpec:
        for spec in self.tiers:
            if spec.tier == tier:
                return spec
        raise ConfigurationError(f"tiers[{tier}] missing")


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigurationError(f"{path}.{key} missing")
    return mapping[key]


def _parse_prices(raw: dict) -> PriceTable:
    if not isinstance(raw, dict) or not raw:
        raise ConfigurationError("prices must be a non-empty mapping")
    tiers = {}
    for ref, entry in raw.items():
        if not isinstance(entry, dict):
            raise ConfigurationError(f"prices.{ref} must be a mapping")
        inp = _require(entry, "input_per_1k", f"prices.{ref}")
        out = _require(entry, "output_per_1k", f"prices.{ref}")
        if inp < 0 or out < 0:
            raise ConfigurationError(f"prices.{ref}: prices must be >= 0")
        tiers[ref] = TierPrice(float(inp), float(out), bool(entry.get("local", False)))
    return PriceTable(tiers)


def _parse_tiers(raw, prices: PriceTable) -> tuple[TierSpec, ...]:
    if not isinstance(raw, list):
        raise ConfigurationError("tiers must be a list")
    by_tier: dict[int, TierSpec] = {}
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigurationError(f"tiers[{i}] must be a mapping")
        tier = _require(entry, "tier", f"tiers[{i}]")
        if tier not in (0, 1, 2, 3):
            raise ConfigurationError(f"tiers[{i}].tier must be 0-3")
        if tier in by_tier:
            raise ConfigurationError(f"tiers[{i}]: duplicate tier {tier}")
        price_ref = _require(entry, "price_ref", f"tiers[{i}]")
        if price_ref not in prices:
            raise ConfigurationError(
                f"tiers[{i}].price_ref {price_ref!r} not in price table"
            )
        density = float(entry.get("max_quasi_density", 0.0))
        if not (0.0 <= density <= 1.0):
            raise ConfigurationError(f"tiers[{i}].max_quasi_density must be in [0, 1]")
        endpoint = entry.get("endpoint")
        single_tenant = bool(entry.get("single_tenant", False))
        if tier == 3 and endpoint is not None:
            if endpoint != "local" and not single_tenant:
                raise ConfigurationError(
                    f"tiers[{i}].endpoint: tier 3 must be local or single_tenant"
                )
        by_tier[tier] = TierSpec(
            tier=tier,
            endpoint=endpoint,
            price_ref=price_ref,
            max_severity_allowed=int(entry.get("max_severity_allowed", 0)),
            max_quasi_density=density,
            single_tenant=single_tenant or endpoint == "local",
            max_concurrency=int(entry.get("max_concurrency", 4)),
            model=str(entry.get("model", "default")),
        )
    for t in (0, 1, 2, 3):
        if t not in by_tier:
            raise ConfigurationError(f"tiers[{t}] missing")
    return tuple(by_tier[t] for t in (0, 1, 2, 3))


def _build(raw: dict, origin: str) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{origin}: top level must be a mapping")
    warnings: list[str] = []

    prices = _parse_prices(_require(raw, "prices", origin.rstrip(".")))
    tiers = _parse_tiers(_require(raw, "tiers", origin.rstrip(".")), prices)

    router_raw = raw.get("router", {})
    w_q = float(router_raw.get("w_q", 2.0))
    retries = int(router_raw.get("retries", 2))
    if w_q < 0:
        raise ConfigurationError("router.w_q must be >= 0")
    if retries < 0:
        raise ConfigurationError("router.retries must be >= 0")
    router = RouterConfig(w_q=w_q, retries=retries)

    mem_raw = raw.get("memory", {})
    budget = int(mem_raw.get("budget_tokens", 2000))
    window = int(mem_raw.get("recent_window", 3))
    if budget <= 0:
        raise ConfigurationError("memory.budget_tokens must be > 0")
    if window < 1:
        raise ConfigurationError("memory.recent_window must be >= 1")
    if window >= budget:
        raise ConfigurationError(
            "memory.recent_window must be smaller than memory.budget_tokens"
        )
    memory = MemoryConfig(budget_tokens=budget, recent_window=window)

    comp_raw = raw.get("compression", {})
    try:
        compression = CompressionPolicy(
            min_tokens_to_compress=int(comp_raw.get("min_tokens_to_compress", 64)),
            keep_markers=tuple(comp_raw.get(
                "keep_markers", ("TASK:", "QUESTION:", "INSTRUCTION:"))),
            head_lines=int(comp_raw.get("head_lines", 30)),
            tail_lines=int(comp_raw.get("tail_lines", 15)),
            max_digest_tokens=int(comp_raw.get("max_digest_tokens", 200)),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"compression: {exc}") from None

    # Entries whose combined size can pass the budget are survivable: memory
    # truncates at runtime.  Flag it rather than refuse to start.
    floor = compression.max_digest_tokens + window * compression.min_tokens_to_compress
    if budget < floor:
        warnings.append(
            f"memory.budget_tokens={budget} is below max_digest_tokens + "
            f"recent_window*min_tokens_to_compress={floor}; oversize recent "
            "entries will be truncated at runtime"
        )

    capabilities = dict(raw.get("capabilities", {}))
    for name, tier in capabilities.items():
        if tier not in (0, 1, 2, 3):
            raise ConfigurationError(f"capabilities.{name} must map to a tier 0-3")

    bench_raw = raw.get("bench", {})
    boiler = float(bench_raw.get("boilerplate_fraction", 0.70))
    if not (0.0 < boiler < 1.0):
        raise ConfigurationError("bench.boilerplate_fraction must be in (0, 1)")
    baseline_tier = int(bench_raw.get("baseline_tier", 1))
    if baseline_tier not in (0, 1, 2, 3):
        raise ConfigurationError("bench.baseline_tier must be 0-3")
    bench = BenchConfig(
        boilerplate_fraction=boiler,
        baseline_tier=baseline_tier,
        deep_bury_fraction=float(bench_raw.get("deep_bury_fraction", 0.5)),
        deep_bury_min_line=int(bench_raw.get("deep_bury_min_line", 40)),
        workers=int(bench_raw.get("workers", 8)),
    )

    return AppConfig(
        tiers=tiers,
        prices=prices,
        router=router,
        memory=memory,
        compression=compression,
        capabilities=capabilities,
        bench=bench,
        audit_path=raw.get("audit_path"),
        warnings=tuple(warnings),
    )


def default_config() -> AppConfig:
    text = resources.files("contextguard").joinpath("data/default.yaml").read_text("utf-8")
    return _build(yaml.safe_load(text), "default config")


def load_config(path: str | os.PathLike | None = None) -> AppConfig:
    """Load and validate a config file.

    Resolution order: explicit ``path``, the CONTEXTGUARD_CONFIG environment
    variable, then the packaged defaults.
    """
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return default_config()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from None
    return _build(raw, str(path))
