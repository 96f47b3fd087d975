"""Residual-risk assessment and trust-tier routing.

Tiers form a trust hierarchy: 0 untrusted/free, 1 commercial API, 2
jurisdiction-pinned, 3 on-premise single-tenant.  The gate is binary for
detected secrets: a payload carrying any residual secret span can only go to
tier 3, or nowhere.  Quasi-identifier density is a softer signal thresholded
per tier.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

from .errors import (
    ConfigurationError,
    ContractViolationError,
    DispatchError,
    EndpointError,
    PayloadTamperError,
)
from .scanner import Ruleset, SecretSpan, Typology, scan, token_density

BLOCKED = "Blocked"

DEFAULT_QUASI_WEIGHT = 2.0
DEFAULT_RETRIES = 2

TIER_NAMES = {
    0: "untrusted",
    1: "commercial",
    2: "geo-pinned",
    3: "on-prem",
}


@dataclass(frozen=True)
class TierPolicy:
    tier: int
    max_severity_allowed: int
    max_quasi_density: float
    endpoint: object | None  # client with .complete(), or None if unconfigured
    price_ref: str

    def __post_init__(self):
        if self.tier not in (0, 1, 2, 3):
            raise ConfigurationError(f"tier must be 0-3, got {self.tier}")
        if not (0.0 <= self.max_quasi_density <= 1.0):
            raise ConfigurationError("max_quasi_density must be in [0, 1]")
        if self.tier == 3 and self.endpoint is not None:
            if not getattr(self.endpoint, "single_tenant", False):
                raise ConfigurationError(
                    "tier 3 endpoint must be local or flagged single_tenant"
                )


class PolicyTable:
    """Exactly one policy per tier 0-3, with monotone thresholds.

    Monotone thresholds (later tiers never stricter) are what make the
    routing monotonicity property hold for any shipped config, so they are
    validated here rather than assumed.
    """

    def __init__(self, policies):
        by_tier = {}
        for p in policies:
            if p.tier in by_tier:
                raise ConfigurationError(f"duplicate policy for tier {p.tier}")
            by_tier[p.tier] = p
        missing = [t for t in (0, 1, 2, 3) if t not in by_tier]
        if missing:
            raise ConfigurationError(f"policy table missing tiers {missing}")
        ordered = [by_tier[t] for t in (0, 1, 2, 3)]
        for lower, higher in zip(ordered, ordered[1:]):
            if higher.max_severity_allowed < lower.max_severity_allowed:
                raise ConfigurationError(
                    f"max_severity_allowed decreases from tier {lower.tier} to {higher.tier}"
                )
            if higher.max_quasi_density < lower.max_quasi_density:
                raise ConfigurationError(
                    f"max_quasi_density decreases from tier {lower.tier} to {higher.tier}"
                )
        self._by_tier = by_tier

    def for_tier(self, tier: int) -> TierPolicy:
        return self._by_tier[tier]

    def __iter__(self):
        return iter(self._by_tier[t] for t in (0, 1, 2, 3))


@dataclass(frozen=True)
class RiskAssessment:
    payload: str
    payload_digest: str  # sha256 hex of the UTF-8 payload
    risk_score: float
    residual_spans: tuple[SecretSpan, ...]
    quasi_spans: tuple[SecretSpan, ...]
    quasi_density: float
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class RoutingDecision:
    risk_score: float
    assigned_tier: object  # 0-3 or BLOCKED
    reasons: tuple[str, ...]
    residual_spans: tuple[SecretSpan, ...]
    payload_digest: str

    def __post_init__(self):
        if self.residual_spans and self.assigned_tier not in (3, BLOCKED):
            raise ContractViolationError(
                "payload with residual secrets routed below tier 3"
            )

    @property
    def blocked(self) -> bool:
        return self.assigned_tier == BLOCKED


def payload_digest(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def assess(payload: str, ruleset: Ruleset | None = None,
           w_q: float = DEFAULT_QUASI_WEIGHT) -> RiskAssessment:
    """Rescan the final outbound candidate and score its residual risk.

    risk = sum of residual span severities + w_q * quasi-identifier token
    density.  Deterministic.
    """
    report = scan(payload, ruleset)
    residual = tuple(
        s for s in report.spans
        if s.secret_class.typology is not Typology.QUASI_IDENTIFIER
    )
    quasi = tuple(
        s for s in report.spans
        if s.secret_class.typology is Typology.QUASI_IDENTIFIER
    )
    density = token_density(payload, quasi)
    score = sum(s.secret_class.severity for s in residual) + w_q * density
    reasons = tuple(sorted({s.detector_rule for s in residual}
                           | ({s.detector_rule for s in quasi} if density > 0 else set())))
    return RiskAssessment(
        payload=payload,
        payload_digest=payload_digest(payload),
        risk_score=score,
        residual_spans=residual,
        quasi_spans=quasi,
        quasi_density=density,
        reasons=reasons,
    )


def route(assessment: RiskAssessment, policies: PolicyTable,
          requested_capability: int = 0) -> RoutingDecision:
    """Assign the lowest admissible tier, or block.

    ``requested_capability`` is the minimum tier the request demands (the
    gateway resolves capability names to tiers from config).  Residual
    secrets restrict the candidate set to tier 3 regardless of policy
    thresholds; if tier 3 has no endpoint the decision is Blocked with zero
    outbound bytes.
    """
    if not isinstance(policies, PolicyTable):
        policies = PolicyTable(policies)
    if requested_capability not in (0, 1, 2, 3):
        raise ConfigurationError(
            f"requested capability tier must be 0-3, got {requested_capability}"
        )

    candidates = [3] if assessment.residual_spans else [0, 1, 2, 3]
    candidates = [t for t in candidates if t >= requested_capability]

    for tier in candidates:
        policy = policies.for_tier(tier)
        if policy.endpoint is None:
            continue
        if any(s.secret_class.severity > policy.max_severity_allowed
               for s in assessment.residual_spans):
            continue
        if assessment.quasi_density > policy.max_quasi_density:
            continue
        return RoutingDecision(
            risk_score=assessment.risk_score,
            assigned_tier=tier,
            reasons=assessment.reasons,
            residual_spans=assessment.residual_spans,
            payload_digest=assessment.payload_digest,
        )
    return RoutingDecision(
        risk_score=assessment.risk_score,
        assigned_tier=BLOCKED,
        reasons=assessment.reasons,
        residual_spans=assessment.residual_spans,
        payload_digest=assessment.payload_digest,
    )


@dataclass(frozen=True)
class DispatchOutcome:
    content: str
    prompt_tokens: int
    completion_tokens: int
    tier: int
    price_ref: str
    attempts: int
    elapsed_s: float


def dispatch(decision: RoutingDecision, payload: str, policies: PolicyTable,
             retries: int = DEFAULT_RETRIES, max_tokens: int = 512,
             messages: list | None = None) -> DispatchOutcome:
    """Send the decided payload to its tier's endpoint.

    The payload digest must match the one captured at decision time; a
    mismatch means the payload mutated after routing and is a hard error.
    Transport failures are retried up to ``retries`` extra attempts, then
    escalate.  The tier never changes here.
    """
    if decision.blocked:
        raise ContractViolationError("cannot dispatch a Blocked decision")
    if payload_digest(payload) != decision.payload_digest:
        raise PayloadTamperError(
            "payload digest changed between route and dispatch"
        )
    if not isinstance(policies, PolicyTable):
        policies = PolicyTable(policies)
    policy = policies.for_tier(decision.assigned_tier)
    if policy.endpoint is None:
        raise ConfigurationError(f"tier {policy.tier} has no endpoint configured")

    wire_messages = messages if messages is not None else [
        {"role": "user", "content": payload}
    ]
    start = time.monotonic()
    last_error: EndpointError | None = None
    for attempt in range(1, retries + 2):
        try:
            response = policy.endpoint.complete(wire_messages, max_tokens=max_tokens)
            return DispatchOutcome(
                content=response.content,
                prompt_tokens=response.prompt_tokens,
                completion_tokens=response.completion_tokens,
                tier=decision.assigned_tier,
                price_ref=policy.price_ref,
                attempts=attempt,
                elapsed_s=time.monotonic() - start,
            )
        except EndpointError as exc:
            last_error = exc
    raise DispatchError(
        f"tier {decision.assigned_tier} endpoint failed after {retries + 1} attempts: {last_error}"
    )


def default_policies(endpoints: dict[int, object],
                     price_refs: dict[int, str] | None = None) -> PolicyTable:
    """Shipped admission defaults: tiers 0-2 admit no detected secrets,
    quasi-density caps 0.0 / 0.10 / 1.0; tier 3 admits severity <= 3."""
    price_refs = price_refs or {0: "tier0", 1: "tier1", 2: "tier2", 3: "tier3"}
    caps = {0: (0, 0.0), 1: (0, 0.10), 2: (0, 1.0), 3: (3, 1.0)}
    return PolicyTable([
        TierPolicy(
            tier=t,
            max_severity_allowed=caps[t][0],
            max_quasi_density=caps[t][1],
            endpoint=endpoints.get(t),
            price_ref=price_refs[t],
        )
        for t in (0, 1, 2, 3)
    ])
