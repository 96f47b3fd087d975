import pytest

from contextguard.endpoints import LocalEndpoint, MockEndpoint
from contextguard.errors import (
    ConfigurationError,
    ContractViolationError,
    DispatchError,
    PayloadTamperError,
)
from contextguard.router import (
    BLOCKED,
    DEFAULT_QUASI_WEIGHT,
    PolicyTable,
    RoutingDecision,
    TierPolicy,
    assess,
    default_policies,
    dispatch,
    payload_digest,
    route,
)


def make_policies(with_tier3=True):
    endpoints = {t: MockEndpoint(name=f"tier{t}") for t in (0, 1, 2)}
    if with_tier3:
        endpoints[3] = LocalEndpoint()
    return default_policies(endpoints), endpoints


# -- assessment ----------------------------------------------------------------

def test_assess_clean_payload():
    a = assess("please summarize this ordinary text")
    assert a.risk_score == 0.0
    assert a.residual_spans == ()
    assert a.quasi_density == 0.0
    assert a.reasons == ()
    assert a.payload_digest == payload_digest(a.payload)


def test_assess_scores_residual_severity():
    a = assess("key sk-" + "G" * 32)  # api_key severity 3
    assert a.risk_score == pytest.approx(3.0)
    assert [s.secret_class.id for s in a.residual_spans] == ["api_key"]
    assert "apikey.sk" in a.reasons


def test_assess_weights_quasi_density():
    text = "Alice Johnson Alice Johnson Alice Johnson"
    a = assess(text)
    assert a.residual_spans == ()
    assert a.quasi_density > 0
    assert a.risk_score == pytest.approx(DEFAULT_QUASI_WEIGHT * a.quasi_density)
    a_flat = assess(text, w_q=0.0)
    assert a_flat.risk_score == 0.0


# -- routing -------------------------------------------------------------------

def test_route_clean_payload_gets_tier0():
    policies, _ = make_policies()
    decision = route(assess("ordinary request with no identifiers"), policies)
    assert decision.assigned_tier == 0
    assert not decision.blocked


def test_route_quasi_density_escalates():
    policies, _ = make_policies()
    # dense quasi-identifiers: too dense for tier 0 (cap 0.0), tier 1 caps at 0.10
    decision = route(assess("Alice Johnson met Bob Stevens and Carol Danvers"), policies)
    assert decision.assigned_tier >= 1


def test_route_residual_secret_forces_tier3():
    policies, _ = make_policies()
    decision = route(assess("key sk-" + "H" * 32), policies)
    assert decision.assigned_tier == 3


def test_route_residual_secret_without_tier3_blocks():
    policies, _ = make_policies(with_tier3=False)
    decision = route(assess("key sk-" + "H" * 32), policies)
    assert decision.blocked
    assert decision.assigned_tier == BLOCKED


def test_route_respects_requested_capability():
    policies, _ = make_policies()
    a = assess("ordinary request")
    assert route(a, policies, requested_capability=2).assigned_tier == 2
    assert route(a, policies, requested_capability=3).assigned_tier == 3
    with pytest.raises(ConfigurationError):
        route(a, policies, requested_capability=4)


def test_route_monotone_more_risk_never_lower_tier():
    policies, _ = make_policies()
    texts = [
        "ordinary request with no identifiers",
        "meeting Alice Johnson tomorrow",
        "Alice Johnson met Bob Stevens and Carol Danvers",
        "key sk-" + "I" * 32,
        "key sk-" + "I" * 32 + " card 4111 1111 1111 1111",
    ]
    scored = [(assess(t).risk_score, route(assess(t), policies).assigned_tier)
              for t in texts]
    order = {0: 0, 1: 1, 2: 2, 3: 3, BLOCKED: 4}
    for (risk_a, tier_a), (risk_b, tier_b) in zip(scored, scored[1:]):
        assert risk_a <= risk_b
        assert order[tier_a] <= order[tier_b]


def test_decision_structurally_rejects_residual_below_tier3():
    a = assess("key sk-" + "J" * 32)
    with pytest.raises(ContractViolationError):
        RoutingDecision(
            risk_score=a.risk_score,
            assigned_tier=1,
            reasons=a.reasons,
            residual_spans=a.residual_spans,
            payload_digest=a.payload_digest,
        )


# -- policy table validation -----------------------------------------------------

def test_policy_table_requires_all_tiers_once():
    rows = [TierPolicy(t, 0, 1.0, None, f"tier{t}") for t in (0, 1, 2)]
    with pytest.raises(ConfigurationError):
        PolicyTable(rows)
    with pytest.raises(ConfigurationError):
        PolicyTable(rows + [TierPolicy(2, 0, 1.0, None, "dup")]
                    + [TierPolicy(3, 3, 1.0, None, "tier3")])


def test_policy_table_rejects_non_monotone_thresholds():
    def rows(sev, dens):
        return [TierPolicy(t, sev[t], dens[t], None, f"tier{t}") for t in range(4)]

    with pytest.raises(ConfigurationError):
        PolicyTable(rows({0: 1, 1: 0, 2: 1, 3: 3}, {0: 0.0, 1: 0.1, 2: 1.0, 3: 1.0}))
    with pytest.raises(ConfigurationError):
        PolicyTable(rows({0: 0, 1: 0, 2: 0, 3: 3}, {0: 0.5, 1: 0.1, 2: 1.0, 3: 1.0}))


def test_tier3_policy_requires_single_tenant_endpoint():
    shared = MockEndpoint(name="shared", single_tenant=False)
    with pytest.raises(ConfigurationError):
        TierPolicy(3, 3, 1.0, shared, "tier3")
    TierPolicy(3, 3, 1.0, LocalEndpoint(), "tier3")  # fine


# -- dispatch ---------------------------------------------------------------------

def test_dispatch_happy_path():
    policies, endpoints = make_policies()
    payload = "ordinary request"
    decision = route(assess(payload), policies)
    outcome = dispatch(decision, payload, policies)
    assert outcome.tier == decision.assigned_tier
    assert outcome.attempts == 1
    assert outcome.content
    assert len(endpoints[outcome.tier].captures) == 1


def test_dispatch_rejects_blocked_decision():
    policies, _ = make_policies(with_tier3=False)
    decision = route(assess("key sk-" + "K" * 32), policies)
    assert decision.blocked
    with pytest.raises(ContractViolationError):
        dispatch(decision, "key sk-" + "K" * 32, policies)


def test_dispatch_detects_payload_tamper():
    policies, _ = make_policies()
    decision = route(assess("original payload"), policies)
    with pytest.raises(PayloadTamperError):
        dispatch(decision, "mutated payload", policies)


def test_dispatch_retries_then_succeeds():
    endpoints = {t: MockEndpoint(name=f"tier{t}") for t in (1, 2)}
    endpoints[0] = MockEndpoint(name="tier0", fail_times=2)
    endpoints[3] = LocalEndpoint()
    policies = default_policies(endpoints)
    payload = "ordinary request"
    outcome = dispatch(route(assess(payload), policies), payload, policies, retries=2)
    assert outcome.tier == 0
    assert outcome.attempts == 3


def test_dispatch_exhausted_retries_raise_without_tier_change():
    endpoints = {t: MockEndpoint(name=f"tier{t}") for t in (1, 2)}
    endpoints[0] = MockEndpoint(name="tier0", fail_times=99)
    endpoints[3] = LocalEndpoint()
    policies = default_policies(endpoints)
    payload = "ordinary request"
    with pytest.raises(DispatchError):
        dispatch(route(assess(payload), policies), payload, policies, retries=1)
    # never silently downgraded to another tier
    assert endpoints[1].captures == []
    assert endpoints[2].captures == []
