"""HTTP gateway: the end-to-end guard pipeline over per-session state.

Request path, in fixed order: sigil escaping, memory bootstrap, scan,
redact, plan, then per sub-task compress / assess / route / dispatch,
assembly, rehydration, sigil unescaping, memory push (with auto-compaction),
ledger append, audit append.

Cost accounting: baseline counts the raw prompt plus bootstrapped context as
if sent monolithically to the configured baseline tier.  Guarded counts what
actually went out; ``guarded_input_tokens`` sums cloud-billed (tier 0-2)
input only, while per-dispatch costs use each tier's own price ref.
"""

from __future__ import annotations

import argparse
import json
import threading
import time
from dataclasses import dataclass, field

from .compressor import compress_extractive
from .config import AppConfig, ENV_VAR, load_config
from .costmodel import CostLedger, LedgerRow, estimate_tokens, parsimony, price
from .decomposer import (
    TemplateRegistry,
    default_local_executor,
    execute,
    plan as plan_tasks,
)
from .endpoints import HttpEndpoint, LocalEndpoint, MockEndpoint
from .errors import (
    BudgetInfeasibleError,
    CompressionBackendError,
    ConfigurationError,
    ContractViolationError,
    ContextGuardError,
    DispatchError,
    EncodingError,
    EndpointError,
    PayloadTamperError,
    RoutingBlockedError,
)
from .memory import Role, SessionStack, truncate_to_tokens
from .router import (
    BLOCKED,
    PolicyTable,
    RoutingDecision,
    TierPolicy,
    assess,
    dispatch,
    route,
)
from .scanner import Ruleset, scan
from .vault import (
    Vault,
    VaultKind,
    escape_sigils,
    redact,
    rehydrate,
    unescape_sigils,
)

PROFILE_HINTS = ("Lazy", "Expert")


@dataclass(frozen=True)
class GuardRequest:
    session_id: str
    prompt: str
    profile_hint: str | None = None
    requested_capability: str | None = None


@dataclass(frozen=True)
class GuardResponse:
    response: str
    decision: dict
    ledger_row: dict
    plan_summary: dict
    warnings: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "response": self.response,
            "decision": self.decision,
            "ledger_row": self.ledger_row,
            "plan_summary": self.plan_summary,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class AuditRecord:
    """Dispatch-level audit line: digests and counts, never content."""

    timestamp: float
    session_id: str
    event: str  # dispatch | blocked | request
    payload_digest: str
    tier: object
    risk_score: float
    reasons: tuple[str, ...]
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def as_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "event": self.event,
            "payload_digest": self.payload_digest,
            "tier": self.tier,
            "risk_score": self.risk_score,
            "reasons": list(self.reasons),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


class AuditLog:
    """Append-only audit sink: in memory, optionally mirrored to JSONL."""

    def __init__(self, path=None):
        self.path = path
        self.records: list[AuditRecord] = []
        self._lock = threading.Lock()

    def append(self, record: AuditRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.as_dict(), ensure_ascii=False) + "\n")


@dataclass
class SessionState:
    stack: SessionStack
    personal: Vault
    institutional: Vault
    lock: threading.Lock = field(default_factory=threading.Lock)


def build_endpoint(spec, tier: int):
    if spec.endpoint is None:
        return None
    if spec.endpoint == "local":
        return LocalEndpoint(model=spec.model)
    if spec.endpoint == "mock":
        return MockEndpoint(name=f"tier{tier}", single_tenant=spec.single_tenant)
    return HttpEndpoint(
        spec.endpoint,
        model=spec.model,
        max_concurrency=spec.max_concurrency,
        single_tenant=spec.single_tenant,
    )


class GuardService:
    """The pipeline with its per-session state, policies, and sinks.

    ``endpoints`` may override the config-built clients (tests and the
    benchmark inject capture mocks this way).
    """

    def __init__(self, config: AppConfig | None = None,
                 endpoints: dict[int, object] | None = None,
                 ruleset: Ruleset | None = None,
                 registry: TemplateRegistry | None = None,
                 compressor=None):
        self.config = config or load_config()
        self.ruleset = ruleset or Ruleset.default()
        self.registry = registry or TemplateRegistry.default()
        self.compressor = compressor or compress_extractive
        self.endpoints = endpoints if endpoints is not None else {
            spec.tier: build_endpoint(spec, spec.tier) for spec in self.config.tiers
        }
        self.policies = PolicyTable([
            TierPolicy(
                tier=spec.tier,
                max_severity_allowed=spec.max_severity_allowed,
                max_quasi_density=spec.max_quasi_density,
                endpoint=self.endpoints.get(spec.tier),
                price_ref=spec.price_ref,
            )
            for spec in self.config.tiers
        ])
        self.ledger = CostLedger()
        self.audit = AuditLog(self.config.audit_path)
        self._sessions: dict[str, SessionState] = {}
        self._sessions_lock = threading.Lock()

    # -- sessions ------------------------------------------------------------

    def _entry_cap(self) -> int:
        mem = self.config.memory
        cap = (mem.budget_tokens - self.config.compression.max_digest_tokens)
        return max(1, cap // mem.recent_window)

    def session(self, session_id: str) -> SessionState:
        with self._sessions_lock:
            state = self._sessions.get(session_id)
            if state is None:
                personal = Vault(VaultKind.PERSONAL, session_id)
                institutional = Vault(VaultKind.INSTITUTIONAL, session_id)

                def sanitizer(text: str) -> str:
                    report = scan(text, self.ruleset)
                    return redact(text, report.spans, personal, institutional)

                stack = SessionStack(
                    session_id=session_id,
                    budget_tokens=self.config.memory.budget_tokens,
                    recent_window=self.config.memory.recent_window,
                    compression_policy=self.config.compression,
                    sanitizer=sanitizer,
                )
                state = SessionState(stack, personal, institutional)
                self._sessions[session_id] = state
            return state

    def known_session(self, session_id: str) -> SessionState | None:
        with self._sessions_lock:
            return self._sessions.get(session_id)

    # -- request path --------------------------------------------------------

    def _validate(self, request: GuardRequest) -> int:
        if not request.session_id:
            raise ContractViolationError("session_id must be non-empty")
        try:
            request.prompt.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise EncodingError(f"prompt is not valid UTF-8: {exc}") from None
        if request.profile_hint is not None and request.profile_hint not in PROFILE_HINTS:
            raise ContractViolationError(
                f"profile_hint must be one of {PROFILE_HINTS}"
            )
        if request.requested_capability is None:
            return 0
        if request.requested_capability not in self.config.capabilities:
            raise ContractViolationError(
                f"unknown capability {request.requested_capability!r}"
            )
        return self.config.capabilities[request.requested_capability]

    def handle(self, request: GuardRequest) -> GuardResponse:
        try:
            min_tier = self._validate(request)
        except ContextGuardError as exc:
            exc.cg_stage = "validate"
            raise
        state = self.session(request.session_id)
        warnings: list[str] = list(self.config.warnings)
        with state.lock:
            return self._pipeline(request, min_tier, state, warnings)

    def _pipeline(self, request: GuardRequest, min_tier: int,
                  state: SessionState, warnings: list[str]) -> GuardResponse:
        stage = "escape"
        try:
            escaped = escape_sigils(request.prompt)

            stage = "bootstrap"
            context = state.stack.bootstrap()

            stage = "scan"
            report = scan(escaped, self.ruleset)

            stage = "redact"
            redacted_prompt = redact(
                escaped, report.spans, state.personal, state.institutional
            )

            stage = "plan"
            task_plan = plan_tasks(
                redacted_prompt, context,
                registry=self.registry,
                compression_policy=self.config.compression,
                default_tier=max(1, min_tier),
            )

            stage = "dispatch"
            decisions: list[RoutingDecision] = []
            blocked: list[RoutingDecision] = []
            usage: list = []

            def make_dispatcher(tier: int):
                def run(task, payload: str) -> str:
                    try:
                        compressed = self.compressor(payload, self.config.compression)
                    except CompressionBackendError as exc:
                        compressed = exc.fallback
                        warnings.append(f"compression fell back to extractive: {exc}")
                    text = compressed.output
                    assessment = assess(text, self.ruleset, self.config.router.w_q)
                    decision = route(
                        assessment, self.policies,
                        requested_capability=max(min_tier, tier),
                    )
                    if decision.blocked:
                        blocked.append(decision)
                        self.audit.append(AuditRecord(
                            timestamp=time.time(),
                            session_id=request.session_id,
                            event="blocked",
                            payload_digest=decision.payload_digest,
                            tier=BLOCKED,
                            risk_score=decision.risk_score,
                            reasons=decision.reasons,
                        ))
                        raise RoutingBlockedError(
                            "payload blocked by outbound gate", decision=decision
                        )
                    outcome = dispatch(
                        decision, text, self.policies,
                        retries=self.config.router.retries,
                    )
                    decisions.append(decision)
                    usage.append(outcome)
                    self.audit.append(AuditRecord(
                        timestamp=time.time(),
                        session_id=request.session_id,
                        event="dispatch",
                        payload_digest=decision.payload_digest,
                        tier=outcome.tier,
                        risk_score=decision.risk_score,
                        reasons=decision.reasons,
                        prompt_tokens=outcome.prompt_tokens,
                        completion_tokens=outcome.completion_tokens,
                    ))
                    return outcome.content
                return run

            dispatchers = {t: make_dispatcher(t) for t in (0, 1, 2, 3)}
            result = execute(task_plan, default_local_executor, dispatchers)

            if blocked:
                raise RoutingBlockedError(
                    "request blocked: payload cannot leave trust boundary",
                    decision=blocked[0],
                )
            failed = [t for t in result.transcripts if t.status.startswith("Failed")]
            if failed:
                raise DispatchError(
                    f"sub-task {failed[0].index} failed: {failed[0].status}"
                )

            stage = "assemble"
            assembled = result.response

            stage = "rehydrate"
            r_personal = rehydrate(assembled, state.personal)
            r_both = rehydrate(r_personal.text, state.institutional)
            final_text = unescape_sigils(r_both.text)
            warnings.extend(r_personal.warnings)
            warnings.extend(r_both.warnings)

            stage = "memory"
            cap = self._entry_cap()
            state.stack.append(
                Role.USER, truncate_to_tokens(redacted_prompt, cap, keep="head"))
            state.stack.append(
                Role.ASSISTANT, truncate_to_tokens(assembled, cap, keep="head"))

            stage = "ledger"
            baseline_in = estimate_tokens(request.prompt) + estimate_tokens(context)
            out_tokens = sum(o.completion_tokens for o in usage)
            guarded_in = sum(o.prompt_tokens for o in usage if o.tier in (0, 1, 2))
            baseline_ref = self.config.tier_spec(self.config.bench.baseline_tier).price_ref
            baseline_cost = price(baseline_in, out_tokens, baseline_ref, self.config.prices)
            guarded_cost = sum(
                price(o.prompt_tokens, o.completion_tokens, o.price_ref, self.config.prices)
                for o in usage
            )
            row = LedgerRow(
                baseline_input_tokens=baseline_in,
                guarded_input_tokens=guarded_in,
                output_tokens=out_tokens,
                baseline_cost=baseline_cost,
                guarded_cost=guarded_cost,
                quadrant=request.profile_hint or "",
            )
            self.ledger.append(row)

            stage = "audit"
            final_decision = decisions[-1] if decisions else None
            self.audit.append(AuditRecord(
                timestamp=time.time(),
                session_id=request.session_id,
                event="request",
                payload_digest=final_decision.payload_digest if final_decision else "",
                tier=final_decision.assigned_tier if final_decision else "Local",
                risk_score=final_decision.risk_score if final_decision else 0.0,
                reasons=final_decision.reasons if final_decision else (),
                prompt_tokens=guarded_in,
                completion_tokens=out_tokens,
            ))

            decision_summary = {
                "assigned_tier": final_decision.assigned_tier if final_decision else "Local",
                "risk_score": final_decision.risk_score if final_decision else 0.0,
                "reasons": list(final_decision.reasons) if final_decision else [],
            }
            plan_summary = {
                "template": task_plan.template,
                "tasks": len(task_plan.tasks),
                "localities": [str(t.locality) for t in task_plan.tasks],
                "cloud_payload_tokens": task_plan.cloud_payload_tokens,
            }
            return GuardResponse(
                response=final_text,
                decision=decision_summary,
                ledger_row=row.as_record(),
                plan_summary=plan_summary,
                warnings=tuple(warnings),
            )
        except ContextGuardError as exc:
            if not hasattr(exc, "cg_stage"):
                exc.cg_stage = stage
            raise

    # -- aggregates ----------------------------------------------------------

    def metrics(self) -> dict:
        rows = self.ledger.rows
        aggregates = {
            "requests": len(rows),
            "baseline_cost": sum(r.baseline_cost for r in rows),
            "guarded_cost": sum(r.guarded_cost for r in rows),
            "delta": sum(r.delta for r in rows),
            "blended_reduction": None,
        }
        if rows:
            aggregates["blended_reduction"] = parsimony(rows).blended
        return aggregates


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------

_STATUS_BY_ERROR = (
    (RoutingBlockedError, 403),
    (PayloadTamperError, 500),
    (BudgetInfeasibleError, 500),
    (ContractViolationError, 400),
    (EncodingError, 400),
    (ConfigurationError, 500),
    (DispatchError, 502),
    (EndpointError, 502),
)


def _error_payload(exc: Exception) -> tuple[int, dict]:
    status = 500
    for cls, code in _STATUS_BY_ERROR:
        if isinstance(exc, cls):
            status = code
            break
    body = {
        "error": {
            "stage": getattr(exc, "cg_stage", "unknown"),
            "type": type(exc).__name__,
            "message": str(exc),
        }
    }
    decision = getattr(exc, "decision", None)
    if decision is not None:
        body["error"]["decision"] = {
            "assigned_tier": decision.assigned_tier,
            "risk_score": decision.risk_score,
            "reasons": list(decision.reasons),
        }
    return status, body


def create_app(service: GuardService | AppConfig | None = None):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    if service is None:
        service = GuardService()
    elif isinstance(service, AppConfig):
        service = GuardService(service)
    app = FastAPI(title="contextguard", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.exception_handler(ContextGuardError)
    async def _handle_error(_request: Request, exc: ContextGuardError):
        status, body = _error_payload(exc)
        return JSONResponse(status_code=status, content=body)

    @app.post("/v1/guard/complete")
    def complete(body: dict):
        if not isinstance(body, dict):
            raise ContractViolationError("request body must be a JSON object")
        unknown = set(body) - {"session_id", "prompt", "profile_hint",
                               "requested_capability"}
        if unknown:
            raise ContractViolationError(f"unknown request fields: {sorted(unknown)}")
        try:
            request = GuardRequest(
                session_id=str(body["session_id"]),
                prompt=body["prompt"],
                profile_hint=body.get("profile_hint"),
                requested_capability=body.get("requested_capability"),
            )
        except KeyError as exc:
            raise ContractViolationError(f"missing request field {exc}") from None
        if not isinstance(request.prompt, str):
            raise ContractViolationError("prompt must be a string")
        return service.handle(request).as_dict()

    @app.get("/v1/sessions/{session_id}/memory")
    def session_memory(session_id: str):
        state = service.known_session(session_id)
        if state is None:
            return JSONResponse(
                status_code=404,
                content={"error": {"stage": "session", "type": "NotFound",
                                   "message": f"unknown session {session_id!r}"}},
            )
        return {
            "session_id": session_id,
            "entries": [
                {
                    "turn": e.turn,
                    "role": e.role.value,
                    "content": e.content,
                    "token_estimate": e.token_estimate,
                    "compacted_from": list(e.compacted_from),
                }
                for e in state.stack.entries()
            ],
        }

    @app.get("/v1/metrics")
    def metrics():
        return service.metrics()

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contextguard-gateway",
        description="Local privacy-guard gateway for LLM traffic.",
    )
    parser.add_argument("--config", "-c", default=None,
                        help=f"config file path (or set {ENV_VAR})")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8787)
    args = parser.parse_args(argv)

    import uvicorn

    config = load_config(args.config)
    for warning in config.warnings:
        print(f"warning: {warning}")
    app = create_app(GuardService(config))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
