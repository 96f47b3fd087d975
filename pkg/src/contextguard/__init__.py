"""contextguard: a local privacy guard between your prompts and LLM APIs.

Scans outbound text for secrets, swaps them for vault placeholders, prunes
and splits the prompt, routes each piece to the lowest trust tier its
residual risk admits, and restores the secrets only in the local response.
"""

from .compressor import (
    Backend,
    CompressionPolicy,
    CompressionResult,
    compress_abstractive,
    compress_extractive,
    intent_keywords,
    keyword_survival,
)
from .config import AppConfig, load_config
from .costmodel import (
    TOKEN_RULE,
    CostLedger,
    LedgerRow,
    PriceTable,
    TierPrice,
    estimate_tokens,
    parsimony,
    price,
)
from .decomposer import (
    ExecutionResult,
    Locality,
    SubTask,
    SubTaskPlan,
    TaskKind,
    TemplateRegistry,
    execute,
    plan,
)
from .endpoints import EndpointResponse, HttpEndpoint, LocalEndpoint, MockEndpoint
from .errors import (
    BudgetInfeasibleError,
    CompressionBackendError,
    ConfigurationError,
    ContextGuardError,
    ContractViolationError,
    DispatchError,
    EncodingError,
    EndpointError,
    PayloadTamperError,
    RoutingBlockedError,
)
from .gateway import GuardRequest, GuardResponse, GuardService, create_app
from .memory import MemoryEntry, Role, SessionStack
from .router import (
    BLOCKED,
    PolicyTable,
    RiskAssessment,
    RoutingDecision,
    TierPolicy,
    assess,
    dispatch,
    route,
)
from .scanner import (
    Ruleset,
    ScanReport,
    SecretClass,
    SecretSpan,
    Typology,
    scan,
    scan_residual,
)
from .vault import (
    RehydrationResult,
    Vault,
    VaultEntry,
    VaultId,
    VaultKind,
    escape_sigils,
    redact,
    rehydrate,
    unescape_sigils,
)

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "BLOCKED",
    "Backend",
    "BudgetInfeasibleError",
    "CompressionBackendError",
    "CompressionPolicy",
    "CompressionResult",
    "ConfigurationError",
    "ContextGuardError",
    "ContractViolationError",
    "CostLedger",
    "DispatchError",
    "EncodingError",
    "EndpointError",
    "EndpointResponse",
    "ExecutionResult",
    "GuardRequest",
    "GuardResponse",
    "GuardService",
    "HttpEndpoint",
    "LedgerRow",
    "LocalEndpoint",
    "Locality",
    "MemoryEntry",
    "MockEndpoint",
    "PayloadTamperError",
    "PolicyTable",
    "PriceTable",
    "RehydrationResult",
    "RiskAssessment",
    "Role",
    "RoutingBlockedError",
    "RoutingDecision",
    "Ruleset",
    "ScanReport",
    "SecretClass",
    "SecretSpan",
    "SessionStack",
    "SubTask",
    "SubTaskPlan",
    "TOKEN_RULE",
    "TaskKind",
    "TemplateRegistry",
    "TierPolicy",
    "TierPrice",
    "Typology",
    "Vault",
    "VaultEntry",
    "VaultId",
    "VaultKind",
    "assess",
    "compress_abstractive",
    "compress_extractive",
    "create_app",
    "dispatch",
    "escape_sigils",
    "estimate_tokens",
    "execute",
    "intent_keywords",
    "keyword_survival",
    "load_config",
    "parsimony",
    "plan",
    "price",
    "redact",
    "rehydrate",
    "route",
    "scan",
    "scan_residual",
    "unescape_sigils",
]
