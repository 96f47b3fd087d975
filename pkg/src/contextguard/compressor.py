"""Prompt compression: deterministic extractive engine plus an optional
external summarization backend.

The extractive engine is pure deletion: every output line is an input line
and relative order is preserved.  It keeps marked task lines and a head/tail
window of content lines, and drops duplicates, blank lines, timestamp-only
lines, separator runs, and low-value log noise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .costmodel import estimate_tokens
from .errors import CompressionBackendError, ConfigurationError, EndpointError
from .scanner import Ruleset, Typology, scan


class Backend(str, Enum):
    EXTRACTIVE = "Extractive"
    EXTERNAL_SLM = "ExternalSLM"
    SKIPPED = "Skipped"


@dataclass(frozen=True)
class CompressionResult:
    output: str
    input_tokens: int
    output_tokens: int
    ratio_k: float
    backend: Backend

    def __post_init__(self):
        if not (0.0 < self.ratio_k <= 1.0):
            raise ConfigurationError(f"ratio_k {self.ratio_k} outside (0, 1]")
        if self.backend is not Backend.SKIPPED and self.ratio_k >= 1.0:
            raise ConfigurationError("non-skipped compression must reduce tokens")

    @property
    def reduction(self) -> float:
        return 1.0 - self.ratio_k


@dataclass(frozen=True)
class CompressionPolicy:
    min_tokens_to_compress: int = 64
    keep_markers: tuple[str, ...] = ("TASK:", "QUESTION:", "INSTRUCTION:")
    head_lines: int = 30
    tail_lines: int = 15
    max_digest_tokens: int = 200

    def __post_init__(self):
        if self.min_tokens_to_compress < 1:
            raise ConfigurationError("min_tokens_to_compress must be >= 1")
        if self.head_lines < 0 or self.tail_lines < 0:
            raise ConfigurationError("head/tail line counts must be >= 0")
        if self.max_digest_tokens < 1:
            raise ConfigurationError("max_digest_tokens must be >= 1")


_TIMESTAMP_ONLY = re.compile(
    r"\[?\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?Z?\]?"
)
_LOG_NOISE = re.compile(r"\b(?:INFO|DEBUG|TRACE)\b")
_SEPARATOR_CHARS = set("=-_*#~")


def _is_separator_run(stripped: str) -> bool:
    return len(stripped) >= 3 and set(stripped) <= _SEPARATOR_CHARS


def _is_marker(stripped: str, policy: CompressionPolicy) -> bool:
    return any(stripped.startswith(m) for m in policy.keep_markers)


def _ratio(output_tokens: int, input_tokens: int) -> float:
    return output_tokens / input_tokens if input_tokens else 1.0


def _skipped(text: str, tokens: int) -> CompressionResult:
    return CompressionResult(text, tokens, tokens, 1.0, Backend.SKIPPED)


def compress_extractive(text: str, policy: CompressionPolicy | None = None) -> CompressionResult:
    """Deterministic line-drop compression.

    Inputs below ``min_tokens_to_compress`` and inputs where nothing can be
    dropped come back unchanged with backend Skipped.
    """
    policy = policy or CompressionPolicy()
    input_tokens = estimate_tokens(text)
    if input_tokens < policy.min_tokens_to_compress:
        return _skipped(text, input_tokens)

    lines = text.split("\n")
    markers: list[int] = []
    content: list[int] = []
    seen: set[str] = set()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if _is_marker(stripped, policy):
            markers.append(i)
            continue
        if not stripped:
            continue
        if _TIMESTAMP_ONLY.fullmatch(stripped):
            continue
        if _is_separator_run(stripped):
            continue
        if _LOG_NOISE.search(stripped):
            continue
        if stripped in seen:
            continue
        seen.add(stripped)
        content.append(i)

    if len(content) > policy.head_lines + policy.tail_lines:
        head = content[: policy.head_lines]
        tail = content[len(content) - policy.tail_lines:]
        content = head + tail
    keep = sorted(set(markers) | set(content))
    output = "\n".join(lines[i] for i in keep)

    output_tokens = estimate_tokens(output)
    # Deleting every line leaves nothing worth forwarding; skip instead.
    if output_tokens == 0 or output_tokens >= input_tokens:
        return _skipped(text, input_tokens)
    return CompressionResult(
        output, input_tokens, output_tokens,
        _ratio(output_tokens, input_tokens), Backend.EXTRACTIVE,
    )


ABSTRACTIVE_SYSTEM_INSTRUCTION = (
    "Rewrite the user's text as a shorter version that preserves every task, "
    "question, and instruction it contains, quoting them word for word where "
    "possible. Keep every token of the form [[SECRET:...]] exactly as written. "
    "Drop repeated lines, logs, and boilerplate. Reply with the rewritten text "
    "only; it must be shorter than the original."
)


def compress_abstractive(text: str, endpoint, policy: CompressionPolicy | None = None,
                         ruleset: Ruleset | None = None) -> CompressionResult:
    """Compress via an external model endpoint, with a hard extractive net.

    The endpoint must expose ``complete(messages, max_tokens)`` returning an
    object with a ``content`` attribute.  Falls back to the extractive engine
    when the model fails to reduce the text or when rescanning its output
    finds a secret the input did not carry.  Transport errors raise
    CompressionBackendError with the extractive result attached as
    ``fallback``.  Concurrency limits live on the endpoint itself.
    """
    policy = policy or CompressionPolicy()
    input_tokens = estimate_tokens(text)
    if input_tokens < policy.min_tokens_to_compress:
        return _skipped(text, input_tokens)

    messages = [
        {"role": "system", "content": ABSTRACTIVE_SYSTEM_INSTRUCTION},
        {"role": "user", "content": text},
    ]
    max_tokens = max(1, min(policy.max_digest_tokens, input_tokens - 1))
    try:
        response = endpoint.complete(messages, max_tokens=max_tokens)
    except EndpointError as exc:
        raise CompressionBackendError(
            f"abstractive backend failed: {exc}",
            fallback=compress_extractive(text, policy),
        ) from exc

    output = response.content
    output_tokens = estimate_tokens(output)
    if not output or output_tokens >= input_tokens:
        return compress_extractive(text, policy)
    # Hybrid ordering: the model output is rescanned; anything the
    # deterministic scanner flags as a real secret voids the summary.
    rescan = scan(output, ruleset)
    if any(s.secret_class.typology is not Typology.QUASI_IDENTIFIER for s in rescan.spans):
        return compress_extractive(text, policy)
    return CompressionResult(
        output, input_tokens, output_tokens,
        _ratio(output_tokens, input_tokens), Backend.EXTERNAL_SLM,
    )


# ---------------------------------------------------------------------------
# Intent preservation
# ---------------------------------------------------------------------------

_IMPERATIVE_VERBS = frozenset({
    "translate", "summarize", "summarise", "extract", "write", "draft",
    "fix", "explain", "convert", "list", "compute", "compare", "review",
    "generate", "classify", "rank", "answer", "describe", "identify",
})

_PHRASE_END = re.compile(r"[.;!?]")


def intent_keywords(text: str, policy: CompressionPolicy | None = None) -> list[str]:
    """Extract the phrases that define what the prompt asks for.

    Marker-line bodies are taken whole; other lines contribute their leading
    clause when they open with an imperative verb.  Order preserved, no
    duplicates.
    """
    policy = policy or CompressionPolicy()
    keywords: list[str] = []
    seen: set[str] = set()

    def _add(phrase: str) -> None:
        phrase = phrase.strip()
        if phrase and phrase.lower() not in seen:
            seen.add(phrase.lower())
            keywords.append(phrase)

    for line in text.split("\n"):
        stripped = line.strip()
        if not stripped:
            continue
        matched_marker = False
        for marker in policy.keep_markers:
            if stripped.startswith(marker):
                _add(stripped[len(marker):])
                matched_marker = True
                break
        if matched_marker:
            continue
        first_word = stripped.split(" ", 1)[0].lower().rstrip(",:")
        if first_word in _IMPERATIVE_VERBS:
            clause = _PHRASE_END.split(stripped, 1)[0]
            _add(clause[:80])
    return keywords


def keyword_survival(original: str, compressed: str,
                     policy: CompressionPolicy | None = None) -> float:
    """Fraction of the original's intent keywords still present verbatim
    (case-insensitive) in the compressed text.  1.0 when there are none."""
    keywords = intent_keywords(original, policy)
    if not keywords:
        return 1.0
    lowered = compressed.lower()
    kept = sum(1 for k in keywords if k.lower() in lowered)
    return kept / len(keywords)
