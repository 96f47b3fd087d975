"""Deterministic secret and quasi-identifier detection.

Rule-based: regular-expression patterns plus per-class validators (Luhn for
card numbers, address parsing for IPs).  No statistical NER.  All matching
runs on the UTF-8 byte representation of the input so span offsets are byte
offsets; every pattern anchors on ASCII characters, which can never split a
multi-byte sequence.

Placeholders already minted by the vault (``[[SECRET:...]]``) are masked out
before matching, so scanning redacted text is idempotent by construction.
"""

from __future__ import annotations

import csv
import ipaddress
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from .costmodel import estimate_tokens
from .errors import ConfigurationError, ContractViolationError, EncodingError


class Typology(str, Enum):
    PERSONAL = "Personal"
    INSTITUTIONAL = "Institutional"
    QUASI_IDENTIFIER = "QuasiIdentifier"


@dataclass(frozen=True)
class SecretClass:
    id: str
    typology: Typology
    severity: int  # 1 (hint) .. 3 (credential-grade)


_CLASS_DEFS = [
    # Personal
    SecretClass("email", Typology.PERSONAL, 2),
    SecretClass("phone", Typology.PERSONAL, 2),
    SecretClass("national_insurance_number", Typology.PERSONAL, 3),
    SecretClass("credit_card", Typology.PERSONAL, 3),
    SecretClass("medical_record_id", Typology.PERSONAL, 3),
    SecretClass("financial_pin", Typology.PERSONAL, 3),
    # Institutional
    SecretClass("api_key", Typology.INSTITUTIONAL, 3),
    SecretClass("cloud_access_key", Typology.INSTITUTIONAL, 3),
    SecretClass("ipv4", Typology.INSTITUTIONAL, 2),
    SecretClass("ipv6", Typology.INSTITUTIONAL, 2),
    SecretClass("pem_private_key_block", Typology.INSTITUTIONAL, 3),
    SecretClass("jwt", Typology.INSTITUTIONAL, 3),
    SecretClass("internal_hostname", Typology.INSTITUTIONAL, 2),
    # Quasi-identifiers: risk signal only, never redacted.
    SecretClass("person_name_hint", Typology.QUASI_IDENTIFIER, 1),
    SecretClass("org_name_hint", Typology.QUASI_IDENTIFIER, 1),
    SecretClass("calendar_date", Typology.QUASI_IDENTIFIER, 1),
]

CLASSES: dict[str, SecretClass] = {c.id: c for c in _CLASS_DEFS}


@dataclass(frozen=True)
class SecretSpan:
    """A located, classified secret occurrence; offsets are UTF-8 byte offsets."""

    secret_class: SecretClass
    start: int
    end: int  # exclusive
    surface: str
    detector_rule: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ContractViolationError(
                f"invalid span range [{self.start}, {self.end})"
            )


@dataclass(frozen=True)
class ScanReport:
    spans: tuple[SecretSpan, ...]
    secret_token_estimate: int
    secret_density: float
    total_token_estimate: int

    def spans_of(self, typology: Typology) -> tuple[SecretSpan, ...]:
        return tuple(s for s in self.spans if s.secret_class.typology is typology)


# ---------------------------------------------------------------------------
# Validators ("checksums") referenced by name from rules
# ---------------------------------------------------------------------------

def luhn_valid(surface: str) -> bool:
    """Luhn checksum over the digits of ``surface`` (separators ignored)."""
    digits = [int(ch) for ch in surface if ch.isdigit()]
    if len(digits) < 12:
        return False
    digits.reverse()
    total = 0
    for i, d in enumerate(digits):
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def _ipv4_valid(surface: str) -> bool:
    try:
        ipaddress.IPv4Address(surface)
    except ValueError:
        return False
    return True


def _ipv6_valid(surface: str) -> bool:
    try:
        ipaddress.IPv6Address(surface)
    except ValueError:
        return False
    return True


VALIDATORS: dict[str, Callable[[str], bool]] = {
    "luhn": luhn_valid,
    "ipv4": _ipv4_valid,
    "ipv6": _ipv6_valid,
}


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    rule_id: str
    class_id: str
    pattern: re.Pattern  # compiled over bytes
    validator: str | None = None


def _rule(rule_id: str, class_id: str, pattern: str, validator: str | None = None) -> Rule:
    if class_id not in CLASSES:
        raise ConfigurationError(f"unknown secret class {class_id!r}")
    if validator is not None and validator not in VALIDATORS:
        raise ConfigurationError(f"unknown checksum validator {validator!r}")
    try:
        compiled = re.compile(pattern.encode("utf-8"))
    except re.error as exc:
        raise ConfigurationError(f"bad pattern for rule {rule_id!r}: {exc}") from None
    return Rule(rule_id, class_id, compiled, validator)


# When a pattern contains a capture group, group 1 is the span; otherwise the
# whole match is.  That lets context-keyword rules (PIN) exclude the label.
_DEFAULT_RULE_DEFS: list[tuple[str, str, str, str | None]] = [
    ("email.addr", "email",
     r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b", None),
    ("phone.uk_mobile", "phone",
     r"(?<!\d)\+44 7\d{3} \d{6}(?!\d)", None),
    ("phone.us_paren", "phone",
     r"(?<![\d(])\(\d{3}\) \d{3}-\d{4}(?!\d)", None),
    ("nino.uk", "national_insurance_number",
     r"\b[A-CEGHJ-PR-TW-Z][A-CEGHJ-NPR-TW-Z] ?\d{6} ?[A-D]\b", None),
    ("ccn.grouped", "credit_card",
     r"\b\d{4}(?:[ -]?\d{4}){3}\b", "luhn"),
    ("mrn.prefixed", "medical_record_id",
     r"\bMRN-\d{8}\b", None),
    ("pin.labelled", "financial_pin",
     r"(?i)\bPIN[:= ] ?(\d{4,6})(?!\d)", None),
    ("apikey.sk", "api_key",
     r"\bsk-[A-Za-z0-9]{32}(?![A-Za-z0-9])", None),
    ("apikey.ghp", "api_key",
     r"\bghp_[A-Za-z0-9]{36}(?![A-Za-z0-9])", None),
    ("cloudkey.akia", "cloud_access_key",
     r"\bAKIA[0-9A-Z]{16}\b", None),
    ("ipv4.dotted", "ipv4",
     r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d.])", "ipv4"),
    ("ipv6.full", "ipv6",
     r"(?<![0-9A-Za-z:])(?:[0-9A-Fa-f]{1,4}:){7}[0-9A-Fa-f]{1,4}(?![0-9A-Za-z:])", "ipv6"),
    ("ipv6.compressed", "ipv6",
     r"(?<![0-9A-Za-z:.])[0-9A-Fa-f]{1,4}(?::[0-9A-Fa-f]{1,4}){0,5}"
     r"::[0-9A-Fa-f]{1,4}(?::[0-9A-Fa-f]{1,4}){0,5}(?![0-9A-Za-z:])", "ipv6"),
    ("pem.private_key", "pem_private_key_block",
     r"-----BEGIN [A-Z ]*PRIVATE KEY-----[\s\S]*?-----END [A-Z ]*PRIVATE KEY-----", None),
    ("jwt.compact", "jwt",
     r"\beyJ[A-Za-z0-9_-]{8,}\.[A-Za-z0-9_-]{6,}\.[A-Za-z0-9_-]{8,}(?![A-Za-z0-9_.-])", None),
    ("hostname.internal", "internal_hostname",
     r"\b[a-z][a-z0-9-]+(?:\.[a-z0-9-]+)*\.(?:internal|corp|intra|local)\b", None),
    # Quasi-identifiers: deliberately coarse.
    ("quasi.person_bigram", "person_name_hint",
     r"\b[A-Z][a-z]{2,}\s[A-Z][a-z]{2,}\b", None),
    ("quasi.org_suffix", "org_name_hint",
     r"\b[A-Z][A-Za-z]{2,}(?: [A-Z][A-Za-z]{2,})? (?:Ltd|Inc|LLC|GmbH|PLC|Corp)\b", None),
    ("quasi.iso_date", "calendar_date",
     r"\b\d{4}-\d{2}-\d{2}\b", None),
]


@dataclass(frozen=True)
class Ruleset:
    rules: tuple[Rule, ...]
    version: str = "builtin-1"

    @classmethod
    def default(cls) -> "Ruleset":
        return _DEFAULT_RULESET

    @classmethod
    def load(cls, path) -> "Ruleset":
        """Load a rules file: one CSV row per rule ``class_id,pattern[,checksum]``.

        Lines starting with ``#`` are comments; ``# version: <tag>`` sets the
        ruleset version.
        """
        version = "file"
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for raw in fh:
                stripped = raw.strip()
                if not stripped:
                    continue
                if stripped.startswith("#"):
                    if stripped[1:].strip().lower().startswith("version:"):
                        version = stripped.split(":", 1)[1].strip()
                    continue
                rows.append(stripped)
        rules = []
        for i, row in enumerate(csv.reader(rows)):
            if len(row) not in (2, 3):
                raise ConfigurationError(
                    f"rules file row {i}: expected class_id,pattern[,checksum]"
                )
            class_id = row[0].strip()
            pattern = row[1]
            validator = row[2].strip() if len(row) == 3 and row[2].strip() else None
            rules.append(_rule(f"file.{i}.{class_id}", class_id, pattern, validator))
        if not rules:
            raise ConfigurationError(f"rules file {path} contains no rules")
        return cls(tuple(rules), version=version)


_DEFAULT_RULESET = Ruleset(tuple(_rule(*d) for d in _DEFAULT_RULE_DEFS))

# Matches vault placeholders; spans inside these regions are discarded.
_PLACEHOLDER_RE = re.compile(rb"\[\[SECRET:(?:PER|INS):[A-Z0-9_]+:\d{6}\]\]")


# ---------------------------------------------------------------------------
# Scanning
# ---------------------------------------------------------------------------

def _to_bytes(text) -> bytes:
    if isinstance(text, bytes):
        try:
            text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"input is not valid UTF-8: {exc}") from None
        return text
    return text.encode("utf-8")


def _resolve_same_class(candidates: list[tuple[int, int, str, str]]) -> list[tuple[int, int, str, str]]:
    """Greedy longest-first, earliest-first selection of non-overlapping matches."""
    ordered = sorted(candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[3]))
    kept: list[tuple[int, int, str, str]] = []
    for cand in ordered:
        if all(cand[1] <= k[0] or cand[0] >= k[1] for k in kept):
            kept.append(cand)
    kept.sort(key=lambda c: c[0])
    return kept


def _union_length(intervals: list[tuple[int, int]]) -> int:
    if not intervals:
        return 0
    total = 0
    cur_start, cur_end = None, None
    for s, e in sorted(intervals):
        if cur_start is None:
            cur_start, cur_end = s, e
        elif s <= cur_end:
            cur_end = max(cur_end, e)
        else:
            total += cur_end - cur_start
            cur_start, cur_end = s, e
    total += cur_end - cur_start
    return total


def scan(text, ruleset: Ruleset | None = None) -> ScanReport:
    """Scan ``text`` (str or UTF-8 bytes) and return every detected span.

    Deterministic: identical input yields an identical report, independent of
    prior calls.  Spans of the same class never overlap; spans of different
    classes may (an IP inside a URL, say).
    """
    data = _to_bytes(text)
    ruleset = ruleset or Ruleset.default()

    masked = [m.span() for m in _PLACEHOLDER_RE.finditer(data)]

    by_class: dict[str, list[tuple[int, int, str, str]]] = {}
    for rule in ruleset.rules:
        for m in rule.pattern.finditer(data):
            group = 1 if rule.pattern.groups else 0
            start, end = m.span(group)
            if start == end:
                continue
            if any(start < me and ms < end for ms, me in masked):
                continue
            surface = data[start:end].decode("utf-8")
            if rule.validator and not VALIDATORS[rule.validator](surface):
                continue
            by_class.setdefault(rule.class_id, []).append(
                (start, end, surface, rule.rule_id)
            )

    spans: list[SecretSpan] = []
    for class_id in sorted(by_class):
        cls = CLASSES[class_id]
        for start, end, surface, rule_id in _resolve_same_class(by_class[class_id]):
            spans.append(SecretSpan(cls, start, end, surface, rule_id))
    spans.sort(key=lambda s: (s.start, s.end, s.secret_class.id))

    total_tokens = estimate_tokens(data.decode("utf-8"))
    union = _union_length([(s.start, s.end) for s in spans])
    secret_tokens = (union + 3) // 4
    density = secret_tokens / total_tokens if total_tokens else 0.0
    return ScanReport(tuple(spans), secret_tokens, density, total_tokens)


def token_density(text, spans: Iterable[SecretSpan]) -> float:
    """Token mass of the byte-union of ``spans`` over the total token estimate."""
    data = _to_bytes(text)
    total = estimate_tokens(data.decode("utf-8"))
    if not total:
        return 0.0
    union = _union_length([(s.start, s.end) for s in spans])
    return ((union + 3) // 4) / total


def scan_residual(payload: str, ground_truth: Iterable[str]) -> list[str]:
    """Return the ground-truth surfaces that occur verbatim in ``payload``.

    This is the leakage oracle: a plain substring check, independent of the
    rule engine above.
    """
    leaked = []
    for surface in ground_truth:
        if not surface:
            raise ContractViolationError("ground-truth surfaces must be non-empty")
        if surface in payload:
            leaked.append(surface)
    return leaked


def resolve_overlaps(spans: Iterable[SecretSpan]) -> list[SecretSpan]:
    """Cross-class overlap resolution: longest wins, then earliest, then class id."""
    ordered = sorted(
        spans, key=lambda s: (-(s.end - s.start), s.start, s.secret_class.id)
    )
    kept: list[SecretSpan] = []
    for span in ordered:
        if all(span.end <= k.start or span.start >= k.end for k in kept):
            kept.append(span)
    kept.sort(key=lambda s: s.start)
    return kept


def mask_secrets(text: str, ruleset: Ruleset | None = None) -> str:
    """Irreversibly replace detected secrets with ``[REDACTED:<class>]``.

    One-way: nothing is vaulted, so this is for sinks that must never leak
    (digests, audit trails) rather than for round-trip redaction.
    """
    report = scan(text, ruleset)
    chosen = resolve_overlaps(
        s for s in report.spans
        if s.secret_class.typology is not Typology.QUASI_IDENTIFIER
    )
    data = text.encode("utf-8")
    out: list[bytes] = []
    cursor = 0
    for span in chosen:
        out.append(data[cursor:span.start])
        out.append(f"[REDACTED:{span.secret_class.id}]".encode("ascii"))
        cursor = span.end
    out.append(data[cursor:])
    return b"".join(out).decode("utf-8")


def validate_spans(text, spans: Iterable[SecretSpan]) -> None:
    """Raise ContractViolationError unless every span matches ``text``."""
    data = _to_bytes(text)
    for span in spans:
        if span.end > len(data):
            raise ContractViolationError(
                f"span [{span.start}, {span.end}) out of bounds for {len(data)}-byte text"
            )
        if data[span.start:span.end] != span.surface.encode("utf-8"):
            raise ContractViolationError(
                f"span surface mismatch at [{span.start}, {span.end})"
            )
