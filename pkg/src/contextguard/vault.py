"""Segregated secret vaults and reversible redaction.

Two vaults per session, one per typology (Personal, Institutional).  Each
vault is an append-only bijection between original surfaces and placeholder
ids.  Rehydration is the only path from placeholder back to surface, and a
vault can only resolve placeholders of its own kind, so segregation is
structural rather than policy-enforced.

Placeholder grammar::

    [[SECRET:<PER|INS>:<CLASS_ID_UPPER>:<6-digit counter>]]

Counters are per-vault and monotone, so placeholders never collide across
classes within a vault.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from cryptography.fernet import Fernet, InvalidToken

from .errors import ConfigurationError, ContractViolationError
from .scanner import SecretSpan, Typology, resolve_overlaps, validate_spans


class VaultKind(str, Enum):
    PERSONAL = "PER"
    INSTITUTIONAL = "INS"

    @classmethod
    def for_typology(cls, typology: Typology) -> "VaultKind":
        if typology is Typology.PERSONAL:
            return cls.PERSONAL
        if typology is Typology.INSTITUTIONAL:
            return cls.INSTITUTIONAL
        raise ContractViolationError(
            f"typology {typology.value} has no vault; quasi-identifiers are never vaulted"
        )


@dataclass(frozen=True)
class VaultId:
    kind: VaultKind
    class_id: str  # uppercased, as rendered in the placeholder
    counter: int

    def __post_init__(self):
        object.__setattr__(self, "class_id", self.class_id.upper())

    @property
    def placeholder(self) -> str:
        return f"[[SECRET:{self.kind.value}:{self.class_id}:{self.counter:06d}]]"


@dataclass(frozen=True)
class VaultEntry:
    vault_id: VaultId
    original: str
    class_id: str


_PLACEHOLDER_RE = re.compile(r"\[\[SECRET:(PER|INS):([A-Z0-9_]+):(\d{6})\]\]")

# One added backslash between "[[" and "SECRET:" per escape level.
_ESCAPE_RE = re.compile(r"\[\[(\\*)SECRET:")


def escape_sigils(text: str) -> str:
    """Add one escape level to every placeholder-opening sigil in user text."""
    return _ESCAPE_RE.sub(lambda m: "[[" + "\\" * (len(m.group(1)) + 1) + "SECRET:", text)


def unescape_sigils(text: str) -> str:
    """Remove one escape level; zero-level sigils are left untouched."""
    return _ESCAPE_RE.sub(
        lambda m: "[[" + "\\" * max(len(m.group(1)) - 1, 0) + "SECRET:", text
    )


@dataclass
class RehydrationResult:
    text: str
    unauthorized: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


class Vault:
    """Append-only surface-to-placeholder map for one typology."""

    def __init__(self, kind: VaultKind, session_id: str = "default"):
        self.kind = kind
        self.session_id = session_id
        self._by_original: dict[str, VaultEntry] = {}
        self._by_id: dict[VaultId, VaultEntry] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_id)

    def entries(self) -> list[VaultEntry]:
        with self._lock:
            return list(self._by_id.values())

    def get_or_create(self, original: str, class_id: str) -> VaultEntry:
        if not original:
            raise ContractViolationError("cannot vault an empty surface")
        with self._lock:
            existing = self._by_original.get(original)
            if existing is not None:
                return existing
            self._counter += 1
            entry = VaultEntry(VaultId(self.kind, class_id, self._counter), original, class_id)
            self._by_original[original] = entry
            self._by_id[entry.vault_id] = entry
            return entry

    def lookup(self, vault_id: VaultId) -> VaultEntry | None:
        with self._lock:
            return self._by_id.get(vault_id)

    # -- persistence --------------------------------------------------------

    def save(self, directory, key: bytes) -> Path:
        """Write entries as encrypted JSONL: one Fernet token per line.

        The decrypted view is one JSON object per line with keys
        ``kind, class_id, counter, original``.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        fernet = Fernet(key)
        path = directory / f"vault-{self.session_id}-{self.kind.value.lower()}.jsonl"
        with self._lock:
            entries = sorted(self._by_id.values(), key=lambda e: e.vault_id.counter)
        with open(path, "w", encoding="utf-8") as fh:
            for entry in entries:
                record = json.dumps(
                    {
                        "kind": entry.vault_id.kind.value,
                        "class_id": entry.class_id,
                        "counter": entry.vault_id.counter,
                        "original": entry.original,
                    },
                    ensure_ascii=False,
                )
                token = fernet.encrypt(record.encode("utf-8"))
                fh.write(json.dumps({"c": token.decode("ascii")}) + "\n")
        return path

    @classmethod
    def load(cls, path, key: bytes, session_id: str = "default") -> "Vault":
        fernet = Fernet(key)
        vault: Vault | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                token = json.loads(line)["c"].encode("ascii")
                try:
                    record = json.loads(fernet.decrypt(token).decode("utf-8"))
                except InvalidToken:
                    raise ConfigurationError(
                        f"vault file {path}: decryption failed (wrong key or corrupt file)"
                    ) from None
                kind = VaultKind(record["kind"])
                if vault is None:
                    vault = cls(kind, session_id=session_id)
                elif vault.kind is not kind:
                    raise ContractViolationError(
                        f"vault file {path} mixes kinds {vault.kind.value} and {kind.value}"
                    )
                entry = VaultEntry(
                    VaultId(kind, record["class_id"], record["counter"]),
                    record["original"],
                    record["class_id"],
                )
                vault._by_original[entry.original] = entry
                vault._by_id[entry.vault_id] = entry
                vault._counter = max(vault._counter, entry.vault_id.counter)
        if vault is None:
            raise ConfigurationError(f"vault file {path} is empty")
        return vault


# ---------------------------------------------------------------------------
# Redaction and rehydration
# ---------------------------------------------------------------------------

def redact(text: str, spans: Iterable[SecretSpan],
           personal: Vault, institutional: Vault) -> str:
    """Replace every Personal/Institutional span with its vault placeholder.

    Quasi-identifier spans are left in place.  Span offsets are validated
    against the text before any splice; offsets are UTF-8 byte offsets.
    """
    spans = list(spans)
    validate_spans(text, spans)
    redactable = [
        s for s in spans if s.secret_class.typology is not Typology.QUASI_IDENTIFIER
    ]
    chosen = resolve_overlaps(redactable)

    data = text.encode("utf-8")
    out: list[bytes] = []
    cursor = 0
    for span in chosen:
        vault = personal if span.secret_class.typology is Typology.PERSONAL else institutional
        entry = vault.get_or_create(span.surface, span.secret_class.id)
        out.append(data[cursor:span.start])
        out.append(entry.vault_id.placeholder.encode("ascii"))
        cursor = span.end
    out.append(data[cursor:])
    return b"".join(out).decode("utf-8")


def rehydrate(text: str, vault: Vault,
              authorized_kinds: Iterable[VaultKind] | None = None) -> RehydrationResult:
    """Resolve placeholders of ``vault.kind`` back to their original surfaces.

    Placeholders of other kinds are left intact.  Placeholders of this kind
    that the vault does not know are left intact and reported as warnings.
    If ``authorized_kinds`` is given and excludes this vault's kind, nothing
    is resolved and every matching placeholder is reported in
    ``unauthorized``.
    """
    allowed = set(authorized_kinds) if authorized_kinds is not None else {vault.kind}
    unauthorized: list[str] = []
    warnings: list[str] = []

    def _sub(m: re.Match) -> str:
        kind = VaultKind(m.group(1))
        if kind is not vault.kind:
            return m.group(0)
        if vault.kind not in allowed:
            unauthorized.append(m.group(0))
            return m.group(0)
        vid = VaultId(kind, m.group(2), int(m.group(3)))
        entry = vault.lookup(vid)
        if entry is None:
            warnings.append(f"unknown placeholder {m.group(0)}")
            return m.group(0)
        return entry.original

    return RehydrationResult(_PLACEHOLDER_RE.sub(_sub, text), unauthorized, warnings)
