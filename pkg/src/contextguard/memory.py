"""Per-session LIFO context stack with digest compaction.

The stack holds the conversation; whenever its token total passes the
budget, everything older than the recent window collapses into one digest
entry.  Each digest is compressed, sanitized, and capped, so the context
assembled for any turn is bounded by a constant and never carries a raw
secret surface.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .compressor import CompressionPolicy, compress_extractive
from .costmodel import estimate_tokens
from .errors import BudgetInfeasibleError, ContractViolationError
from .scanner import mask_secrets

TRUNCATION_MARKER = "[...truncated...]"


class Role(str, Enum):
    USER = "User"
    ASSISTANT = "Assistant"
    DIGEST = "Digest"


@dataclass(frozen=True)
class MemoryEntry:
    turn: int
    role: Role
    content: str
    compacted_from: tuple[int, ...] = ()
    token_estimate: int = field(init=False)

    def __post_init__(self):
        if self.turn < 0:
            raise ContractViolationError("turn must be >= 0")
        if self.role is Role.DIGEST and not self.compacted_from:
            raise ContractViolationError("digest entries must record compacted turns")
        if self.role is not Role.DIGEST and self.compacted_from:
            raise ContractViolationError("only digest entries carry compacted_from")
        object.__setattr__(self, "token_estimate", estimate_tokens(self.content))

    def rendered(self) -> str:
        if self.role is Role.DIGEST:
            lo, hi = min(self.compacted_from), max(self.compacted_from)
            return f"[DIGEST of turns {lo}-{hi}] {self.content}"
        return f"{self.role.value.upper()}: {self.content}"


def truncate_to_tokens(text: str, max_tokens: int, keep: str = "tail",
                       marker: str = TRUNCATION_MARKER) -> str:
    """Cut ``text`` so its token estimate is <= max_tokens, marking the cut.

    ``keep="tail"`` drops the head (recency wins), ``keep="head"`` drops the
    tail.  The marker is skipped when the allowance is too small to fit it.
    The bound is hard: the result's estimate never exceeds ``max_tokens``.
    """
    if max_tokens < 0:
        raise ContractViolationError("max_tokens must be >= 0")
    if estimate_tokens(text) <= max_tokens:
        return text
    max_bytes = max_tokens * 4
    data = text.encode("utf-8")
    marker_bytes = marker.encode("utf-8")
    if len(marker_bytes) < max_bytes:
        room = max_bytes - len(marker_bytes)
        if keep == "tail":
            body = data[len(data) - room:].decode("utf-8", errors="ignore")
            return marker + body
        body = data[:room].decode("utf-8", errors="ignore")
        return body + marker
    if keep == "tail":
        return data[len(data) - max_bytes:].decode("utf-8", errors="ignore")
    return data[:max_bytes].decode("utf-8", errors="ignore")


class SessionStack:
    """One conversation's bounded working memory.

    ``sanitizer`` runs over every digest before storage; the default is the
    scanner's irreversible masking, and the gateway swaps in vault-backed
    redaction so digests keep placeholders instead.  Single writer per
    session; reads snapshot under the same lock.
    """

    def __init__(self, session_id: str = "default", budget_tokens: int = 2000,
                 recent_window: int = 3,
                 compression_policy: CompressionPolicy | None = None,
                 sanitizer=None):
        if budget_tokens <= 0:
            raise ContractViolationError("budget_tokens must be > 0")
        if recent_window < 1:
            raise ContractViolationError("recent_window must be >= 1")
        self.session_id = session_id
        self.budget_tokens = budget_tokens
        self.recent_window = recent_window
        self.policy = compression_policy or CompressionPolicy()
        self.sanitizer = sanitizer or mask_secrets
        self._entries: list[MemoryEntry] = []
        self._lock = threading.RLock()

    # -- introspection -------------------------------------------------------

    def entries(self) -> list[MemoryEntry]:
        with self._lock:
            return list(self._entries)

    @property
    def total_tokens(self) -> int:
        with self._lock:
            return sum(e.token_estimate for e in self._entries)

    def next_turn(self) -> int:
        with self._lock:
            return self._entries[-1].turn + 1 if self._entries else 0

    # -- mutation ------------------------------------------------------------

    def push(self, entry: MemoryEntry, compressor=None) -> None:
        """Append an entry; auto-compact when the total passes the budget."""
        with self._lock:
            if self._entries and entry.turn <= self._entries[-1].turn:
                raise ContractViolationError(
                    f"turn {entry.turn} not after turn {self._entries[-1].turn}"
                )
            self._entries.append(entry)
            if sum(e.token_estimate for e in self._entries) > self.budget_tokens:
                self.compact(compressor)

    def append(self, role: Role | str, content: str, compressor=None) -> MemoryEntry:
        with self._lock:
            entry = MemoryEntry(self.next_turn(), Role(role), content)
            self.push(entry, compressor)
            return entry

    def compact(self, compressor=None) -> None:
        """Fold everything older than the recent window into one digest.

        No-op at or under budget.  Raises BudgetInfeasibleError when the
        recent window alone leaves no room for any digest; the digest is
        otherwise truncated into whatever budget remains.
        """
        compressor = compressor or compress_extractive
        with self._lock:
            total = sum(e.token_estimate for e in self._entries)
            if total <= self.budget_tokens:
                return
            recent = self._entries[len(self._entries) - self.recent_window:]
            old = self._entries[: len(self._entries) - self.recent_window]
            recent_total = sum(e.token_estimate for e in recent)
            cap = min(self.policy.max_digest_tokens,
                      self.budget_tokens - recent_total)
            if not old or cap < 1:
                raise BudgetInfeasibleError(
                    f"recent window holds {recent_total} tokens against a "
                    f"budget of {self.budget_tokens}; nothing left to compact into"
                )
            source = "\n".join(e.rendered() for e in old)
            digest_text = compressor(source, self.policy).output
            digest_text = self.sanitizer(digest_text)
            digest_text = truncate_to_tokens(digest_text, cap, keep="head")
            turns: set[int] = set()
            for e in old:
                turns.add(e.turn)
                turns.update(e.compacted_from)
            digest = MemoryEntry(
                turn=old[-1].turn,
                role=Role.DIGEST,
                content=digest_text,
                compacted_from=tuple(sorted(turns)),
            )
            self._entries = [digest] + recent

    # -- reads ---------------------------------------------------------------

    def bootstrap(self) -> str:
        """Assemble the working context, newest entries preferred, under budget.

        The newest digest is always included (truncated if it alone exceeds
        the budget).  Remaining room fills with entries newest-first; output
        is in turn order.  The budget is a hard ceiling on the result.
        """
        with self._lock:
            entries = list(self._entries)
        if not entries:
            return ""

        # Cost of a block includes its joining newline so the ceiling sums
        # can never undercount the joined text.
        def cost(block: str) -> int:
            return estimate_tokens(block + "\n")

        chosen: list[tuple[int, str]] = []
        used = 0
        digest = next(
            (e for e in reversed(entries) if e.role is Role.DIGEST), None
        )
        if digest is not None:
            block = digest.rendered()
            if cost(block) > self.budget_tokens:
                block = truncate_to_tokens(block, self.budget_tokens, keep="head")
                return block
            chosen.append((digest.turn, block))
            used += cost(block)

        for entry in reversed(entries):
            if entry is digest:
                continue
            block = entry.rendered()
            if used + cost(block) <= self.budget_tokens:
                chosen.append((entry.turn, block))
                used += cost(block)
            elif not chosen:
                # A single oversize newest entry still yields usable context.
                block = truncate_to_tokens(block, self.budget_tokens)
                chosen.append((entry.turn, block))
                break
            else:
                break

        chosen.sort(key=lambda pair: pair[0])
        return "\n".join(block for _, block in chosen)

    # -- persistence ---------------------------------------------------------

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"session-{self.session_id}.jsonl"
        with self._lock:
            entries = list(self._entries)
        with open(path, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(json.dumps({
                    "turn": e.turn,
                    "role": e.role.value,
                    "content": e.content,
                    "compacted_from": list(e.compacted_from),
                }, ensure_ascii=False) + "\n")
        return path

    @classmethod
    def load(cls, path, **kwargs) -> "SessionStack":
        path = Path(path)
        session_id = path.stem.removeprefix("session-")
        stack = cls(session_id=session_id, **kwargs)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                entry = MemoryEntry(
                    turn=raw["turn"],
                    role=Role(raw["role"]),
                    content=raw["content"],
                    compacted_from=tuple(raw.get("compacted_from", [])),
                )
                with stack._lock:
                    stack._entries.append(entry)
        return stack
