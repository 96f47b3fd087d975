import pytest
from hypothesis import given, settings, strategies as st

from contextguard.costmodel import estimate_tokens
from contextguard.errors import BudgetInfeasibleError, ContractViolationError
from contextguard.memory import (
    TRUNCATION_MARKER,
    MemoryEntry,
    Role,
    SessionStack,
    truncate_to_tokens,
)


def entry(turn, content, role=Role.USER, compacted_from=()):
    return MemoryEntry(turn, role, content, compacted_from=tuple(compacted_from))


# -- entries ------------------------------------------------------------------

def test_entry_token_estimate_and_rendering():
    e = entry(1, "hello world")
    assert e.token_estimate == estimate_tokens("hello world")
    assert e.rendered() == "USER: hello world"
    assert entry(2, "ok", role=Role.ASSISTANT).rendered() == "ASSISTANT: ok"


def test_digest_entries_declare_their_sources():
    d = MemoryEntry(5, Role.DIGEST, "summary", compacted_from=(1, 2, 3))
    assert d.rendered().startswith("[DIGEST of turns 1-3]")
    with pytest.raises(ContractViolationError):
        MemoryEntry(5, Role.DIGEST, "summary")  # digest without sources
    with pytest.raises(ContractViolationError):
        MemoryEntry(5, Role.USER, "text", compacted_from=(1,))


# -- truncation ----------------------------------------------------------------

def test_truncate_noop_under_budget():
    assert truncate_to_tokens("short", 100) == "short"


def test_truncate_tail_keeps_end():
    text = "A" * 400 + "END"
    out = truncate_to_tokens(text, 10)
    assert estimate_tokens(out) <= 10
    assert out.endswith("END")
    assert out.startswith(TRUNCATION_MARKER)


def test_truncate_head_keeps_start():
    text = "BEGIN" + "z" * 400
    out = truncate_to_tokens(text, 10, keep="head")
    assert estimate_tokens(out) <= 10
    assert out.startswith("BEGIN")
    assert out.endswith(TRUNCATION_MARKER)


def test_truncate_tiny_budget_drops_marker():
    out = truncate_to_tokens("x" * 400, 1)
    assert estimate_tokens(out) <= 1
    assert TRUNCATION_MARKER not in out


@given(st.text(min_size=0, max_size=2000), st.integers(min_value=1, max_value=50))
def test_truncate_hard_bound_property(text, budget):
    for keep in ("head", "tail"):
        out = truncate_to_tokens(text, budget, keep=keep)
        assert estimate_tokens(out) <= budget


# -- stack push/compact -----------------------------------------------------------

def test_stack_validates_constructor():
    with pytest.raises(ContractViolationError):
        SessionStack(budget_tokens=0)
    with pytest.raises(ContractViolationError):
        SessionStack(recent_window=0)


def test_push_requires_monotone_turns():
    stack = SessionStack(budget_tokens=1000)
    stack.push(entry(1, "a"))
    with pytest.raises(ContractViolationError):
        stack.push(entry(1, "b"))


def test_append_assigns_increasing_turns():
    stack = SessionStack(budget_tokens=1000)
    a = stack.append(Role.USER, "first")
    b = stack.append("Assistant", "second")  # role coercion from string
    assert (a.turn, b.turn) == (0, 1)
    assert [e.role for e in stack.entries()] == [Role.USER, Role.ASSISTANT]


def test_auto_compact_keeps_stack_under_budget():
    stack = SessionStack(budget_tokens=300, recent_window=2)
    for t in range(1, 12):
        stack.append(Role.USER, f"turn {t} " + "x" * 200)  # ~52 tokens each
        assert stack.total_tokens <= 300
    entries = stack.entries()
    assert entries[0].role is Role.DIGEST
    # LIFO: the newest turns stay verbatim
    assert "turn 10" in entries[-2].content
    assert "turn 11" in entries[-1].content


def test_compact_noop_under_budget():
    stack = SessionStack(budget_tokens=10_000)
    stack.append(Role.USER, "small")
    before = stack.entries()
    stack.compact()
    assert stack.entries() == before


def test_digest_lineage_flattens_through_recompaction():
    stack = SessionStack(budget_tokens=250, recent_window=1)
    for t in range(1, 9):
        stack.append(Role.USER, f"turn {t} " + "y" * 180)
    digest = stack.entries()[0]
    assert digest.role is Role.DIGEST
    # every folded turn is accounted for exactly once, in order
    assert digest.compacted_from == tuple(range(digest.turn + 1))


def test_compact_infeasible_when_recent_window_fills_budget():
    stack = SessionStack(budget_tokens=100, recent_window=3)
    # the window itself busts the budget with nothing older to fold
    stack.push(entry(1, "z" * 200))  # 50 tokens each
    stack.push(entry(2, "z" * 200))
    with pytest.raises(BudgetInfeasibleError):
        stack.push(entry(3, "z" * 200))


def test_compact_infeasible_when_window_leaves_no_digest_room():
    stack = SessionStack(budget_tokens=100, recent_window=1)
    stack.push(entry(1, "a" * 80))  # 20 tokens of history to fold
    with pytest.raises(BudgetInfeasibleError):
        stack.push(entry(2, "b" * 400))  # newest alone consumes the full budget


def test_sanitizer_runs_before_digest_is_stored():
    from contextguard.scanner import mask_secrets

    stack = SessionStack(budget_tokens=200, recent_window=1, sanitizer=mask_secrets)
    secret = "sk-" + "M" * 32
    stack.append(Role.USER, f"the deploy key is {secret} " + "pad " * 30)
    for t in range(2, 6):
        stack.append(Role.USER, f"turn {t} " + "pad " * 40)
    digest = stack.entries()[0]
    assert digest.role is Role.DIGEST
    assert secret not in digest.content


# -- bootstrap ---------------------------------------------------------------------

def test_bootstrap_empty_stack():
    assert SessionStack(budget_tokens=100).bootstrap() == ""


def test_bootstrap_orders_by_turn_and_respects_budget():
    stack = SessionStack(budget_tokens=5000)
    for t in range(1, 6):
        stack.append(Role.USER, f"message number {t}")
    ctx = stack.bootstrap()
    positions = [ctx.index(f"message number {t}") for t in range(1, 6)]
    assert positions == sorted(positions)
    assert estimate_tokens(ctx) <= 5000


def test_bootstrap_prefers_newest_when_budget_tight():
    stack = SessionStack(budget_tokens=10_000)
    for t in range(1, 21):
        stack.append(Role.USER, f"entry {t:02d} " + "w" * 150)
    small = SessionStack(budget_tokens=120)
    small._entries = stack.entries()  # same transcript, tighter reader budget
    ctx = small.bootstrap()
    assert estimate_tokens(ctx) <= 120
    assert "entry 20" in ctx
    assert "entry 01" not in ctx


def test_bootstrap_truncates_single_oversize_entry():
    stack = SessionStack(budget_tokens=50)
    stack._entries = [entry(1, "G" * 900)]
    ctx = stack.bootstrap()
    assert ctx != ""
    assert estimate_tokens(ctx) <= 50


@settings(max_examples=30)
@given(st.lists(st.text(min_size=1, max_size=300), min_size=1, max_size=12),
       st.integers(min_value=20, max_value=400))
def test_bootstrap_budget_is_hard_ceiling(contents, budget):
    stack = SessionStack(budget_tokens=10_000, recent_window=3)
    for text in contents:
        stack.append(Role.USER, text)
    reader = SessionStack(budget_tokens=budget, recent_window=3)
    reader._entries = stack.entries()
    assert estimate_tokens(reader.bootstrap()) <= budget


# -- persistence ---------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    stack = SessionStack(session_id="persist", budget_tokens=900, recent_window=2)
    for t in range(1, 8):
        stack.append(Role.USER if t % 2 else Role.ASSISTANT, f"turn {t} content")
    path = stack.save(tmp_path)
    assert path.name == "session-persist.jsonl"

    loaded = SessionStack.load(path, budget_tokens=900, recent_window=2)
    assert loaded.session_id == "persist"
    assert loaded.entries() == stack.entries()
    assert loaded.next_turn() == stack.next_turn()
