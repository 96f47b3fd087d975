import csv
import math

import pytest
from hypothesis import given, strategies as st

from contextguard.costmodel import (
    LEDGER_COLUMNS,
    CostLedger,
    LedgerRow,
    PriceTable,
    TOKEN_RULE,
    TierPrice,
    estimate_tokens,
    parsimony,
    price,
)
from contextguard.errors import ConfigurationError, ContractViolationError


def test_token_rule_is_versioned():
    assert TOKEN_RULE == "utf8-bytes/4-ceil-v1"


def test_estimate_tokens_fixed_points():
    assert estimate_tokens("") == 0
    assert estimate_tokens("a") == 1
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2
    assert estimate_tokens("abcdefghij") == 3  # 10 bytes
    assert estimate_tokens("a" * 4000) == 1000


def test_estimate_tokens_counts_bytes_not_codepoints():
    # 2-byte and 3-byte characters
    assert estimate_tokens("é") == 1          # 2 bytes
    assert estimate_tokens("ééé") == 2        # 6 bytes
    assert estimate_tokens("日本語") == 3      # 9 bytes


@given(st.text(max_size=500))
def test_estimate_tokens_matches_ceil_of_byte_length(text):
    n = len(text.encode("utf-8"))
    assert estimate_tokens(text) == math.ceil(n / 4)


@pytest.fixture()
def table():
    return PriceTable(tiers={
        "cloud": TierPrice(input_per_1k=0.005, output_per_1k=0.015),
        "onprem": TierPrice(input_per_1k=0.0, output_per_1k=0.0, local=True),
    })


def test_price_cloud(table):
    # 11300/1000*0.005 + 200/1000*0.015 = 0.0565 + 0.003
    assert price(11300, 200, "cloud", table) == pytest.approx(0.0595)
    assert price(0, 0, "cloud", table) == 0.0


def test_price_local_is_free(table):
    assert price(10**6, 10**6, "onprem", table) == 0.0


def test_price_unknown_ref_raises(table):
    with pytest.raises(ConfigurationError):
        price(1, 1, "nope", table)


def test_ledger_row_delta_is_derived():
    row = LedgerRow(
        baseline_input_tokens=1000,
        guarded_input_tokens=400,
        output_tokens=50,
        baseline_cost=2.0,
        guarded_cost=0.5,
        quadrant="Lazy/Personal",
    )
    assert row.delta == pytest.approx(1.5)
    record = row.as_record()
    assert record["delta"] == pytest.approx(1.5)
    assert set(record) == set(LEDGER_COLUMNS)


def test_ledger_append_and_csv(tmp_path):
    ledger = CostLedger()
    ledger.append(LedgerRow(100, 40, 5, 1.0, 0.25, quadrant="q"))
    ledger.append(LedgerRow(200, 80, 5, 2.0, 0.5))
    assert len(ledger.rows) == 2

    path = tmp_path / "ledger.csv"
    ledger.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(LEDGER_COLUMNS)
    assert rows[1][0] == "100"
    assert rows[1][5] == "0.75000000"  # delta, fixed precision
    assert rows[1][6] == "q"


def test_parsimony_blended_and_by_quadrant():
    rows = [
        LedgerRow(0, 0, 0, 2.0, 1.0, quadrant="a"),
        LedgerRow(0, 0, 0, 1.0, 1.0, quadrant="a"),
        LedgerRow(0, 0, 0, 1.0, 0.0, quadrant="b"),
    ]
    result = parsimony(rows)
    # deltas: 1.0 + 0.0 + 1.0 over baseline 4.0
    assert result.blended == pytest.approx(0.5)
    assert result.by_quadrant["a"] == pytest.approx(1.0 / 3.0)
    assert result.by_quadrant["b"] == pytest.approx(1.0)


def test_parsimony_empty_ledger_raises():
    with pytest.raises(ContractViolationError):
        parsimony([])
