import pytest

from contextguard.compressor import (
    ABSTRACTIVE_SYSTEM_INSTRUCTION,
    Backend,
    CompressionPolicy,
    CompressionResult,
    compress_abstractive,
    compress_extractive,
    intent_keywords,
    keyword_survival,
)
from contextguard.costmodel import estimate_tokens
from contextguard.endpoints import MockEndpoint
from contextguard.errors import CompressionBackendError, ConfigurationError


def log_dump(n_noise=50):
    lines = ["TASK: find the anomaly in this dump."]
    lines.append("")
    for i in range(n_noise):
        lines.append(f"2024-05-01T10:00:{i % 60:02d} INFO worker idle heartbeat {i}")
    lines.append("the pump pressure spiked at 10:17")
    lines.append("the pump pressure spiked at 10:17")  # duplicate
    lines.append("=" * 30)
    lines.append("2024-05-01 10:18:00")  # timestamp-only
    return "\n".join(lines)


# -- result contract ----------------------------------------------------------

def test_result_rejects_ratio_outside_unit_interval():
    with pytest.raises(ConfigurationError):
        CompressionResult("x", 10, 12, 1.2, Backend.EXTRACTIVE)
    with pytest.raises(ConfigurationError):
        CompressionResult("", 10, 0, 0.0, Backend.EXTRACTIVE)


def test_result_non_skipped_must_reduce():
    with pytest.raises(ConfigurationError):
        CompressionResult("x", 10, 10, 1.0, Backend.EXTRACTIVE)
    ok = CompressionResult("x", 10, 10, 1.0, Backend.SKIPPED)
    assert ok.reduction == 0.0


def test_policy_validation():
    with pytest.raises(ConfigurationError):
        CompressionPolicy(min_tokens_to_compress=0)
    with pytest.raises(ConfigurationError):
        CompressionPolicy(head_lines=-1)
    with pytest.raises(ConfigurationError):
        CompressionPolicy(max_digest_tokens=0)


# -- extractive engine ---------------------------------------------------------

def test_extractive_skips_short_inputs():
    result = compress_extractive("short ask")
    assert result.backend is Backend.SKIPPED
    assert result.output == "short ask"
    assert result.ratio_k == 1.0


def test_extractive_reduces_and_reports_ratio():
    text = log_dump()
    result = compress_extractive(text)
    assert result.backend is Backend.EXTRACTIVE
    assert result.input_tokens == estimate_tokens(text)
    assert result.output_tokens == estimate_tokens(result.output)
    assert result.ratio_k == pytest.approx(result.output_tokens / result.input_tokens)
    assert result.ratio_k < 1.0


def test_extractive_is_pure_deletion_in_order():
    text = log_dump()
    source_lines = text.split("\n")
    out_lines = compress_extractive(text).output.split("\n")
    # every output line is an input line, in original relative order
    cursor = 0
    for line in out_lines:
        cursor = source_lines.index(line, cursor) + 1


def test_extractive_keeps_marker_lines():
    text = log_dump()
    out = compress_extractive(text).output
    assert "TASK: find the anomaly in this dump." in out


def test_extractive_drops_noise_dups_separators_timestamps():
    out = compress_extractive(log_dump()).output
    assert "INFO worker idle" not in out
    assert out.count("the pump pressure spiked at 10:17") == 1
    assert "=" * 30 not in out
    assert "2024-05-01 10:18:00" not in out.split("\n")


def test_extractive_head_tail_window():
    policy = CompressionPolicy(head_lines=3, tail_lines=2)
    lines = [f"unique content line {i:03d} with enough words" for i in range(20)]
    text = "\n".join(lines)
    out = compress_extractive(text, policy).output.split("\n")
    assert out == lines[:3] + lines[-2:]


def test_extractive_skips_when_nothing_droppable():
    lines = [f"unique content line {i:03d} with enough words here" for i in range(12)]
    text = "\n".join(lines)
    result = compress_extractive(text)
    assert result.backend is Backend.SKIPPED
    assert result.output == text


def test_extractive_deterministic():
    text = log_dump()
    assert compress_extractive(text) == compress_extractive(text)


# -- abstractive backend --------------------------------------------------------

def test_abstractive_success_path():
    text = log_dump()
    ep = MockEndpoint(name="slm", responder=lambda req: "digest: pressure spike at 10:17")
    result = compress_abstractive(text, ep)
    assert result.backend is Backend.EXTERNAL_SLM
    assert result.ratio_k < 1.0
    # the wire request used the fixed system instruction
    sent = ep.captures[0].messages
    assert sent[0]["role"] == "system"
    assert sent[0]["content"] == ABSTRACTIVE_SYSTEM_INSTRUCTION


def test_abstractive_short_input_skipped_without_calling_endpoint():
    ep = MockEndpoint(name="slm")
    result = compress_abstractive("tiny", ep)
    assert result.backend is Backend.SKIPPED
    assert ep.captures == []


def test_abstractive_longer_output_falls_back():
    text = log_dump()
    ep = MockEndpoint(name="slm", responder=lambda req: text + "\n" + text)
    result = compress_abstractive(text, ep)
    assert result.backend is Backend.EXTRACTIVE


def test_abstractive_dirty_output_falls_back():
    text = log_dump()
    ep = MockEndpoint(name="slm", responder=lambda req: "use key sk-" + "F" * 32)
    result = compress_abstractive(text, ep)
    assert result.backend is Backend.EXTRACTIVE
    assert "sk-" + "F" * 32 not in result.output


def test_abstractive_endpoint_failure_carries_fallback():
    text = log_dump()
    ep = MockEndpoint(name="slm", fail_times=99)
    with pytest.raises(CompressionBackendError) as err:
        compress_abstractive(text, ep)
    fallback = err.value.fallback
    assert fallback.backend is Backend.EXTRACTIVE
    assert fallback.output == compress_extractive(text).output


# -- intent keywords -------------------------------------------------------------

def test_intent_keywords_markers_and_imperatives():
    text = ("TASK: summarize the incident.\n"
            "Translate the last line into French; keep names.\n"
            "the system was fine\n"
            "TASK: summarize the incident.\n")
    kws = intent_keywords(text)
    assert kws == ["summarize the incident.",
                   "Translate the last line into French"]


def test_keyword_survival():
    text = log_dump()
    compressed = compress_extractive(text).output
    assert keyword_survival(text, compressed) == 1.0
    assert keyword_survival(text, "nothing relevant") == 0.0
    assert keyword_survival("no keywords here", "anything") == 1.0
