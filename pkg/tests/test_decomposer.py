import json

import pytest

from contextguard.costmodel import estimate_tokens
from contextguard.decomposer import (
    Locality,
    SubTask,
    TaskKind,
    TaskTemplate,
    TemplateRegistry,
    default_local_executor,
    execute,
    extract_error_lines,
    plan,
)
from contextguard.errors import (
    ConfigurationError,
    ContractViolationError,
    DispatchError,
    RoutingBlockedError,
)

TRIAGE_ASK = ("Find the root cause in the log below and translate the "
              "critical line into plain English.")


def log_context():
    lines = [f"INFO 2024-05-01T10:00:{i:02d} routine heartbeat {i}" for i in range(25)]
    lines.insert(12, "ERROR disk latency exceeded budget on volume 7")
    lines.insert(20, "CRITICAL replication halted: checksum drift on shard 3")
    return "\n".join(lines)


# -- locality / subtask ----------------------------------------------------------

def test_locality_parse_and_str():
    assert str(Locality.parse("Local")) == "Local"
    assert Locality.parse("Tier2").tier == 2
    assert not Locality.parse("Tier0").is_local
    with pytest.raises(ConfigurationError):
        Locality.parse("Tier9")
    with pytest.raises(ConfigurationError):
        Locality(7)


def test_subtask_dependencies_point_backwards():
    SubTask(1, TaskKind.GENERATE, Locality(1), "x", depends_on=(0,))
    with pytest.raises(ContractViolationError):
        SubTask(1, TaskKind.GENERATE, Locality(1), "x", depends_on=(1,))
    with pytest.raises(ContractViolationError):
        SubTask(0, TaskKind.GENERATE, Locality(1), "x", depends_on=(2,))


# -- templates ---------------------------------------------------------------------

def test_template_rejects_cloud_context_slot():
    with pytest.raises(ConfigurationError):
        TaskTemplate(
            name="leaky",
            match_all=("x",),
            match_any=(),
            steps=({"kind": "Generate", "locality": "Tier1",
                    "payload": "{{context}}", "depends_on": []},),
        )


def test_template_rejects_undeclared_task_slot():
    with pytest.raises(ConfigurationError):
        TaskTemplate(
            name="dangling",
            match_all=("x",),
            match_any=(),
            steps=({"kind": "Generate", "locality": "Tier1",
                    "payload": "{{task:0}}", "depends_on": []},),
        )


def test_registry_first_match_wins():
    registry = TemplateRegistry.default()
    assert registry.match(TRIAGE_ASK).name == "log_triage"
    assert registry.match("translate and summarize this report").name == "translate_summarize"
    assert registry.match("write a poem") is None


def test_registry_load_json(tmp_path):
    path = tmp_path / "templates.json"
    path.write_text(json.dumps([{
        "name": "custom",
        "match_all": ["inspect"],
        "match_any": [],
        "tasks": [
            {"kind": "Extract", "locality": "Local", "payload": "{{context}}",
             "depends_on": []},
            {"kind": "Generate", "locality": "Tier2",
             "payload": "{{prompt}}\n\n{{task:0}}", "depends_on": [0]},
        ],
    }]))
    registry = TemplateRegistry.load(path)
    assert registry.match("inspect the attached trace").name == "custom"

    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(ConfigurationError):
        TemplateRegistry.load(bad)


# -- planning -----------------------------------------------------------------------

def test_plan_matches_triage_template():
    context = log_context()
    p = plan(TRIAGE_ASK, context)
    assert p.template == "log_triage"
    kinds = [t.kind for t in p.tasks]
    assert kinds == [TaskKind.EXTRACT, TaskKind.TRANSFORM, TaskKind.GENERATE]
    assert [str(t.locality) for t in p.tasks] == ["Local", "Local", "Tier1"]
    # raw context only ever rides in local payloads
    assert context in p.tasks[0].payload
    assert context not in p.tasks[2].payload
    assert "{{task:1}}" in p.tasks[2].payload  # execution-time slot survives planning


def test_plan_splits_inline_document_from_instruction():
    context = log_context()
    p = plan(TRIAGE_ASK + "\n\n" + context, "")
    assert p.template == "log_triage"
    assert context in p.tasks[0].payload
    assert p.tasks[2].payload.startswith(TRIAGE_ASK)
    assert context not in p.tasks[2].payload


def test_plan_token_accounting():
    p = plan(TRIAGE_ASK, log_context())
    assert p.cloud_payload_tokens == sum(
        estimate_tokens(t.payload) for t in p.tasks if not t.locality.is_local)
    assert p.local_payload_tokens == sum(
        estimate_tokens(t.payload) for t in p.tasks if t.locality.is_local)


def test_plan_fallback_compresses_context():
    unique = [f"request {i} served from cache shard {i % 7}" for i in range(6)]
    context = "\n".join(unique + ["heartbeat ok, queue empty"] * 50)
    p = plan("write a haiku about this log", context)
    assert p.template == "fallback"
    assert len(p.tasks) == 1
    task = p.tasks[0]
    assert task.kind is TaskKind.GENERATE
    assert task.locality.tier == 1
    assert estimate_tokens(task.payload) < estimate_tokens(
        "write a haiku about this log\n\n" + context)


def test_plan_fallback_without_context_keeps_prompt():
    p = plan("write a haiku", "")
    assert p.template == "fallback"
    assert p.tasks[0].payload == "write a haiku"
    with pytest.raises(ContractViolationError):
        plan("", "context")


def test_plan_fallback_honors_default_tier():
    p = plan("write a haiku", "", default_tier=2)
    assert p.tasks[0].locality.tier == 2


# -- local execution -----------------------------------------------------------------

def test_extract_error_lines():
    out = extract_error_lines(log_context())
    lines = out.split("\n")
    assert len(lines) == 2
    assert lines[0].startswith("ERROR")
    assert lines[1].startswith("CRITICAL")
    assert extract_error_lines("all quiet") == ""


def test_default_local_executor_refuses_generate():
    task = SubTask(0, TaskKind.GENERATE, Locality(), "x")
    with pytest.raises(ContractViolationError):
        default_local_executor(task, "x")


# -- plan execution --------------------------------------------------------------------

def capture_dispatcher(log):
    def run(task, payload):
        log.append(payload)
        return f"cloud-answer({len(payload)})"
    return run


def test_execute_runs_dependency_chain():
    context = log_context()
    p = plan(TRIAGE_ASK, context)
    sent = []
    result = execute(p, dispatchers={1: capture_dispatcher(sent)})
    assert result.completed
    assert result.response.startswith("cloud-answer")
    assert len(sent) == 1
    # the cloud payload embeds the extracted finding, not the whole log
    assert "CRITICAL replication halted" in sent[0]
    assert "routine heartbeat 3" not in sent[0]
    assert [t.status for t in result.transcripts] == ["Completed"] * 3


def test_execute_missing_dispatcher_is_config_error():
    p = plan(TRIAGE_ASK, log_context())
    with pytest.raises(ConfigurationError):
        execute(p, dispatchers={})


def test_execute_blocked_task_aborts_dependents():
    def blocked(task, payload):
        raise RoutingBlockedError("gate said no")
    p = plan(TRIAGE_ASK, log_context())
    result = execute(p, dispatchers={1: blocked})
    statuses = [t.status for t in result.transcripts]
    assert statuses == ["Completed", "Completed", "Blocked"]
    assert not result.completed
    assert result.response != ""  # last completed local output is preserved


def test_execute_failed_task_reports():
    def failing(task, payload):
        raise DispatchError("endpoint down")
    p = plan(TRIAGE_ASK, log_context())
    result = execute(p, dispatchers={1: failing})
    assert result.transcripts[-1].status.startswith("Failed")
