"""Template-driven task decomposition.

A user intent over a large context is split into ordered atomic sub-tasks,
each tagged to run locally or on a cloud tier.  Planning is rule-based:
templates match on prompt keywords and expand into a task skeleton.  The
point of the split is payload minimality: cloud-bound tasks carry only the
user's instruction plus upstream task outputs, never raw context bytes.

Payload templates use three slot forms, substituted at different times:
``{{prompt}}`` and ``{{context}}`` at planning time, ``{{task:N}}`` at
execution time with the output of task N.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .compressor import CompressionPolicy, compress_extractive
from .costmodel import estimate_tokens
from .errors import (
    ConfigurationError,
    ContractViolationError,
    DispatchError,
    EndpointError,
    RoutingBlockedError,
)


class TaskKind(str, Enum):
    EXTRACT = "Extract"
    TRANSFORM = "Transform"
    GENERATE = "Generate"


@dataclass(frozen=True)
class Locality:
    """Local execution (tier is None) or a cloud tier 0-3."""

    tier: int | None = None

    def __post_init__(self):
        if self.tier is not None and self.tier not in (0, 1, 2, 3):
            raise ConfigurationError(f"locality tier must be 0-3, got {self.tier}")

    @property
    def is_local(self) -> bool:
        return self.tier is None

    def __str__(self) -> str:
        return "Local" if self.is_local else f"Tier{self.tier}"

    @classmethod
    def parse(cls, text: str) -> "Locality":
        if text == "Local":
            return cls()
        m = re.fullmatch(r"Tier([0-3])", text)
        if not m:
            raise ConfigurationError(f"bad locality {text!r}; use Local or Tier0..Tier3")
        return cls(int(m.group(1)))


LOCAL = Locality()


@dataclass(frozen=True)
class SubTask:
    index: int
    kind: TaskKind
    locality: Locality
    payload: str
    depends_on: tuple[int, ...] = ()

    def __post_init__(self):
        if self.index < 0:
            raise ContractViolationError("task index must be >= 0")
        if any(d >= self.index for d in self.depends_on):
            raise ContractViolationError(
                f"task {self.index} depends on a later or same index"
            )


@dataclass(frozen=True)
class SubTaskPlan:
    tasks: tuple[SubTask, ...]
    cloud_payload_tokens: int
    local_payload_tokens: int
    template: str  # registry template name, or "fallback"


_SLOT_RE = re.compile(r"\{\{task:(\d+)\}\}")


@dataclass(frozen=True)
class TaskTemplate:
    name: str
    match_all: tuple[str, ...]
    match_any: tuple[str, ...]
    steps: tuple[dict, ...]  # kind, locality, payload, depends_on

    def __post_init__(self):
        for i, step in enumerate(self.steps):
            TaskKind(step["kind"])
            loc = Locality.parse(step["locality"])
            if not loc.is_local and "{{context}}" in step["payload"]:
                raise ConfigurationError(
                    f"template {self.name!r} step {i}: cloud-bound payloads "
                    "must not embed raw context"
                )
            for m in _SLOT_RE.finditer(step["payload"]):
                if int(m.group(1)) not in step.get("depends_on", []):
                    raise ConfigurationError(
                        f"template {self.name!r} step {i}: slot {m.group(0)} "
                        "not in depends_on"
                    )

    def matches(self, prompt: str) -> bool:
        lowered = prompt.lower()
        if any(k.lower() not in lowered for k in self.match_all):
            return False
        if self.match_any and not any(k.lower() in lowered for k in self.match_any):
            return False
        return True


_DEFAULT_TEMPLATES = [
    TaskTemplate(
        name="log_triage",
        match_all=("translate",),
        match_any=("root cause", "triage", "diagnose"),
        steps=(
            {"kind": "Extract", "locality": "Local",
             "payload": "{{context}}", "depends_on": []},
            {"kind": "Transform", "locality": "Local",
             "payload": "{{task:0}}", "depends_on": [0]},
            {"kind": "Generate", "locality": "Tier1",
             "payload": "{{prompt}}\n\nRelevant finding:\n{{task:1}}",
             "depends_on": [1]},
        ),
    ),
    TaskTemplate(
        name="translate_summarize",
        match_all=("translate",),
        match_any=("summarize", "summarise", "summary"),
        steps=(
            {"kind": "Transform", "locality": "Local",
             "payload": "{{context}}", "depends_on": []},
            {"kind": "Generate", "locality": "Tier1",
             "payload": "{{prompt}}\n\nMaterial:\n{{task:0}}",
             "depends_on": [0]},
        ),
    ),
]


class TemplateRegistry:
    """Ordered template list; first match wins."""

    def __init__(self, templates):
        self.templates = list(templates)

    @classmethod
    def default(cls) -> "TemplateRegistry":
        return cls(_DEFAULT_TEMPLATES)

    @classmethod
    def load(cls, path) -> "TemplateRegistry":
        """JSON file: list of {name, match_all, match_any, tasks:[{kind,
        locality, payload, depends_on}]}."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list) or not raw:
            raise ConfigurationError(f"template file {path}: expected a non-empty list")
        templates = []
        for entry in raw:
            try:
                templates.append(TaskTemplate(
                    name=entry["name"],
                    match_all=tuple(entry.get("match_all", [])),
                    match_any=tuple(entry.get("match_any", [])),
                    steps=tuple(entry["tasks"]),
                ))
            except KeyError as exc:
                raise ConfigurationError(
                    f"template file {path}: missing key {exc}"
                ) from None
        return cls(templates)

    def match(self, prompt: str) -> TaskTemplate | None:
        for template in self.templates:
            if template.matches(prompt):
                return template
        return None


def plan(prompt: str, context: str, registry: TemplateRegistry | None = None,
         compression_policy: CompressionPolicy | None = None,
         default_tier: int = 1) -> SubTaskPlan:
    """Build an ordered sub-task plan for ``prompt`` over ``context``.

    The instruction is the prompt's first paragraph; anything after the
    first blank line is treated as inline context (callers often paste a
    document under a one-line ask).  Template matching runs on the
    instruction.  A matched template expands with planning-time slots
    substituted; execution-time ``{{task:N}}`` slots stay verbatim.
    Unmatched prompts become a single cloud Generate over the extractively
    compressed context.
    """
    if not prompt:
        raise ContractViolationError("prompt must be non-empty")
    registry = registry or TemplateRegistry.default()

    instruction, _, body = prompt.partition("\n\n")
    template = registry.match(instruction)
    if template is not None:
        full_context = "\n".join(part for part in (body, context) if part)
        tasks = []
        for i, step in enumerate(template.steps):
            payload = (step["payload"]
                       .replace("{{prompt}}", instruction)
                       .replace("{{context}}", full_context))
            tasks.append(SubTask(
                index=i,
                kind=TaskKind(step["kind"]),
                locality=Locality.parse(step["locality"]),
                payload=payload,
                depends_on=tuple(step.get("depends_on", [])),
            ))
        name = template.name
    else:
        compressed = compress_extractive(context, compression_policy)
        payload = prompt if not context else f"{prompt}\n\n{compressed.output}"
        tasks = [SubTask(0, TaskKind.GENERATE, Locality(default_tier), payload)]
        name = "fallback"

    cloud = sum(estimate_tokens(t.payload) for t in tasks if not t.locality.is_local)
    local = sum(estimate_tokens(t.payload) for t in tasks if t.locality.is_local)
    return SubTaskPlan(tuple(tasks), cloud, local, name)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

_ERROR_LINE = re.compile(r"\b(?:ERROR|CRITICAL|FATAL)\b")


def extract_error_lines(text: str) -> str:
    """Default local Extract: keep error-level lines, order preserved."""
    kept = [ln for ln in text.split("\n") if _ERROR_LINE.search(ln)]
    return "\n".join(kept)


def default_local_executor(task: SubTask, payload: str,
                           transform_hook=None) -> str:
    """Rule-based local execution: Extract selects error-level lines;
    Transform applies ``transform_hook`` (identity when absent)."""
    if task.kind is TaskKind.EXTRACT:
        return extract_error_lines(payload)
    if task.kind is TaskKind.TRANSFORM:
        return transform_hook(payload) if transform_hook else payload
    raise ContractViolationError(
        f"local executor cannot run a {task.kind.value} task"
    )


@dataclass(frozen=True)
class TaskTranscript:
    index: int
    kind: TaskKind
    locality: Locality
    payload: str
    output: str
    status: str  # Completed | Blocked | Failed | Aborted


@dataclass(frozen=True)
class ExecutionResult:
    response: str
    transcripts: tuple[TaskTranscript, ...]

    @property
    def completed(self) -> bool:
        return all(t.status == "Completed" for t in self.transcripts)


def execute(plan_: SubTaskPlan, local_executor=None,
            dispatchers: dict[int, object] | None = None) -> ExecutionResult:
    """Run the plan in dependency order.

    ``dispatchers`` maps tier -> callable(task, payload) -> response text;
    cloud-bound payloads pass the router's outbound gate inside those
    callables.  A blocked or failed task aborts its dependents; independent
    chains keep running, and partial transcripts are always returned.
    """
    local_executor = local_executor or default_local_executor
    dispatchers = dispatchers or {}

    outputs: dict[int, str] = {}
    dead: set[int] = set()
    transcripts: list[TaskTranscript] = []
    response = ""

    for task in plan_.tasks:
        if any(d in dead for d in task.depends_on):
            transcripts.append(TaskTranscript(
                task.index, task.kind, task.locality, "", "", "Aborted"))
            dead.add(task.index)
            continue
        payload = task.payload
        for dep in task.depends_on:
            payload = payload.replace(f"{{{{task:{dep}}}}}", outputs[dep])

        if task.locality.is_local:
            output = local_executor(task, payload)
            status = "Completed"
        else:
            dispatcher = dispatchers.get(task.locality.tier)
            if dispatcher is None:
                raise ConfigurationError(
                    f"no dispatcher configured for tier {task.locality.tier}"
                )
            try:
                output = dispatcher(task, payload)
                status = "Completed"
            except RoutingBlockedError:
                output, status = "", "Blocked"
            except (DispatchError, EndpointError) as exc:
                output, status = "", f"Failed: {exc}"

        transcripts.append(TaskTranscript(
            task.index, task.kind, task.locality, payload, output, status))
        if status == "Completed":
            outputs[task.index] = output
            response = output
        else:
            dead.add(task.index)

    return ExecutionResult(response, tuple(transcripts))
