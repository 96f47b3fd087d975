"""Synthetic corpus generator with ground-truth secret offsets.

Two sample shapes cross two secret typologies:

* Lazy: verbose log/document dumps, mostly droppable boilerplate, with
  secrets either buried deep in droppable lines or carried in content lines.
* Expert: tight structured prompts where almost every line matters.

Secret surface generators are co-designed with the scanner's rules; every
emitted surface is guaranteed to match a detection rule, which is what makes
the closed-loop detection property testable.  Each surface occurs exactly
once in its sample's text and its UTF-8 byte offset is recorded.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from ..config import BenchConfig
from ..costmodel import estimate_tokens
from ..errors import ContractViolationError

PROFILES = ("Lazy", "Expert")
TYPOLOGIES = ("Personal", "Institutional")

PERSONAL_CLASSES = (
    "email", "phone", "national_insurance_number",
    "credit_card", "medical_record_id", "financial_pin",
)
INSTITUTIONAL_CLASSES = (
    "api_key", "cloud_access_key", "ipv4",
    "ipv6", "internal_hostname", "jwt",
)


@dataclass(frozen=True)
class InjectedSecret:
    class_id: str
    surface: str
    offset: int  # UTF-8 byte offset into prompt_text


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    profile: str  # Lazy | Expert
    typology: str  # Personal | Institutional
    prompt_text: str
    injected_secrets: tuple[InjectedSecret, ...]
    boilerplate_fraction: float | None
    seed: int
    preset: str = "paper40"

    @property
    def quadrant(self) -> str:
        return f"{self.profile}/{self.typology}"

    def surfaces(self) -> list[str]:
        return [s.surface for s in self.injected_secrets]


# ---------------------------------------------------------------------------
# Secret surface generators
# ---------------------------------------------------------------------------

_FIRST = ("ada", "bruno", "carla", "dev", "emre", "farah", "goran", "hana",
          "ivo", "jana", "karl", "lena", "marek", "nadia", "otto", "petra")
_LAST = ("varga", "kim", "silva", "novak", "weber", "rossi", "tanaka",
         "dubois", "okafor", "lindgren", "moreau", "kovacs")
_DOMWORD = ("postfield", "mailgrid", "boxline", "netpost", "corremail")

_NI_FIRST = "ABCEGHJKLMNPRSTWXYZ"
_NI_SECOND = "ABCEGHJKLMNPRSTWXYZ"


def _gen_email(rng: random.Random) -> str:
    return (f"{rng.choice(_FIRST)}.{rng.choice(_LAST)}{rng.randrange(10, 99)}"
            f"@{rng.choice(_DOMWORD)}{rng.randrange(1, 9)}.com")


def _gen_phone(rng: random.Random) -> str:
    if rng.random() < 0.5:
        return f"+44 7{rng.randrange(100, 999)} {rng.randrange(100000, 999999)}"
    return (f"({rng.randrange(200, 989)}) {rng.randrange(200, 999)}-"
            f"{rng.randrange(1000, 9999)}")


def _gen_nino(rng: random.Random) -> str:
    return (f"{rng.choice(_NI_FIRST)}{rng.choice(_NI_SECOND)}"
            f"{rng.randrange(100000, 999999)}{rng.choice('ABCD')}")


def _gen_credit_card(rng: random.Random) -> str:
    digits = [4] + [rng.randrange(10) for _ in range(14)]
    # Luhn check digit: doubling applies to positions even-from-the-right.
    total = 0
    for i, d in enumerate(reversed(digits)):
        d = d * 2 if i % 2 == 0 else d
        total += d - 9 if d > 9 else d
    digits.append((10 - total % 10) % 10)
    joined = "".join(str(d) for d in digits)
    return " ".join(joined[i:i + 4] for i in range(0, 16, 4))


def _gen_mrn(rng: random.Random) -> str:
    return f"MRN-{rng.randrange(10_000_000, 99_999_999)}"


def _gen_pin(rng: random.Random) -> str:
    return str(rng.randrange(100000, 999999))


_B62 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
_B36U = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_B64U = _B62 + "-_"


def _gen_api_key(rng: random.Random) -> str:
    if rng.random() < 0.5:
        return "sk-" + "".join(rng.choice(_B62) for _ in range(32))
    return "ghp_" + "".join(rng.choice(_B62) for _ in range(36))


def _gen_cloud_key(rng: random.Random) -> str:
    return "AKIA" + "".join(rng.choice(_B36U) for _ in range(16))


def _gen_ipv4(rng: random.Random) -> str:
    return f"10.{rng.randrange(1, 254)}.{rng.randrange(1, 254)}.{rng.randrange(1, 254)}"


def _gen_ipv6(rng: random.Random) -> str:
    return f"2001:db8:{rng.randrange(0x10, 0xffff):x}::{rng.randrange(0x10, 0xffff):x}"


def _gen_hostname(rng: random.Random) -> str:
    word = rng.choice(("db", "ldap", "vault", "etl", "queue", "cache"))
    site = rng.choice(("eu1", "us2", "ap1", "ops"))
    suffix = rng.choice(("internal", "corp", "intra"))
    return f"{word}-{rng.randrange(10, 99)}.{site}.{suffix}"


def _gen_jwt(rng: random.Random) -> str:
    def seg(n):
        return "".join(rng.choice(_B64U) for _ in range(n))
    return f"eyJ{seg(rng.randrange(10, 18))}.{seg(rng.randrange(8, 14))}.{seg(rng.randrange(12, 20))}"


SECRET_GENERATORS = {
    "email": _gen_email,
    "phone": _gen_phone,
    "national_insurance_number": _gen_nino,
    "credit_card": _gen_credit_card,
    "medical_record_id": _gen_mrn,
    "financial_pin": _gen_pin,
    "api_key": _gen_api_key,
    "cloud_access_key": _gen_cloud_key,
    "ipv4": _gen_ipv4,
    "ipv6": _gen_ipv6,
    "internal_hostname": _gen_hostname,
    "jwt": _gen_jwt,
}

# Embedding templates per class; {s} is the surface.  The financial PIN needs
# its label so the scanner's context rule fires on the digits.
_EMBED = {
    "email": "escalation contact {s} confirmed receipt",
    "phone": "callback number {s} left by requester",
    "national_insurance_number": "payroll reference {s} attached to claim",
    "credit_card": "card on file {s} flagged for review",
    "medical_record_id": "chart {s} pulled for audit",
    "financial_pin": "verification PIN: {s} read back by caller",
    "api_key": "service credential {s} rotated late",
    "cloud_access_key": "stale access key {s} still active",
    "ipv4": "origin address {s} rate limited",
    "ipv6": "peer address {s} negotiated",
    "internal_hostname": "upstream host {s} timed out",
    "jwt": "bearer token {s} replayed",
}


# ---------------------------------------------------------------------------
# Line stock
# ---------------------------------------------------------------------------

_TASK_SENTENCES = (
    "TASK: review the following export and list every integrity anomaly you find.",
    "TASK: audit the record below and flag entries that need follow-up.",
    "TASK: inspect this dump and identify configuration drift.",
    "TASK: check the following extract for inconsistent entries.",
)

_EXPERT_TASKS = (
    "TASK: compile a risk review from the structured fields below.",
    "TASK: prepare an account summary from the following fields.",
    "TASK: assemble an onboarding checklist from these details.",
)

_CONTENT_VERBS = (
    "replication lag", "queue backlog", "handshake renegotiation",
    "checkpoint flush", "quota rebalance", "schema migration",
    "certificate rollover", "compaction pass", "failover drill",
    "snapshot export",
)

_BOILER_KINDS = ("noise", "noise", "noise", "noise", "noise", "noise",
                 "noise", "noise", "stamp", "separator")


def _timestamp(rng: random.Random) -> str:
    return (f"2024-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"
            f"T{rng.randrange(0, 24):02d}:{rng.randrange(0, 60):02d}:{rng.randrange(0, 60):02d}")


def _content_line(rng: random.Random, uid: int) -> str:
    return (f"WARN {_timestamp(rng)} node-{rng.randrange(1, 40)} "
            f"{rng.choice(_CONTENT_VERBS)} took {rng.randrange(120, 9800)} ms "
            f"on shard {rng.randrange(1, 64)}; retry budget {rng.randrange(1, 9)} "
            f"remaining, sequence {uid:06d}")


def _noise_line(rng: random.Random) -> str:
    level = rng.choice(("INFO", "DEBUG", "TRACE"))
    detail = rng.choice((
        "heartbeat acknowledged by peer group",
        "cache probe completed without eviction",
        "scheduler tick consumed from ring buffer",
        "telemetry frame accepted by collector",
        "lease renewal queued for next window",
    ))
    return f"{level} {_timestamp(rng)} {detail} seq {rng.randrange(10000, 99999)}"


def _boiler_line(rng: random.Random) -> str:
    kind = rng.choice(_BOILER_KINDS)
    if kind == "stamp":
        return _timestamp(rng).replace("T", " ")
    if kind == "separator":
        return rng.choice(("=", "-", "*")) * rng.randrange(8, 24)
    return _noise_line(rng)


def _pick_classes(rng: random.Random, typology: str, count: int) -> list[str]:
    pool = PERSONAL_CLASSES if typology == "Personal" else INSTITUTIONAL_CLASSES
    classes = list(pool)
    rng.shuffle(classes)
    out = [classes[i % len(classes)] for i in range(count)]
    rng.shuffle(out)
    return out


def _make_surfaces(rng: random.Random, classes: list[str],
                   taken: set[str]) -> list[tuple[str, str]]:
    out = []
    for class_id in classes:
        gen = SECRET_GENERATORS[class_id]
        surface = gen(rng)
        for _ in range(50):
            if surface not in taken:
                break
            surface = gen(rng)
        taken.add(surface)
        out.append((class_id, surface))
    return out


def _finalize(sample_id: str, profile: str, typology: str, text: str,
              pairs: list[tuple[str, str]], boiler: float | None,
              seed: int, preset: str) -> BenchmarkSample:
    data = text.encode("utf-8")
    secrets = []
    for class_id, surface in pairs:
        raw = surface.encode("utf-8")
        if data.count(raw) != 1:
            raise ContractViolationError(
                f"sample {sample_id}: surface {surface!r} occurs "
                f"{data.count(raw)} times"
            )
        secrets.append(InjectedSecret(class_id, surface, data.find(raw)))
    secrets.sort(key=lambda s: s.offset)
    return BenchmarkSample(
        id=sample_id,
        profile=profile,
        typology=typology,
        prompt_text=text,
        injected_secrets=tuple(secrets),
        boilerplate_fraction=boiler,
        seed=seed,
        preset=preset,
    )


def _sample_seed(seed: int, preset: str, profile: str, typology: str, index: int) -> int:
    key = f"{seed}:{preset}:{profile}:{typology}:{index}"
    return int(hashlib.sha256(key.encode("ascii")).hexdigest()[:12], 16)


# ---------------------------------------------------------------------------
# Sample builders
# ---------------------------------------------------------------------------

def build_lazy(sample_id: str, typology: str, seed: int, bench: BenchConfig,
               secrets_count: int, preset: str = "paper40") -> BenchmarkSample:
    """Ten-ish-KB dump: boilerplate_fraction of the lines are droppable."""
    rng = random.Random(seed)
    for _ in range(30):
        taken: set[str] = set()
        classes = _pick_classes(rng, typology, secrets_count)
        pairs = _make_surfaces(rng, classes, taken)

        n_lines = rng.randrange(135, 146)
        boiler_fraction = bench.boilerplate_fraction + rng.uniform(-0.03, 0.03)
        n_boiler = round(n_lines * boiler_fraction)
        n_content = n_lines - n_boiler

        # Which of this sample's secrets sink into droppable noise lines.
        bury_share = bench.deep_bury_fraction + rng.uniform(-0.25, 0.25)
        buried = [pair for pair in pairs if rng.random() < bury_share]
        carried = [pair for pair in pairs if pair not in buried]

        content_lines = [_content_line(rng, uid) for uid in range(n_content)]
        for class_id, surface in carried:
            slot = rng.randrange(len(content_lines))
            content_lines[slot] += ", " + _EMBED[class_id].format(s=surface)

        boiler_lines = [_boiler_line(rng) for _ in range(n_boiler)]
        for class_id, surface in buried:
            phrase = _EMBED[class_id].format(s=surface)
            line = f"DEBUG {_timestamp(rng)} {phrase} during replay"
            slot = rng.randrange(min(len(boiler_lines) - 1, 5), len(boiler_lines))
            boiler_lines[slot] = line

        # Interleave so boiler noise surrounds content, with all buried lines
        # landing past the deep-bury threshold.
        lines: list[str] = []
        ci, bi = 0, 0
        order = [True] * n_content + [False] * n_boiler
        rng.shuffle(order)
        for is_content in order:
            if is_content:
                lines.append(content_lines[ci])
                ci += 1
            else:
                lines.append(boiler_lines[bi])
                bi += 1
        # Force buried-secret lines deep: swap any early one downward.
        floor = bench.deep_bury_min_line
        buried_surfaces = [s for _, s in buried]
        for i, line in enumerate(lines):
            if i >= floor:
                break
            if any(s in line for s in buried_surfaces):
                j = rng.randrange(floor, len(lines))
                lines[i], lines[j] = lines[j], lines[i]

        text = rng.choice(_TASK_SENTENCES) + "\n\n" + "\n".join(lines) + "\n"
        if estimate_tokens(text) < 2000:
            continue
        try:
            return _finalize(sample_id, "Lazy", typology, text, pairs,
                             round(boiler_fraction, 4), seed, preset)
        except ContractViolationError:
            continue
    raise ContractViolationError(f"could not build lazy sample {sample_id}")


_EXPERT_FIELDS = (
    "engagement_code: ENG-{a:05d} opened in period {b}",
    "cost_center: CC-{a:04d} allocation reviewed quarterly",
    "workflow_state: pending second approval since cycle {b}",
    "record_count: {a} entries reconciled against ledger",
    "region_scope: continental segment {b} only",
    "retention_class: standard seven year archive window",
    "review_channel: weekly operations sync, slot {b}",
    "priority_band: {b} of four, no expedite flag",
)


def build_expert(sample_id: str, typology: str, seed: int, bench: BenchConfig,
                 secrets_count: int, preset: str = "paper40") -> BenchmarkSample:
    """Tight structured prompt; droppable mass is separators and repeats."""
    rng = random.Random(seed)
    for _ in range(30):
        taken: set[str] = set()
        classes = _pick_classes(rng, typology, secrets_count)
        pairs = _make_surfaces(rng, classes, taken)

        fields = [
            tpl.format(a=rng.randrange(100, 99999), b=rng.randrange(1, 5))
            for tpl in rng.sample(_EXPERT_FIELDS, 6)
        ]
        for class_id, surface in pairs:
            fields.append(f"{class_id}_field: {_EMBED[class_id].format(s=surface)}")
        rng.shuffle(fields)

        separator = "-" * rng.randrange(24, 40)
        dup_a = fields[0]
        dup_b = fields[min(2, len(fields) - 1)]
        body = [separator] + fields[:3] + [dup_a] + fields[3:] + [separator, dup_b]

        text = (rng.choice(_EXPERT_TASKS) + "\n\n" + "\n".join(body)
                + "\n\nINSTRUCTION: answer with a numbered summary only.\n")
        tokens = estimate_tokens(text)
        if not (180 <= tokens <= 300):
            continue
        try:
            return _finalize(sample_id, "Expert", typology, text, pairs,
                             None, seed, preset)
        except ContractViolationError:
            continue
    raise ContractViolationError(f"could not build expert sample {sample_id}")


_TRIAGE_PROMPT = (
    "Find the root cause in the log below, translate the critical line into "
    "plain English, and draft a short incident email for the operations team."
)

_TRIAGE_ERRORS = (
    "ERROR {ts} shard {a} rejected write quorum, only {b} of 5 replicas acked",
    "ERROR {ts} retry storm detected on partition {a}, backoff ceiling reached",
)

_TRIAGE_CRITICAL = (
    "CRITICAL {ts} replication halted on shard {a}: checksum drift "
    "exceeded threshold after {b} consecutive mismatches"
)


def build_triage(sample_id: str, seed: int, bench: BenchConfig,
                 preset: str = "triage118") -> BenchmarkSample:
    """Log-triage scenario sample: ~11,300 tokens, one CRITICAL root cause.

    Secrets sit only in droppable noise lines, never in the error-level
    lines the local extractor forwards, so the cloud-bound sub-task payload
    stays clean by construction.
    """
    rng = random.Random(seed)
    for _ in range(30):
        taken: set[str] = set()
        pairs = _make_surfaces(rng, _pick_classes(rng, "Institutional", 2), taken)

        n_lines = 480
        lines = []
        for uid in range(n_lines):
            if rng.random() < 0.55:
                lines.append(_noise_line(rng))
            else:
                lines.append(_content_line(rng, uid))
        for class_id, surface in pairs:
            phrase = _EMBED[class_id].format(s=surface)
            slot = rng.randrange(30, n_lines - 30)
            lines[slot] = f"INFO {_timestamp(rng)} {phrase} during warmup"
        for tpl in _TRIAGE_ERRORS:
            slot = rng.randrange(100, n_lines - 100)
            lines[slot] = tpl.format(ts=_timestamp(rng),
                                     a=rng.randrange(1, 64),
                                     b=rng.randrange(1, 4))
        crit_slot = rng.randrange(200, n_lines - 200)
        lines[crit_slot] = _TRIAGE_CRITICAL.format(
            ts=_timestamp(rng), a=rng.randrange(1, 64), b=rng.randrange(3, 30))

        text = _TRIAGE_PROMPT + "\n\n" + "\n".join(lines) + "\n"
        if abs(estimate_tokens(text) - 11300) > 1500:
            continue
        try:
            return _finalize(sample_id, "Lazy", "Institutional", text, pairs,
                             None, seed, preset)
        except ContractViolationError:
            continue
    raise ContractViolationError(f"could not build triage sample {sample_id}")


# ---------------------------------------------------------------------------
# Corpus presets
# ---------------------------------------------------------------------------

SECRETS_PER_SAMPLE = {"Personal": 3, "Institutional": 4}


def gen(seed: int = 7, preset: str = "paper40", scale: int = 1,
        bench: BenchConfig | None = None) -> list[BenchmarkSample]:
    """Deterministic corpus for a preset.

    paper40: 10 samples per 2x2 quadrant; 3 secrets per Personal sample and
    4 per Institutional sample (40 samples, 140 secrets, 60/80 split).
    ``scale`` multiplies per-quadrant counts (scale 25 gives 1,000 samples).
    triage118: 118 log-triage samples of ~11,300 tokens each.
    """
    if scale < 1:
        raise ContractViolationError("scale must be >= 1")
    bench = bench or BenchConfig()
    samples: list[BenchmarkSample] = []
    if preset == "paper40":
        per_quadrant = 10 * scale
        for profile in PROFILES:
            for typology in TYPOLOGIES:
                for i in range(per_quadrant):
                    sid = f"{profile.lower()}-{typology.lower()}-{i:04d}"
                    s_seed = _sample_seed(seed, preset, profile, typology, i)
                    count = SECRETS_PER_SAMPLE[typology]
                    if profile == "Lazy":
                        samples.append(build_lazy(sid, typology, s_seed, bench,
                                                  count, preset))
                    else:
                        samples.append(build_expert(sid, typology, s_seed, bench,
                                                    count, preset))
    elif preset == "triage118":
        for i in range(118 * scale):
            sid = f"triage-{i:04d}"
            s_seed = _sample_seed(seed, preset, "Lazy", "Institutional", i)
            samples.append(build_triage(sid, s_seed, bench, preset))
    else:
        raise ContractViolationError(f"unknown preset {preset!r}")
    samples.sort(key=lambda s: s.id)
    return samples


def verify_corpus(samples: list[BenchmarkSample]) -> None:
    """Ground-truth integrity: every surface sits verbatim at its offset and
    sample sizes respect the profile bounds."""
    for sample in samples:
        data = sample.prompt_text.encode("utf-8")
        for secret in sample.injected_secrets:
            raw = secret.surface.encode("utf-8")
            if data[secret.offset:secret.offset + len(raw)] != raw:
                raise ContractViolationError(
                    f"sample {sample.id}: secret not at recorded offset"
                )
        tokens = estimate_tokens(sample.prompt_text)
        if sample.profile == "Expert" and tokens > 300:
            raise ContractViolationError(f"sample {sample.id}: expert too large")
        if sample.profile == "Lazy" and sample.preset == "paper40" and tokens < 2000:
            raise ContractViolationError(f"sample {sample.id}: lazy too small")


# ---------------------------------------------------------------------------
# Corpus files (line-delimited JSON)
# ---------------------------------------------------------------------------

def write_corpus(samples: list[BenchmarkSample], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({
                "id": s.id,
                "profile": s.profile,
                "typology": s.typology,
                "prompt_text": s.prompt_text,
                "injected_secrets": [
                    {"class_id": x.class_id, "surface": x.surface, "offset": x.offset}
                    for x in s.injected_secrets
                ],
                "boilerplate_fraction": s.boilerplate_fraction,
                "seed": s.seed,
                "preset": s.preset,
            }, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_corpus(path) -> list[BenchmarkSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            samples.append(BenchmarkSample(
                id=raw["id"],
                profile=raw["profile"],
                typology=raw["typology"],
                prompt_text=raw["prompt_text"],
                injected_secrets=tuple(
                    InjectedSecret(x["class_id"], x["surface"], x["offset"])
                    for x in raw["injected_secrets"]
                ),
                boilerplate_fraction=raw.get("boilerplate_fraction"),
                seed=raw["seed"],
                preset=raw.get("preset", "paper40"),
            ))
    return samples
