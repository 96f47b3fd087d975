"""Pairwise preference judging of baseline versus guarded responses.

The mock judge is a documented deterministic contract: the shorter response
wins, equal lengths tie.  A live judge endpoint gets a fixed comparison
instruction with the pair in randomized A/B order.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from ..errors import ContractViolationError, EndpointError

JUDGE_INSTRUCTION = (
    "You are comparing two assistant responses to the same request. Reply "
    "with exactly one word: A if response A is better, B if response B is "
    "better, or TIE if they are equally good. Judge correctness first, then "
    "brevity."
)


@dataclass
class JudgeTally:
    wins_guarded: int = 0
    wins_baseline: int = 0
    ties: int = 0
    skipped: int = 0

    @property
    def judged(self) -> int:
        return self.wins_guarded + self.wins_baseline + self.ties

    def as_dict(self) -> dict:
        total = self.judged
        return {
            "wins_guarded": self.wins_guarded,
            "wins_baseline": self.wins_baseline,
            "ties": self.ties,
            "skipped": self.skipped,
            "guarded_win_rate": (self.wins_guarded / total) if total else 0.0,
        }


def mock_preference(baseline: str, guarded: str) -> str:
    if len(guarded) < len(baseline):
        return "guarded"
    if len(baseline) < len(guarded):
        return "baseline"
    return "tie"


def _endpoint_preference(endpoint, baseline: str, guarded: str,
                         rng: random.Random) -> str:
    guarded_is_a = rng.random() < 0.5
    a, b = (guarded, baseline) if guarded_is_a else (baseline, guarded)
    messages = [
        {"role": "system", "content": JUDGE_INSTRUCTION},
        {"role": "user",
         "content": f"Response A:\n{a}\n\nResponse B:\n{b}\n\nVerdict:"},
    ]
    reply = endpoint.complete(messages, max_tokens=4).content.strip().upper()
    verdict = reply.split()[0] if reply else ""
    if verdict == "TIE":
        return "tie"
    if verdict == "A":
        return "guarded" if guarded_is_a else "baseline"
    if verdict == "B":
        return "baseline" if guarded_is_a else "guarded"
    raise EndpointError(f"unparseable judge verdict {reply!r}")


def judge_pairs(pairs: list[dict], endpoint=None, seed: int = 0) -> JudgeTally:
    """Tally preferences over pairs of {baseline_response, guarded_response}.

    With no endpoint the mock contract applies.  Endpoint failures skip the
    pair and count it.
    """
    rng = random.Random(seed)
    tally = JudgeTally()
    for pair in pairs:
        baseline = pair.get("baseline_response", "")
        guarded = pair.get("guarded_response", "")
        if not baseline or not guarded:
            raise ContractViolationError(
                f"pair {pair.get('id')!r} has an empty response"
            )
        if endpoint is None:
            verdict = mock_preference(baseline, guarded)
        else:
            try:
                verdict = _endpoint_preference(endpoint, baseline, guarded, rng)
            except EndpointError:
                tally.skipped += 1
                continue
        if verdict == "guarded":
            tally.wins_guarded += 1
        elif verdict == "baseline":
            tally.wins_baseline += 1
        else:
            tally.ties += 1
    return tally


def build_pairs(baseline_rows: list[dict], guarded_rows: list[dict]) -> list[dict]:
    """Match baseline and guarded runs by sample id, keeping complete pairs."""
    guarded_by_id = {r["id"]: r for r in guarded_rows}
    pairs = []
    for row in baseline_rows:
        other = guarded_by_id.get(row["id"])
        if other is None:
            continue
        if not row.get("response") or not other.get("response"):
            continue
        pairs.append({
            "id": row["id"],
            "baseline_response": row["response"],
            "guarded_response": other["response"],
        })
    return pairs


def write_pairs(pairs: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_pairs(path) -> list[dict]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(json.loads(line))
    return pairs
