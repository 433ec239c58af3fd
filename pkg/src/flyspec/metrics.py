"""Run statistics, the analytic latency model, and report serialization.

The latency model is deliberately simple: a speculative round costs one
draft block, one target verification pass and, for loose verification,
the gate/window bookkeeping. Speedup is baseline per-token time over
per-token time under speculation. It is an estimate, not a measurement.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .core import DomainError, FlyError
from .engine import Mode, RoundRecord, SessionResult


class UndefinedTauError(FlyError, ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Per-round wall times in milliseconds.

    ``baseline_step_ms`` defaults to ``target_verify_ms``. With
    ``draft_granularity="step"`` the draft cost is ``draft_step_ms`` per
    drafter forward pass instead of a per-round constant.
    """

    name: str
    draft_round_ms: float
    draft_round_mla_ms: float
    target_verify_ms: float
    gate_window_ms: float
    baseline_step_ms: Optional[float] = None
    draft_granularity: str = "round"
    draft_step_ms: Optional[float] = None

    def __post_init__(self):
        if self.baseline_step_ms is None:
            object.__setattr__(self, "baseline_step_ms", self.target_verify_ms)
        costs = (self.draft_round_ms, self.draft_round_mla_ms, self.target_verify_ms,
                 self.gate_window_ms, self.baseline_step_ms)
        if any(c < 0 for c in costs):
            raise DomainError("costs must be non-negative")
        if self.draft_granularity not in ("round", "step"):
            raise DomainError("draft_granularity must be 'round' or 'step'")
        if self.draft_granularity == "step" and (self.draft_step_ms is None or self.draft_step_ms < 0):
            raise DomainError("per-step draft costing needs a non-negative draft_step_ms")
        if self.draft_round_mla_ms > self.draft_round_ms:
            warnings.warn(f"cost profile {self.name!r}: MLA draft time exceeds plain draft time")

    def round_cost(self, *, mla: bool, fly: bool, drafter_passes: Optional[float] = None) -> float:
        if self.draft_granularity == "step":
            if drafter_passes is None:
                raise DomainError("per-step draft costing needs the drafter pass count")
            draft = self.draft_step_ms * drafter_passes
        else:
            draft = self.draft_round_mla_ms if mla else self.draft_round_ms
        return draft + self.target_verify_ms + (self.gate_window_ms if fly else 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CostModel":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown cost profile keys: {sorted(unknown)}")
        return cls(**data)


# Table-1 style wall times for a 70B and a 405B target with an 8B drafter
LLAMA70B = CostModel("llama70b", 245.51, 197.45, 58.62, 0.45)
LLAMA405B = CostModel("llama405b", 428.30, 363.01, 200.97, 0.57)
COST_PROFILES: Dict[str, CostModel] = {p.name: p for p in (LLAMA70B, LLAMA405B)}


def load_cost_profile(name_or_path: str | Path) -> CostModel:
    key = str(name_or_path)
    if key in COST_PROFILES:
        return COST_PROFILES[key]
    path = Path(key)
    if not path.exists():
        raise DomainError(f"unknown cost profile {key!r} (built-ins: {', '.join(COST_PROFILES)})")
    return CostModel.from_dict(json.loads(path.read_text(encoding="utf-8")))


def complete_rounds(rounds: Iterable[RoundRecord]) -> List[RoundRecord]:
    return [r for r in rounds if not r.truncated]


def mean_accepted(rounds: Sequence[RoundRecord]) -> float:
    """Mean accepted tokens per round over untruncated rounds."""
    full = complete_rounds(rounds)
    if not full:
        raise UndefinedTauError("no complete rounds; mean accepted tokens is undefined")
    return sum(r.accepted_count for r in full) / len(full)


def estimate_speedup(total_tokens: int, rounds: int, cost: CostModel, *, mla: bool = False,
                     fly: bool = True, drafter_passes: Optional[float] = None) -> float:
    """Baseline time for ``total_tokens`` over the speculative time for ``rounds``.

    ``drafter_passes`` is the mean drafter forward passes per round, used
    only by per-step draft costing.
    """
    if total_tokens < 1 or rounds < 1:
        raise DomainError("need at least one token and one round")
    denom = rounds * cost.round_cost(mla=mla, fly=fly, drafter_passes=drafter_passes)
    if denom <= 0:
        raise DomainError("speculative round cost is zero")
    return total_tokens * cost.baseline_step_ms / denom


@dataclass(frozen=True)
class DivergenceReport:
    exact_match: bool
    common_prefix_len: int
    edit_distance: int
    normalized_edit_distance: float


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def divergence(candidate: Sequence[int], reference: Sequence[int]) -> DivergenceReport:
    prefix = 0
    for x, y in zip(candidate, reference):
        if x != y:
            break
        prefix += 1
    dist = levenshtein(candidate, reference)
    longest = max(len(candidate), len(reference))
    return DivergenceReport(
        exact_match=tuple(candidate) == tuple(reference),
        common_prefix_len=prefix,
        edit_distance=dist,
        normalized_edit_distance=dist / longest if longest else 0.0,
    )


@dataclass(frozen=True)
class RunSummary:
    mode: Mode
    k: int
    window: int
    theta: float
    mla: bool
    tau: float
    rounds: int
    excluded_rounds: int
    total_tokens: int
    estimated_speedup: float
    reject_cause_histogram: Dict[str, int] = field(default_factory=dict)
    deferred_accept_rate: float = 0.0
    mean_drafter_passes: float = 0.0
    divergence: Optional[DivergenceReport] = None


def summarize(session: SessionResult, cost: CostModel,
              reference: Optional[SessionResult] = None) -> RunSummary:
    """Aggregate one session into tau, reject causes, speedup and divergence.

    Truncated final rounds are left out of tau and of the speedup estimate.
    A target-only session is the baseline and has speedup 1 by definition.
    """
    cfg = session.config
    full = complete_rounds(session.rounds)
    tau = mean_accepted(session.rounds)
    tokens_in_full = sum(r.accepted_count for r in full)
    causes = Counter()
    mismatches = deferred = 0
    for r in session.rounds:
        if r.reject_cause is not None:
            causes[r.reject_cause.value] += 1
        elif r.reject_position is not None:
            causes["mismatch"] += 1
        mismatches += len(r.mismatches)
        deferred += len(r.deferred_accepts)
    passes = sum(r.drafter_forward_passes for r in full) / len(full)
    if session.mode is Mode.TARGET_ONLY:
        speedup = 1.0
    else:
        speedup = estimate_speedup(tokens_in_full, len(full), cost, mla=cfg.mla,
                                   fly=session.mode is Mode.FLY, drafter_passes=passes)
    return RunSummary(
        mode=session.mode,
        k=cfg.k,
        window=cfg.window,
        theta=cfg.theta,
        mla=cfg.mla,
        tau=tau,
        rounds=len(full),
        excluded_rounds=len(session.rounds) - len(full),
        total_tokens=len(session.generated),
        estimated_speedup=speedup,
        reject_cause_histogram=dict(sorted(causes.items())),
        deferred_accept_rate=deferred / mismatches if mismatches else 0.0,
        mean_drafter_passes=passes,
        divergence=None if reference is None else divergence(session.generated, reference.generated),
    )


ROUND_COLUMNS = ["round", "s", "termination", "reject_position", "reject_cause",
                 "entropy_at_reject", "deferred_accepts", "drafter_passes"]
SUMMARY_COLUMNS = ["prompt", "mode", "K", "W", "theta", "mla", "tau", "rounds", "tokens",
                   "est_speedup", "exact_match", "prefix_len", "edit_distance"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def rounds_csv(session: SessionResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUND_COLUMNS)
    for r in session.rounds:
        w.writerow([_fmt(v) for v in (
            r.t, r.accepted_count, r.termination.value, r.reject_position,
            None if r.reject_cause is None else r.reject_cause.value,
            r.entropy_at_reject, len(r.deferred_accepts), r.drafter_forward_passes)])
    return buf.getvalue()


def summary_row(prompt_id, s: RunSummary) -> List[str]:
    d = s.divergence
    return [_fmt(v) for v in (
        prompt_id, s.mode.value, s.k, s.window, float(s.theta), s.mla, s.tau, s.rounds,
        s.total_tokens, s.estimated_speedup,
        None if d is None else d.exact_match,
        None if d is None else d.common_prefix_len,
        None if d is None else d.normalized_edit_distance)]


def summary_csv(rows: Iterable[tuple]) -> str:
    """CSV text for ``(prompt_id, RunSummary)`` pairs, in the given order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for prompt_id, s in rows:
        w.writerow(summary_row(prompt_id, s))
    return buf.getvalue()
