"""Round verification: the exact-match rule and the loose entropy-gated,
window-deferred rule.

Both verdicts consume only the K draft tokens and the target's K+1 logits
rows already produced by one ``forward_verify`` call; nothing here runs a
model. Positions in records and outcomes are 1-based, matching the usual
notation where s counts accepted tokens including the correction or bonus.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Sequence, Tuple

import numpy as np

from .core import DomainError, argmax_token, normalized_entropy, softmax_rows


class Gate(str, enum.Enum):
    STRICT = "strict"
    DEFER = "defer"


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class RejectCause(str, enum.Enum):
    GATE_STRICT = "gate_strict"
    WINDOW_DIVERGENCE = "window_divergence"
    BOUNDARY = "boundary"


class Termination(str, enum.Enum):
    ALL_ACCEPT = "all_accept"
    STRICT_REJECT = "strict_reject"
    DEFER_REJECT = "defer_reject"
    BOUNDARY_REJECT = "boundary_reject"


_TERMINATION_FOR = {
    RejectCause.GATE_STRICT: Termination.STRICT_REJECT,
    RejectCause.WINDOW_DIVERGENCE: Termination.DEFER_REJECT,
    RejectCause.BOUNDARY: Termination.BOUNDARY_REJECT,
}


@dataclass(frozen=True)
class MismatchRecord:
    position: int
    entropy: float
    gate: Gate
    decision: Decision
    window_mismatches: Optional[int] = None
    reject_cause: Optional[RejectCause] = None


@dataclass(frozen=True)
class RoundOutcome:
    accepted_count: int
    emitted: Tuple[int, ...]
    termination: Termination
    deferred_accepts: FrozenSet[int] = field(default_factory=frozenset)
    records: Tuple[MismatchRecord, ...] = ()
    target_tokens: Tuple[int, ...] = ()

    @property
    def rejection(self) -> Optional[MismatchRecord]:
        if self.termination is Termination.ALL_ACCEPT or not self.records:
            return None
        return self.records[-1]

    @property
    def reject_position(self) -> Optional[int]:
        if self.termination is Termination.ALL_ACCEPT:
            return None
        return self.accepted_count

    @property
    def reject_cause(self) -> Optional[RejectCause]:
        # exact-match rounds carry no records, hence no cause
        rec = self.rejection
        return None if rec is None else rec.reject_cause

    @property
    def entropy_at_reject(self) -> Optional[float]:
        rec = self.rejection
        return None if rec is None else rec.entropy


def match_indicators(draft: Sequence[int], target_tokens: Sequence[int]) -> Tuple[int, ...]:
    """Per-position 0/1 agreement of the draft with the target's greedy tokens.

    ``target_tokens`` may be longer than the draft (the bonus position is
    ignored); it may not be shorter.
    """
    if len(target_tokens) < len(draft):
        raise DomainError(
            f"{len(draft)} draft tokens but only {len(target_tokens)} target positions")
    return tuple(int(d == t) for d, t in zip(draft, target_tokens))


def target_greedy_tokens(target_logits: np.ndarray) -> Tuple[int, ...]:
    probs = softmax_rows(target_logits)
    return tuple(argmax_token(row) for row in probs)


def accept_count_standard(delta: Sequence[int], k: Optional[int] = None) -> int:
    """First mismatch position (1-based), or K+1 when every draft matches."""
    k = len(delta) if k is None else k
    if len(delta) != k:
        raise DomainError(f"match vector has length {len(delta)}, expected {k}")
    for i, d in enumerate(delta, start=1):
        if not d:
            return i
    return k + 1


def gate(h: float, theta: float) -> Gate:
    """Entropy gate at a mismatch: confident targets are handled strictly.

    ``theta >= 1`` is strict for every entropy, including ``h == 1``, so a
    threshold of one reproduces the exact-match rule.
    """
    if theta >= 1.0 or h < theta:
        return Gate.STRICT
    return Gate.DEFER


def window_mismatches(delta: Sequence[int], j: int, w: int) -> int:
    """Number of mismatches at positions j+1 .. j+W (1-based)."""
    k = len(delta)
    if not 1 <= j <= k:
        raise DomainError(f"position {j} outside 1..{k}")
    if w < 0:
        raise DomainError("window must be >= 0")
    if j + w > k:
        raise DomainError(f"window {j + 1}..{j + w} runs past K={k}")
    return sum(1 - d for d in delta[j:j + w])


def defer_decide(h: float, theta: float, delta: Sequence[int], j: int, w: int,
                 k: Optional[int] = None) -> Tuple[Decision, Optional[RejectCause]]:
    """Accept a mismatch iff the gate defers, the window fits and stays clean."""
    k = len(delta) if k is None else k
    if len(delta) != k:
        raise DomainError(f"match vector has length {len(delta)}, expected {k}")
    if not 1 <= j <= k:
        raise DomainError(f"position {j} outside 1..{k}")
    if delta[j - 1]:
        raise DomainError(f"defer_decide called at matched position {j}")
    if gate(h, theta) is Gate.STRICT:
        return Decision.REJECT, RejectCause.GATE_STRICT
    if j + w > k:
        return Decision.REJECT, RejectCause.BOUNDARY
    if window_mismatches(delta, j, w) > 0:
        return Decision.REJECT, RejectCause.WINDOW_DIVERGENCE
    return Decision.ACCEPT, None


def _check_round(draft: Sequence[int], target_logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(target_logits, dtype=np.float64)
    k = len(draft)
    if k < 1:
        raise DomainError("a round needs at least one draft token")
    if logits.ndim != 2 or logits.shape[0] != k + 1:
        raise DomainError(f"expected {k + 1} target logits rows, got shape {logits.shape}")
    return logits


def _emit(draft: Sequence[int], target_tokens: Sequence[int], s: int) -> Tuple[int, ...]:
    # draft prefix, then the target's own token at position s
    return tuple(draft[:s - 1]) + (target_tokens[s - 1],)


def verify_standard(draft: Sequence[int], target_logits: np.ndarray) -> RoundOutcome:
    """Exact-match verification of one round."""
    logits = _check_round(draft, target_logits)
    target = target_greedy_tokens(logits)
    delta = match_indicators(draft, target)
    k = len(draft)
    s = accept_count_standard(delta, k)
    if s == k + 1:
        return RoundOutcome(s, _emit(draft, target, s), Termination.ALL_ACCEPT, target_tokens=target)
    return RoundOutcome(s, _emit(draft, target, s), Termination.STRICT_REJECT, target_tokens=target)


def verify_fly(draft: Sequence[int], target_logits: np.ndarray, theta: float, window: int) -> RoundOutcome:
    """Loose verification of one round.

    Mismatches are visited in ascending order. Each one has its target
    entropy gated against ``theta``; deferred mismatches survive only if
    the next ``window`` positions exist within the round and all match.
    The first rejected mismatch ends the round with the target's token at
    that position; if none is rejected the whole draft plus the bonus token
    is emitted.
    """
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    if window < 0:
        raise DomainError("window must be >= 0")
    logits = _check_round(draft, target_logits)
    k = len(draft)
    probs = softmax_rows(logits)
    target = tuple(argmax_token(row) for row in probs)
    delta = match_indicators(draft, target)
    vocab_size = logits.shape[1]

    records = []
    deferred = []
    for j in (i for i, d in enumerate(delta, start=1) if not d):
        h = normalized_entropy(probs[j - 1], vocab_size)
        g = gate(h, theta)
        decision, cause = defer_decide(h, theta, delta, j, window, k)
        n_w = window_mismatches(delta, j, window) if g is Gate.DEFER and j + window <= k else None
        records.append(MismatchRecord(j, h, g, decision, n_w, cause))
        if decision is Decision.REJECT:
            return RoundOutcome(j, _emit(draft, target, j), _TERMINATION_FOR[cause],
                                frozenset(deferred), tuple(records), target)
        # an accepted deferral has a clean window, so the next mismatch lies past it
        assert all(delta[j:j + window])
        deferred.append(j)
    return RoundOutcome(k + 1, _emit(draft, target, k + 1), Termination.ALL_ACCEPT,
                        frozenset(deferred), tuple(records), target)
