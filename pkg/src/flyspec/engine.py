"""The speculative decode loop and the target-only baseline."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, DomainError, greedy_token, softmax
from .drafting import LookupConfig, draft_autoregressive, draft_with_mla
from .models import LanguageModel, shares_vocabulary
from .verification import (
    Decision,
    Gate,
    MismatchRecord,
    RejectCause,
    RoundOutcome,
    Termination,
    verify_fly,
    verify_standard,
)

log = logging.getLogger(__name__)

TRANSCRIPT_VERSION = 1


class Mode(str, enum.Enum):
    FLY = "fly"
    STANDARD = "standard"
    TARGET_ONLY = "target_only"


class StopReason(str, enum.Enum):
    EOS = "eos"
    MAX_TOKENS = "max_tokens"


@dataclass(frozen=True)
class EngineConfig:
    """Decode settings.

    Defaults follow the small-target setting (K=15, W=6, theta=0.3);
    expensive targets typically use K=25. ``temperature=None`` means greedy
    emission; otherwise correction and bonus tokens are sampled with a
    generator seeded by ``seed`` while matching stays greedy.
    """

    k: int = 15
    window: int = 6
    theta: float = 0.3
    mode: Mode = Mode.FLY
    mla: bool = False
    lookup: LookupConfig = field(default_factory=LookupConfig)
    max_new_tokens: int = 128
    eos: Optional[int] = None
    temperature: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.k < 1:
            raise ConfigError("K must be >= 1")
        if self.window < 0:
            raise ConfigError("W must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.temperature is not None and not self.temperature > 0:
            raise ConfigError("temperature must be > 0")

    def with_(self, **changes) -> "EngineConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    accepted_count: int
    termination: Termination
    emitted: Tuple[int, ...]
    kept: int
    drafter_forward_passes: int = 0
    target_forward_passes: int = 1
    deferred_accepts: Tuple[int, ...] = ()
    mismatches: Tuple[MismatchRecord, ...] = ()

    @property
    def truncated(self) -> bool:
        return self.kept < len(self.emitted)

    @property
    def reject_position(self) -> Optional[int]:
        return None if self.termination is Termination.ALL_ACCEPT else self.accepted_count

    @property
    def reject_cause(self) -> Optional[RejectCause]:
        if self.termination is Termination.ALL_ACCEPT or not self.mismatches:
            return None
        return self.mismatches[-1].reject_cause

    @property
    def entropy_at_reject(self) -> Optional[float]:
        if self.termination is Termination.ALL_ACCEPT or not self.mismatches:
            return None
        return self.mismatches[-1].entropy


@dataclass(frozen=True)
class SessionResult:
    prompt: Tuple[int, ...]
    generated: Tuple[int, ...]
    rounds: Tuple[RoundRecord, ...]
    stop_reason: StopReason
    config: EngineConfig

    @property
    def mode(self) -> Mode:
        return self.config.mode

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["mode"] = self.config.mode.value
        return {
            "version": TRANSCRIPT_VERSION,
            "config": cfg,
            "prompt": list(self.prompt),
            "generated": list(self.generated),
            "stop_reason": self.stop_reason.value,
            "rounds": [_round_to_dict(r) for r in self.rounds],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionResult":
        if data.get("version") != TRANSCRIPT_VERSION:
            raise DomainError(f"unsupported transcript version {data.get('version')!r}")
        cfg = dict(data["config"])
        cfg["lookup"] = LookupConfig(**cfg["lookup"])
        return cls(
            prompt=tuple(data["prompt"]),
            generated=tuple(data["generated"]),
            rounds=tuple(_round_from_dict(r) for r in data["rounds"]),
            stop_reason=StopReason(data["stop_reason"]),
            config=EngineConfig(**cfg),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SessionResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _round_to_dict(r: RoundRecord) -> dict:
    return {
        "t": r.t,
        "s": r.accepted_count,
        "termination": r.termination.value,
        "emitted": list(r.emitted),
        "kept": r.kept,
        "drafter_passes": r.drafter_forward_passes,
        "target_passes": r.target_forward_passes,
        "deferred_accepts": list(r.deferred_accepts),
        "mismatches": [
            {
                "j": m.position,
                "h": m.entropy,
                "gate": m.gate.value,
                "decision": m.decision.value,
                "n_w": m.window_mismatches,
                "cause": None if m.reject_cause is None else m.reject_cause.value,
            }
            for m in r.mismatches
        ],
    }


def _round_from_dict(d: dict) -> RoundRecord:
    mismatches = tuple(
        MismatchRecord(m["j"], m["h"], Gate(m["gate"]), Decision(m["decision"]), m["n_w"],
                       None if m["cause"] is None else RejectCause(m["cause"]))
        for m in d["mismatches"]
    )
    return RoundRecord(d["t"], d["s"], Termination(d["termination"]), tuple(d["emitted"]),
                       d["kept"], d["drafter_passes"], d["target_passes"],
                       tuple(d["deferred_accepts"]), mismatches)


class _Emitter:
    """Chooses correction/bonus tokens: greedy, or seeded sampling."""

    def __init__(self, cfg: EngineConfig):
        self.temperature = cfg.temperature
        self.rng = None if cfg.temperature is None else np.random.default_rng(cfg.seed)

    def pick(self, logits: np.ndarray) -> int:
        if self.rng is None:
            return greedy_token(logits)
        p = softmax(np.asarray(logits) / self.temperature)
        return int(self.rng.choice(len(p), p=p))


def _keep(emitted: Sequence[int], produced: int, cfg: EngineConfig) -> Tuple[int, Optional[StopReason]]:
    """How many emitted tokens survive the EOS and budget cuts."""
    kept = len(emitted)
    stop = None
    if cfg.eos is not None and cfg.eos in emitted:
        kept = emitted.index(cfg.eos) + 1
        stop = StopReason.EOS
    room = cfg.max_new_tokens - produced
    if kept >= room:
        if kept > room or stop is None:
            stop = StopReason.MAX_TOKENS
        kept = min(kept, room)
    return kept, stop


def decode_target_only(target: LanguageModel, prompt: Sequence[int], cfg: EngineConfig) -> SessionResult:
    """One target step per token; each step is recorded as a round with s=1."""
    if len(prompt) == 0:
        raise DomainError("prompt must be non-empty")
    cfg = cfg.with_(mode=Mode.TARGET_ONLY)
    emitter = _Emitter(cfg)
    ctx = list(prompt)
    generated: List[int] = []
    rounds: List[RoundRecord] = []
    stop = StopReason.MAX_TOKENS
    while len(generated) < cfg.max_new_tokens:
        tok = emitter.pick(target.next_logits(ctx))
        ctx.append(tok)
        generated.append(tok)
        rounds.append(RoundRecord(len(rounds), 1, Termination.ALL_ACCEPT, (tok,), 1))
        if cfg.eos is not None and tok == cfg.eos:
            stop = StopReason.EOS
            break
    return SessionResult(tuple(prompt), tuple(generated), tuple(rounds), stop, cfg)


def decode(target: LanguageModel, drafter: LanguageModel, prompt: Sequence[int],
           cfg: EngineConfig) -> SessionResult:
    """Speculative decode: draft K, verify once, emit, repeat.

    Stops at the first emitted EOS (tokens after it are dropped, even if the
    verdict accepted them) or when ``max_new_tokens`` is reached, cutting
    the final round's emission to fit.
    """
    if cfg.mode is Mode.TARGET_ONLY:
        return decode_target_only(target, prompt, cfg)
    if len(prompt) == 0:
        raise DomainError("prompt must be non-empty")
    if not shares_vocabulary(target, drafter):
        raise ConfigError("drafter and target must share one vocabulary")
    emitter = _Emitter(cfg)
    ctx = list(prompt)
    generated: List[int] = []
    rounds: List[RoundRecord] = []
    stop: Optional[StopReason] = None
    while stop is None:
        if cfg.mla:
            proposal = draft_with_mla(drafter, ctx, cfg.k, cfg.lookup)
        else:
            proposal = draft_autoregressive(drafter, ctx, cfg.k)
        logits = target.forward_verify(ctx, proposal.tokens)
        if cfg.mode is Mode.FLY:
            outcome = verify_fly(proposal.tokens, logits, cfg.theta, cfg.window)
        else:
            outcome = verify_standard(proposal.tokens, logits)
        emitted = _finalize(outcome, logits, emitter)
        kept, stop = _keep(emitted, len(generated), cfg)
        rounds.append(RoundRecord(
            t=len(rounds),
            accepted_count=outcome.accepted_count,
            termination=outcome.termination,
            emitted=emitted,
            kept=kept,
            drafter_forward_passes=proposal.drafter_forward_passes,
            target_forward_passes=1,
            deferred_accepts=tuple(sorted(outcome.deferred_accepts)),
            mismatches=outcome.records,
        ))
        generated.extend(emitted[:kept])
        ctx.extend(emitted[:kept])
        log.debug("round %d: s=%d %s", len(rounds) - 1, outcome.accepted_count,
                  outcome.termination.value)
    return SessionResult(tuple(prompt), tuple(generated), tuple(rounds), stop, cfg)


def _finalize(outcome: RoundOutcome, logits: np.ndarray, emitter: _Emitter) -> Tuple[int, ...]:
    if emitter.rng is None:
        return outcome.emitted
    # the last emitted token is the correction or bonus at row s-1
    s = outcome.accepted_count
    return outcome.emitted[:-1] + (emitter.pick(logits[s - 1]),)
