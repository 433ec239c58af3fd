"""Draft proposals: plain greedy drafting, prompt lookup, and the
lookup-accelerated drafter.

The accelerated drafter runs an inner exact-match speculative loop on the
drafter itself, with prompt-lookup continuations as the candidates. Exact
match keeps it lossless, so it only ever changes how many drafter passes a
proposal costs, never which tokens it contains.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .core import DomainError, greedy_token
from .models import LanguageModel


class Source(str, enum.Enum):
    MODEL_STEP = "model_step"
    LOOKUP = "lookup"


@dataclass(frozen=True)
class LookupConfig:
    max_ngram: int = 3
    min_ngram: int = 1
    span: int = 10

    def __post_init__(self):
        if self.min_ngram < 1 or self.max_ngram < 1 or self.span < 1:
            raise DomainError("lookup n-gram sizes and span must be >= 1")
        if self.min_ngram > self.max_ngram:
            raise DomainError("min_ngram must not exceed max_ngram")


@dataclass(frozen=True)
class DraftProposal:
    tokens: Tuple[int, ...]
    sources: Tuple[Source, ...]
    drafter_forward_passes: int

    @property
    def lookup_tokens(self) -> int:
        return sum(1 for s in self.sources if s is Source.LOOKUP)


def draft_autoregressive(drafter: LanguageModel, context: Sequence[int], k: int) -> DraftProposal:
    """K greedy drafter steps, one forward pass each."""
    if k < 1:
        raise DomainError("K must be >= 1")
    ctx = list(context)
    tokens = []
    for _ in range(k):
        tok = greedy_token(drafter.next_logits(ctx))
        tokens.append(tok)
        ctx.append(tok)
    return DraftProposal(tuple(tokens), (Source.MODEL_STEP,) * k, k)


def prompt_lookup(history: Sequence[int], cfg: LookupConfig = LookupConfig()) -> Optional[List[int]]:
    """Continuation of the longest suffix n-gram that recurs earlier in ``history``.

    For n from ``cfg.max_ngram`` down to ``cfg.min_ngram`` the length-n
    suffix is searched for among earlier occurrences that end before the
    suffix begins; the most recent such occurrence wins. Up to ``cfg.span``
    tokens following it are returned (fewer if the history runs out).
    Returns None when no n-gram matches.
    """
    if len(history) == 0:
        raise DomainError("prompt lookup needs a non-empty history")
    hist = list(history)
    length = len(hist)
    for n in range(cfg.max_ngram, cfg.min_ngram - 1, -1):
        suffix_start = length - n
        # an earlier occurrence at [i, i+n) must satisfy i + n <= suffix_start
        if suffix_start - n < 0:
            continue
        suffix = hist[suffix_start:]
        for i in range(suffix_start - n, -1, -1):
            if hist[i:i + n] == suffix:
                return hist[i + n:i + n + cfg.span]
    return None


def draft_with_mla(drafter: LanguageModel, context: Sequence[int], k: int,
                   cfg: LookupConfig = LookupConfig()) -> DraftProposal:
    """K draft tokens, identical to ``draft_autoregressive``, at lower cost.

    Each inner round looks up a candidate continuation, verifies it with a
    single drafter ``forward_verify`` and keeps the matching prefix plus the
    drafter's own token at the first disagreement (or the bonus position).
    Without a lookup hit the round is a plain single step.
    """
    if k < 1:
        raise DomainError("K must be >= 1")
    ctx = list(context)
    tokens: List[int] = []
    sources: List[Source] = []
    passes = 0
    while len(tokens) < k:
        remaining = k - len(tokens)
        candidate = prompt_lookup(ctx, cfg) if remaining > 1 else None
        # leave room for the correction/bonus token inside the budget
        candidate = (candidate or [])[:remaining - 1]
        passes += 1
        if not candidate:
            tok = greedy_token(drafter.next_logits(ctx))
            tokens.append(tok)
            sources.append(Source.MODEL_STEP)
            ctx.append(tok)
            continue
        rows = drafter.forward_verify(ctx, candidate)
        for i, cand in enumerate(candidate):
            choice = greedy_token(rows[i])
            if choice != cand:
                tokens.append(choice)
                sources.append(Source.MODEL_STEP)
                ctx.append(choice)
                break
            tokens.append(cand)
            sources.append(Source.LOOKUP)
            ctx.append(cand)
        else:
            bonus = greedy_token(rows[len(candidate)])
            tokens.append(bonus)
            sources.append(Source.MODEL_STEP)
            ctx.append(bonus)
    return DraftProposal(tuple(tokens), tuple(sources), passes)
