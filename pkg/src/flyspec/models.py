"""Desk-scale language models used as drafter and target.

Every model maps a token context to a logits vector deterministically.
``forward_verify`` gives the target-side view of one speculative round:
the logits at each of the K draft positions plus the bonus position.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .core import DomainError, FlyError, InsufficientDataError, Vocabulary, as_logits

MODEL_FORMAT = "flyspec-markov"
MODEL_FORMAT_VERSION = 1


class LanguageModel(ABC):
    """Deterministic next-token model over a fixed vocabulary."""

    vocab: Vocabulary

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    @abstractmethod
    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        """Logits for the token following ``context``."""

    def forward_verify(self, context: Sequence[int], draft: Sequence[int]) -> np.ndarray:
        """Logits for every draft position plus the bonus position.

        Row ``i`` (0-based) equals ``next_logits(context + draft[:i])``, so
        the result has ``len(draft) + 1`` rows.
        """
        if len(draft) == 0:
            raise DomainError("forward_verify needs at least one draft token")
        for tok in draft:
            self.vocab.check(tok)
        ctx = list(context)
        rows = []
        for i in range(len(draft) + 1):
            rows.append(self.next_logits(ctx))
            if i < len(draft):
                ctx.append(draft[i])
        return np.stack(rows)


class ScriptedModel(LanguageModel):
    """Fixture model whose logits depend only on the absolute position.

    ``script[n]`` is returned for any context of length ``n``; past the end
    of the script the ``fallback`` logits are used (uniform by default).
    """

    def __init__(self, script: Iterable[Sequence[float]], vocab: Vocabulary | int,
                 fallback: Optional[Sequence[float]] = None):
        self.vocab = vocab if isinstance(vocab, Vocabulary) else Vocabulary(vocab)
        n = self.vocab.size
        self.script = [_frozen(as_logits(row, n)) for row in script]
        self.fallback = _frozen(as_logits(np.zeros(n) if fallback is None else fallback, n))

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        for tok in context:
            self.vocab.check(tok)
        pos = len(context)
        return self.script[pos] if pos < len(self.script) else self.fallback


class MarkovModel(LanguageModel):
    """Order-n count model with additive smoothing.

    The predictive distribution after a context whose last ``order`` tokens
    form the window ``w`` is ``(counts[w] + alpha) / (total[w] + alpha*|V|)``.
    Unseen windows, and contexts shorter than ``order``, are uniform.
    Logits are the log of that distribution, so ``softmax`` recovers it.
    """

    def __init__(self, vocab: Vocabulary | int, order: int, smoothing: float,
                 counts: Optional[Dict[Tuple[int, ...], np.ndarray]] = None,
                 meta: Optional[dict] = None):
        if order < 1:
            raise DomainError("order must be >= 1")
        if not smoothing > 0:
            raise DomainError("smoothing must be > 0")
        self.vocab = vocab if isinstance(vocab, Vocabulary) else Vocabulary(vocab)
        self.order = int(order)
        self.smoothing = float(smoothing)
        n = self.vocab.size
        table = {}
        for key, row in (counts or {}).items():
            arr = np.asarray(row, dtype=np.float64)
            if arr.shape != (n,):
                raise DomainError(f"count vector for {key} has shape {arr.shape}, want ({n},)")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise DomainError(f"count vector for {key} has negative or non-finite entries")
            if len(key) != self.order:
                raise DomainError(f"context {key} does not have length {self.order}")
            table[tuple(int(t) for t in key)] = _frozen(arr)
        self.table: Dict[Tuple[int, ...], np.ndarray] = table
        # free-form provenance, e.g. the tokenizer the corpus went through
        self.meta = dict(meta or {})
        self._uniform = _frozen(np.full(n, -math.log(n)))
        self._logits_for = lru_cache(maxsize=None)(self._compute_logits)

    def _compute_logits(self, window: Tuple[int, ...]) -> np.ndarray:
        row = self.table.get(window)
        if row is None:
            return self._uniform
        a = self.smoothing
        return _frozen(np.log(row + a) - math.log(row.sum() + a * self.vocab.size))

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        if len(context) < self.order:
            for tok in context:
                self.vocab.check(tok)
            return self._uniform
        window = tuple(context[-self.order:])
        for tok in window:
            self.vocab.check(tok)
        return self._logits_for(window)

    def probs(self, context: Sequence[int]) -> np.ndarray:
        logits = self.next_logits(context)
        p = np.exp(logits - logits.max())
        return p / p.sum()

    def __eq__(self, other):
        if not isinstance(other, MarkovModel):
            return NotImplemented
        return (self.vocab == other.vocab and self.order == other.order
                and self.smoothing == other.smoothing
                and self.table.keys() == other.table.keys()
                and all(np.array_equal(v, other.table[k]) for k, v in self.table.items()))

    __hash__ = None  # type: ignore[assignment]

    # persistence

    def to_dict(self) -> dict:
        vocab = {"size": self.vocab.size, "eos": self.vocab.eos}
        if self.vocab.rendering is not None:
            vocab["rendering"] = [self.vocab.rendering.get(i) for i in range(self.vocab.size)]
        table = {}
        for key in sorted(self.table):
            row = self.table[key]
            nz = np.nonzero(row)[0]
            # sparse rows keep files small for byte-level vocabularies
            table[" ".join(map(str, key))] = {str(int(i)): float(row[i]) for i in nz}
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "vocab": vocab,
            "order": self.order,
            "smoothing": self.smoothing,
            "table": table,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovModel":
        if data.get("format") != MODEL_FORMAT:
            raise FlyError(f"not a {MODEL_FORMAT} model file")
        if data.get("version") != MODEL_FORMAT_VERSION:
            raise FlyError(f"unsupported model file version {data.get('version')!r}")
        v = data["vocab"]
        rendering = None
        if v.get("rendering") is not None:
            rendering = {i: s for i, s in enumerate(v["rendering"]) if s is not None}
        vocab = Vocabulary(int(v["size"]), rendering, v.get("eos"))
        counts = {}
        for key, sparse in data["table"].items():
            row = np.zeros(vocab.size)
            for idx, c in sparse.items():
                row[int(idx)] = c
            counts[tuple(int(t) for t in key.split())] = row
        return cls(vocab, data["order"], data["smoothing"], counts, data.get("meta"))

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=1)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MarkovModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_markov(corpus: Sequence[int], order: int, smoothing: float,
                 vocab: Vocabulary | int) -> MarkovModel:
    """Count every (window -> next token) transition in ``corpus``."""
    vocab = vocab if isinstance(vocab, Vocabulary) else Vocabulary(vocab)
    if order < 1:
        raise DomainError("order must be >= 1")
    if len(corpus) <= order:
        raise InsufficientDataError(
            f"corpus of {len(corpus)} tokens is too short for an order-{order} model")
    for tok in corpus:
        vocab.check(tok)
    counts: Dict[Tuple[int, ...], np.ndarray] = {}
    for i in range(len(corpus) - order):
        key = tuple(corpus[i:i + order])
        row = counts.get(key)
        if row is None:
            row = counts[key] = np.zeros(vocab.size)
        row[corpus[i + order]] += 1.0
    return MarkovModel(vocab, order, smoothing, counts)


def perturb_model(model: MarkovModel, noise_scale: float, seed: int) -> MarkovModel:
    """Copy of ``model`` with every count scaled by log-normal noise.

    Windows are visited in sorted order so the result depends only on
    ``(model, noise_scale, seed)``.
    """
    if noise_scale < 0:
        raise DomainError("noise_scale must be >= 0")
    if noise_scale == 0:
        return MarkovModel(model.vocab, model.order, model.smoothing, dict(model.table), model.meta)
    rng = np.random.default_rng(seed)
    n = model.vocab.size
    counts = {key: model.table[key] * rng.lognormal(0.0, noise_scale, n)
              for key in sorted(model.table)}
    return MarkovModel(model.vocab, model.order, model.smoothing, counts, model.meta)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def shares_vocabulary(a: LanguageModel, b: LanguageModel) -> bool:
    return a.vocab.size == b.vocab.size and a.vocab.eos == b.vocab.eos


__all__ = [
    "LanguageModel",
    "MarkovModel",
    "ScriptedModel",
    "perturb_model",
    "shares_vocabulary",
    "train_markov",
]
