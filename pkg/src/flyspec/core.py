"""Vocabulary, token and probability primitives shared by the rest of the package.

Logits and distributions are plain 1-D float64 numpy arrays; token ids are
Python ints. Everything here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

# probabilities below this are dropped from the entropy sum (log underflow)
ENTROPY_FLOOR = 1e-300
DIST_ATOL = 1e-9


class FlyError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FlyError, ValueError):
    """An argument lies outside the domain of an operation."""


class InvalidLogitsError(DomainError):
    pass


class InsufficientDataError(FlyError, ValueError):
    pass


class ConfigError(FlyError, ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    size: int
    rendering: Optional[Mapping[int, str]] = field(default=None, compare=False)
    eos: Optional[int] = None

    def __post_init__(self):
        if self.size < 2:
            raise DomainError(f"vocabulary size must be >= 2, got {self.size}")
        if self.eos is not None and not 0 <= self.eos < self.size:
            raise DomainError(f"eos id {self.eos} outside vocabulary of size {self.size}")

    def check(self, token: int) -> int:
        if not 0 <= token < self.size:
            raise DomainError(f"token {token} outside vocabulary of size {self.size}")
        return token

    def render(self, token: int) -> str:
        if self.rendering is not None and token in self.rendering:
            return self.rendering[token]
        return f"<{token}>"


def as_logits(values: Sequence[float], vocab_size: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidLogitsError(f"logits must be 1-D, got shape {arr.shape}")
    if vocab_size is not None and arr.shape[0] != vocab_size:
        raise InvalidLogitsError(f"expected {vocab_size} logits, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidLogitsError("logits contain non-finite entries")
    return arr


def softmax(logits: Sequence[float]) -> np.ndarray:
    """Max-subtracted softmax of a single logit vector."""
    arr = as_logits(logits)
    # same code path as softmax_rows so greedy choices agree bit-for-bit
    return softmax_rows(arr[None, :])[0]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a (n, |V|) logits matrix."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidLogitsError(f"expected a 2-D logits matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidLogitsError("logits contain non-finite entries")
    z = np.exp(arr - arr.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def check_distribution(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 1:
        raise DomainError("distribution must be a non-empty 1-D vector")
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > DIST_ATOL:
        raise DomainError("not a probability distribution")
    return p


def argmax_token(dist: Sequence[float]) -> int:
    """Index of the largest probability; ties go to the lowest index."""
    # np.argmax returns the first maximal index
    return int(np.argmax(np.asarray(dist, dtype=np.float64)))


def normalized_entropy(dist: Sequence[float], vocab_size: Optional[int] = None) -> float:
    """Shannon entropy divided by ``log |V|``, clamped to [0, 1].

    Natural log is used; the base cancels in the ratio. Terms with
    probability under ``ENTROPY_FLOOR`` contribute zero.
    """
    p = np.asarray(dist, dtype=np.float64)
    n = p.shape[0] if vocab_size is None else vocab_size
    if n < 2:
        raise DomainError("normalized entropy needs a vocabulary of at least 2 tokens")
    p = p[p > ENTROPY_FLOOR]
    h = float(-np.sum(p * np.log(p))) / math.log(n)
    return min(1.0, max(0.0, h))


def greedy_token(logits: Sequence[float]) -> int:
    """Greedy decode of one logits vector: argmax of its softmax."""
    return argmax_token(softmax(logits))
