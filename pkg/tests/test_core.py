import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flyspec.core import (
    DomainError,
    InvalidLogitsError,
    Vocabulary,
    argmax_token,
    normalized_entropy,
    softmax,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)
logit_vectors = st.lists(finite, min_size=2, max_size=12)


def test_softmax_uniform():
    np.testing.assert_array_equal(softmax([3.0] * 4), [0.25] * 4)


def test_softmax_hand_value():
    np.testing.assert_allclose(softmax([0.0, math.log(3)]), [0.25, 0.75], rtol=0, atol=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(InvalidLogitsError):
        softmax([0.0, float("nan")])
    with pytest.raises(InvalidLogitsError):
        softmax([0.0, float("inf")])


@given(logit_vectors)
def test_softmax_is_a_distribution(logits):
    p = softmax(logits)
    assert np.all(p >= 0) and np.all(p <= 1)
    assert abs(p.sum() - 1) <= 1e-9


@given(logit_vectors, st.floats(min_value=-100, max_value=100))
def test_softmax_shift_invariance(logits, c):
    np.testing.assert_allclose(softmax(np.array(logits) + c), softmax(logits), rtol=0, atol=1e-12)


@pytest.mark.parametrize("dist, expected", [
    ([0.1, 0.7, 0.2], 1),
    ([0.5, 0.5], 0),
    ([0, 0, 0, 1, 0], 3),
])
def test_argmax_token(dist, expected):
    assert argmax_token(dist) == expected


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=10))
def test_argmax_of_softmax_is_first_max_logit(logits):
    assert argmax_token(softmax(logits)) == logits.index(max(logits))


def test_entropy_examples():
    assert normalized_entropy([0.25] * 4) == pytest.approx(1.0, abs=1e-12)
    assert normalized_entropy([0, 0, 1, 0]) == 0.0
    assert normalized_entropy([0.5, 0.5, 0, 0]) == pytest.approx(math.log(2) / math.log(4), abs=1e-15)
    assert normalized_entropy([0.5, 0.5, 0, 0]) == pytest.approx(0.5, abs=1e-15)


def test_entropy_needs_two_tokens():
    with pytest.raises(DomainError):
        normalized_entropy([1.0])
    with pytest.raises(DomainError):
        normalized_entropy([1.0, 0.0], vocab_size=1)


def test_entropy_matches_high_precision():
    rng = random.Random(3)
    mpmath.mp.dps = 50
    for _ in range(200):
        n = rng.randint(2, 40)
        p = np.random.default_rng(rng.randint(0, 10**9)).dirichlet(np.ones(n) * rng.choice([0.1, 1, 5]))
        exact = -mpmath.fsum(mpmath.mpf(float(x)) * mpmath.log(mpmath.mpf(float(x))) for x in p if x > 0)
        exact /= mpmath.log(n)
        assert abs(normalized_entropy(p) - float(exact)) <= 1e-12


@settings(max_examples=60)
@given(st.integers(2, 30), st.randoms(use_true_random=False))
def test_entropy_permutation_invariant(n, rnd):
    p = np.random.default_rng(rnd.randint(0, 10**6)).dirichlet(np.ones(n))
    perm = list(range(n))
    rnd.shuffle(perm)
    assert normalized_entropy(p[perm]) == pytest.approx(normalized_entropy(p), abs=1e-12)


@given(st.integers(2, 300))
def test_entropy_extremes(n):
    assert normalized_entropy(np.full(n, 1.0 / n)) == pytest.approx(1.0, abs=1e-12)
    one_hot = np.zeros(n)
    one_hot[n // 2] = 1
    assert normalized_entropy(one_hot) == 0.0


def test_entropy_stays_in_unit_interval():
    p = np.full(7, 1 / 7)
    assert 0.0 <= normalized_entropy(p) <= 1.0


def test_vocabulary_invariants():
    with pytest.raises(DomainError):
        Vocabulary(1)
    with pytest.raises(DomainError):
        Vocabulary(4, eos=4)
    v = Vocabulary(4, {0: "a"}, eos=3)
    assert v.render(0) == "a" and v.render(2) == "<2>"
    with pytest.raises(DomainError):
        v.check(9)
