import math
from pathlib import Path

import numpy as np
import pytest

from flyspec import perturb_model, train_markov

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance results collected for the end-of-run summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def corpus_bytes(name="corpus.txt"):
    return list((FIXTURES / name).read_bytes())


def fixture_prompts(ids, n=50, length=12, stride=60):
    return [ids[i:i + length] for i in range(0, n * stride, stride)]


def probs_with_entropy(top, h, vocab=4):
    """Distribution with argmax ``top`` and normalized entropy ``h``.

    Mass p sits on ``top`` and (1-p) is spread evenly over the rest; the
    entropy falls monotonically from 1 at p=1/|V| to 0 at p=1, so p is
    found by bisection.
    """
    def ent(p):
        q = (1 - p) / (vocab - 1)
        total = -p * math.log(p)
        if q > 0:
            total -= (1 - p) * math.log(q)
        return total / math.log(vocab)

    lo, hi = 1.0 / vocab + 1e-12, 1.0 - 1e-15
    for _ in range(200):
        mid = (lo + hi) / 2
        if ent(mid) > h:
            lo = mid
        else:
            hi = mid
    p = (lo + hi) / 2
    out = np.full(vocab, (1 - p) / (vocab - 1))
    out[top] = p
    return out


def round_logits(target_tokens, entropies, vocab=4):
    """(len, vocab) logits whose greedy tokens and entropies are as given."""
    return np.log(np.stack([probs_with_entropy(t, h, vocab)
                            for t, h in zip(target_tokens, entropies)]))


@pytest.fixture(scope="session")
def corpus_ids():
    return corpus_bytes()


@pytest.fixture(scope="session")
def target_model(corpus_ids):
    return train_markov(corpus_ids, 2, 0.1, 256)


@pytest.fixture(scope="session")
def noisy_drafter(target_model):
    return perturb_model(target_model, 0.3, 1)
