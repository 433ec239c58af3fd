import csv
import io
import json
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flyspec import (
    LLAMA70B,
    LLAMA405B,
    CostModel,
    EngineConfig,
    Mode,
    RoundRecord,
    Termination,
    decode,
    decode_target_only,
    divergence,
    estimate_speedup,
    load_cost_profile,
    mean_accepted,
    summarize,
)
from flyspec.core import DomainError
from flyspec.metrics import ROUND_COLUMNS, SUMMARY_COLUMNS, UndefinedTauError, rounds_csv, summary_csv

from .conftest import corpus_bytes


def rounds(*ss, truncate_last=False):
    out = [RoundRecord(t, s, Termination.ALL_ACCEPT, (0,) * s, s) for t, s in enumerate(ss)]
    if truncate_last:
        last = out[-1]
        out[-1] = RoundRecord(last.t, last.accepted_count, last.termination, last.emitted, 1)
    return out


def test_mean_accepted_examples():
    assert mean_accepted(rounds(5, 7, 9)) == 7
    assert mean_accepted(rounds(*[16] * 10)) == 16
    assert mean_accepted(rounds(3)) == 3


def test_mean_accepted_excludes_truncated_round():
    assert mean_accepted(rounds(4, 4, 9, truncate_last=True)) == 4
    with pytest.raises(UndefinedTauError):
        mean_accepted(rounds(5, truncate_last=True))


def test_table1_profiles():
    assert (LLAMA70B.draft_round_ms, LLAMA70B.draft_round_mla_ms, LLAMA70B.target_verify_ms,
            LLAMA70B.gate_window_ms) == (245.51, 197.45, 58.62, 0.45)
    assert (LLAMA405B.draft_round_ms, LLAMA405B.draft_round_mla_ms, LLAMA405B.target_verify_ms,
            LLAMA405B.gate_window_ms) == (428.30, 363.01, 200.97, 0.57)
    assert LLAMA70B.baseline_step_ms == 58.62
    assert load_cost_profile("llama405b") is LLAMA405B


def test_fly_mla_round_cost():
    assert LLAMA70B.round_cost(mla=True, fly=True) == pytest.approx(256.52, abs=1e-9)
    assert LLAMA70B.round_cost(mla=False, fly=False) == pytest.approx(245.51 + 58.62, abs=1e-9)


def test_speedup_hand_value():
    t = 100
    sp = estimate_speedup(12 * t, t, LLAMA70B, mla=True, fly=True)
    assert sp == pytest.approx(12 * 58.62 / 256.52, abs=1e-12)
    assert sp == pytest.approx(2.742, abs=1e-3)


def test_speedup_unit_case():
    cost = CostModel("unit", 0.0, 0.0, 10.0, 0.0, baseline_step_ms=10.0)
    assert estimate_speedup(7, 7, cost) == 1.0


@given(st.floats(1e-3, 1e3), st.integers(1, 500), st.integers(1, 50))
def test_speedup_scale_invariant(c, t, tau):
    base = LLAMA405B
    scaled = CostModel("s", base.draft_round_ms * c, base.draft_round_mla_ms * c,
                       base.target_verify_ms * c, base.gate_window_ms * c,
                       base.baseline_step_ms * c)
    a = estimate_speedup(tau * t, t, base, mla=True)
    b = estimate_speedup(tau * t, t, scaled, mla=True)
    assert b == pytest.approx(a, rel=1e-12)


@given(st.integers(1, 200), st.integers(1, 30))
def test_speedup_increasing_in_tau(t, tau):
    assert estimate_speedup((tau + 1) * t, t, LLAMA70B) > estimate_speedup(tau * t, t, LLAMA70B)


def test_speedup_errors():
    with pytest.raises(DomainError):
        estimate_speedup(0, 1, LLAMA70B)
    zero = CostModel("zero", 0.0, 0.0, 0.0, 0.0, baseline_step_ms=1.0)
    with pytest.raises(DomainError):
        estimate_speedup(3, 1, zero)


def test_per_step_draft_costing():
    cost = CostModel("step", 0.0, 0.0, 50.0, 1.0, draft_granularity="step", draft_step_ms=10.0)
    assert cost.round_cost(mla=True, fly=True, drafter_passes=6) == 111.0
    with pytest.raises(DomainError):
        CostModel("bad", 0.0, 0.0, 1.0, 0.0, draft_granularity="step")


def test_cost_profile_warning_and_validation(tmp_path):
    with pytest.warns(UserWarning):
        CostModel("odd", 1.0, 2.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        CostModel("neg", -1.0, 0.0, 1.0, 0.0)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(LLAMA70B.to_dict()))
    assert load_cost_profile(path) == LLAMA70B
    with pytest.raises(DomainError):
        load_cost_profile("nope")


def test_divergence_examples():
    same = divergence([1, 2, 3], [1, 2, 3])
    assert same.exact_match and same.common_prefix_len == 3 and same.normalized_edit_distance == 0
    d = divergence([0, 1, 2], [0, 1, 3])
    assert not d.exact_match and d.common_prefix_len == 2
    assert d.normalized_edit_distance == pytest.approx(1 / 3)
    assert divergence([], [1, 2, 3, 4]).normalized_edit_distance == 1.0
    assert divergence([], []).normalized_edit_distance == 0.0


@given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
def test_divergence_symmetric(a, b):
    assert divergence(a, b).edit_distance == divergence(b, a).edit_distance
    assert 0.0 <= divergence(a, b).normalized_edit_distance <= 1.0


def test_summarize_target_only(target_model):
    sess = decode_target_only(target_model, corpus_bytes()[:10], EngineConfig(max_new_tokens=30))
    s = summarize(sess, LLAMA70B)
    assert s.tau == 1 and s.estimated_speedup == 1.0 and s.divergence is None


def test_summarize_with_reference(target_model, noisy_drafter):
    prompt = corpus_bytes()[:10]
    cfg = EngineConfig(k=15, max_new_tokens=100)
    ref = decode_target_only(target_model, prompt, cfg)
    fly = summarize(decode(target_model, noisy_drafter, prompt, cfg), LLAMA70B, ref)
    assert fly.divergence is not None and fly.mode is Mode.FLY
    assert 1 <= fly.tau <= 16
    lossless = summarize(decode(target_model, noisy_drafter, prompt, cfg.with_(theta=1.0)), LLAMA70B, ref)
    assert lossless.divergence.exact_match


def test_csv_layouts(target_model, noisy_drafter):
    sess = decode(target_model, noisy_drafter, corpus_bytes()[:10], EngineConfig(k=6, max_new_tokens=40))
    rows = list(csv.reader(io.StringIO(rounds_csv(sess))))
    assert rows[0] == ROUND_COLUMNS
    assert len(rows) == len(sess.rounds) + 1
    text = summary_csv([(0, summarize(sess, LLAMA70B))])
    header = next(csv.reader(io.StringIO(text)))
    assert header == SUMMARY_COLUMNS


def test_no_warning_for_builtins():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_cost_profile("llama70b")
