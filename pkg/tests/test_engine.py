import numpy as np
import pytest

from flyspec import (
    EngineConfig,
    Mode,
    ScriptedModel,
    SessionResult,
    StopReason,
    Termination,
    decode,
    decode_target_only,
    greedy_token,
    perturb_model,
    train_markov,
)
from flyspec.core import ConfigError, DomainError

from .conftest import corpus_bytes, fixture_prompts


def one_hot_logits(tokens, v):
    return [np.eye(v)[t] * 4.0 for t in tokens]


def test_target_only_scripted_unroll():
    script = one_hot_logits([3, 1, 4, 1, 0], 5)
    prompt = [2]
    m = ScriptedModel([np.zeros(5)] + script, 5)
    res = decode_target_only(m, prompt, EngineConfig(max_new_tokens=5))
    assert res.generated == (3, 1, 4, 1, 0)
    assert res.stop_reason is StopReason.MAX_TOKENS
    assert all(r.accepted_count == 1 for r in res.rounds)
    assert res.mode is Mode.TARGET_ONLY


def test_target_only_stops_at_eos():
    m = ScriptedModel([np.zeros(5)] + one_hot_logits([1, 2, 4, 3, 3], 5), 5)
    res = decode_target_only(m, [0], EngineConfig(max_new_tokens=10, eos=4))
    assert res.generated == (1, 2, 4)
    assert res.stop_reason is StopReason.EOS


def test_self_drafting_accepts_every_round(target_model):
    prompt = corpus_bytes()[:10]
    cfg = EngineConfig(k=5, max_new_tokens=60)
    res = decode(target_model, target_model, prompt, cfg)
    assert all(r.termination is Termination.ALL_ACCEPT for r in res.rounds)
    assert all(r.accepted_count == 6 for r in res.rounds)
    assert res.generated == decode_target_only(target_model, prompt, cfg).generated


def test_standard_is_lossless(target_model, noisy_drafter):
    for prompt in fixture_prompts(corpus_bytes(), n=10):
        cfg = EngineConfig(k=7, mode=Mode.STANDARD, max_new_tokens=80)
        spd = decode(target_model, noisy_drafter, prompt, cfg)
        base = decode_target_only(target_model, prompt, cfg)
        assert spd.generated == base.generated


def test_theta_one_matches_standard(target_model, noisy_drafter):
    for prompt in fixture_prompts(corpus_bytes(), n=10):
        cfg = EngineConfig(k=9, theta=1.0, max_new_tokens=70)
        fly = decode(target_model, noisy_drafter, prompt, cfg)
        std = decode(target_model, noisy_drafter, prompt, cfg.with_(mode=Mode.STANDARD))
        assert fly.generated == std.generated
        assert [r.accepted_count for r in fly.rounds] == [r.accepted_count for r in std.rounds]


def test_round_accounting(target_model, noisy_drafter):
    prompt = corpus_bytes()[100:120]
    cfg = EngineConfig(k=6, window=2, theta=0.3, max_new_tokens=50)
    res = decode(target_model, noisy_drafter, prompt, cfg)
    assert len(res.generated) == 50
    emitted = sum((r.emitted for r in res.rounds), ())
    assert emitted[:50] == res.generated
    assert all(r.target_forward_passes == 1 for r in res.rounds)
    assert all(r.drafter_forward_passes == 6 for r in res.rounds)
    assert all(1 <= r.accepted_count <= 7 for r in res.rounds)
    assert sum(r.kept for r in res.rounds) == 50
    assert all(not r.truncated for r in res.rounds[:-1])


def test_budget_truncates_final_round():
    m = train_markov([0, 1, 2] * 10, 1, 1.0, 3)
    res = decode(m, m, [0], EngineConfig(k=3, max_new_tokens=6))
    # rounds emit 4 tokens each: 4 then 2 of 4
    assert [r.kept for r in res.rounds] == [4, 2]
    assert res.rounds[-1].truncated
    assert len(res.generated) == 6
    assert res.stop_reason is StopReason.MAX_TOKENS


def test_eos_inside_block_stops_generation():
    m = train_markov([0, 1, 2, 3] * 10, 1, 1.0, 4)
    res = decode(m, m, [0], EngineConfig(k=6, eos=3, max_new_tokens=50))
    assert res.generated == (1, 2, 3)
    assert res.stop_reason is StopReason.EOS
    assert res.rounds[0].truncated


def test_eos_as_bonus_token():
    m = train_markov([0, 1, 2, 3] * 10, 1, 1.0, 4)
    res = decode(m, m, [0], EngineConfig(k=2, eos=3, max_new_tokens=50))
    # draft (1, 2) accepted, bonus 3 is EOS
    assert res.generated == (1, 2, 3)
    assert len(res.rounds) == 1 and not res.rounds[0].truncated
    assert res.stop_reason is StopReason.EOS


def test_eos_equals_budget_reports_eos():
    m = train_markov([0, 1, 2, 3] * 10, 1, 1.0, 4)
    res = decode(m, m, [0], EngineConfig(k=2, eos=3, max_new_tokens=3))
    assert res.generated == (1, 2, 3) and res.stop_reason is StopReason.EOS


def test_vocabulary_mismatch_is_config_error(target_model):
    small = train_markov([0, 1, 0, 1], 1, 1.0, 2)
    with pytest.raises(ConfigError):
        decode(target_model, small, [1, 2], EngineConfig())


def test_empty_prompt(target_model):
    with pytest.raises(DomainError):
        decode(target_model, target_model, [], EngineConfig())
    with pytest.raises(DomainError):
        decode_target_only(target_model, [], EngineConfig())


@pytest.mark.parametrize("kwargs", [{"k": 0}, {"window": -1}, {"theta": 1.2},
                                    {"max_new_tokens": 0}, {"temperature": 0.0}])
def test_engine_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EngineConfig(**kwargs)


def test_mla_changes_cost_not_tokens(target_model, noisy_drafter):
    prompt = corpus_bytes()[:30]
    cfg = EngineConfig(k=10, max_new_tokens=120)
    plain = decode(target_model, noisy_drafter, prompt, cfg)
    mla = decode(target_model, noisy_drafter, prompt, cfg.with_(mla=True))
    assert plain.generated == mla.generated
    assert sum(r.drafter_forward_passes for r in mla.rounds) <= sum(
        r.drafter_forward_passes for r in plain.rounds)


def test_determinism_and_sampling(target_model, noisy_drafter):
    prompt = corpus_bytes()[:15]
    cfg = EngineConfig(k=8, max_new_tokens=60, temperature=0.8, seed=3)
    a = decode(target_model, noisy_drafter, prompt, cfg)
    b = decode(target_model, noisy_drafter, prompt, cfg)
    assert a == b
    c = decode(target_model, noisy_drafter, prompt, cfg.with_(seed=4))
    assert c.generated != a.generated
    t1 = decode_target_only(target_model, prompt, cfg)
    assert t1 == decode_target_only(target_model, prompt, cfg)


def test_transcript_round_trip(tmp_path, target_model, noisy_drafter):
    res = decode(target_model, noisy_drafter, corpus_bytes()[:20],
                 EngineConfig(k=5, max_new_tokens=40, mla=True))
    res.save(tmp_path / "s.json")
    assert SessionResult.load(tmp_path / "s.json") == res


def test_scripted_fly_round():
    # target wants 0,0,0,... everywhere with a flat-ish distribution; drafter
    # proposes 1 at the second position only
    v = 3
    flat = np.log([0.4, 0.35, 0.25])
    target = ScriptedModel([flat] * 40, v)
    drafter_script = [np.eye(v)[0] * 4.0] * 40
    drafter_script[2] = np.eye(v)[1] * 4.0
    drafter = ScriptedModel(drafter_script, v)
    res = decode(target, drafter, [0], EngineConfig(k=8, window=3, theta=0.3, max_new_tokens=9))
    first = res.rounds[0]
    assert first.accepted_count == 9
    assert first.deferred_accepts == (2,)
    assert res.generated[1] == 1
    base = decode_target_only(target, [0], EngineConfig(max_new_tokens=9))
    assert base.generated == (0,) * 9
    assert greedy_token(flat) == 0
