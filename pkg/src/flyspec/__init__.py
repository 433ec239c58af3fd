"""Training-free loose speculative decoding with entropy gating and deferred
windows, over desk-scale language models."""

from .core import (
    ConfigError,
    DomainError,
    FlyError,
    InsufficientDataError,
    InvalidLogitsError,
    Vocabulary,
    argmax_token,
    greedy_token,
    normalized_entropy,
    softmax,
)
from .drafting import DraftProposal, LookupConfig, Source, draft_autoregressive, draft_with_mla, prompt_lookup
from .engine import EngineConfig, Mode, RoundRecord, SessionResult, StopReason, decode, decode_target_only
from .metrics import (
    LLAMA70B,
    LLAMA405B,
    CostModel,
    DivergenceReport,
    RunSummary,
    divergence,
    estimate_speedup,
    load_cost_profile,
    mean_accepted,
    summarize,
)
from .models import LanguageModel, MarkovModel, ScriptedModel, perturb_model, train_markov
from .tokenizer import Tokenizer
from .verification import (
    Decision,
    Gate,
    MismatchRecord,
    RejectCause,
    RoundOutcome,
    Termination,
    accept_count_standard,
    defer_decide,
    gate,
    match_indicators,
    verify_fly,
    verify_standard,
    window_mismatches,
)

__version__ = "0.1.0"
