"""Command-line interface.

Subcommands: ``train-model``, ``run``, ``compare``, ``sweep``, ``report``.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import RunConfig, load_run_config, parse_mode
from .core import ConfigError, FlyError
from .engine import EngineConfig, Mode, SessionResult, decode
from .metrics import (
    CostModel,
    RunSummary,
    load_cost_profile,
    rounds_csv,
    summary_csv,
    summarize,
)
from .models import MarkovModel, perturb_model, train_markov
from .tokenizer import IngestionError, Tokenizer, read_text

log = logging.getLogger("flyspec")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# ablation grids used when --values is omitted
SWEEP_DEFAULTS = {
    "W": [0, 4, 6, 8],
    "theta": [0.0, 0.3, 0.6, 1.0],
    "K": [10, 15, 20, 25],
}
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("FLY_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# model files


def tokenizer_of(model: MarkovModel) -> Tokenizer:
    info = model.meta.get("tokenizer")
    return Tokenizer.byte_level() if info is None else Tokenizer.from_dict(info)


def corpus_tokens(text: str, tok: Tokenizer) -> List[int]:
    if tok.eos_id is None:
        return tok.tokenize(text)
    # with EOS enabled every line is a document terminated by EOS
    out: List[int] = []
    for line in text.splitlines():
        if line.strip():
            out.extend(tok.tokenize(line))
            out.append(tok.eos_id)
    return out


def cmd_train_model(args) -> int:
    text = read_text(args.corpus)
    if args.tokenizer == "byte":
        tok = Tokenizer.byte_level(args.eos)
    else:
        tok = Tokenizer.from_corpus(text, args.eos)
    tokens = corpus_tokens(text, tok)
    model = train_markov(tokens, args.order, args.smoothing, tok.vocabulary)
    model.meta["tokenizer"] = tok.to_dict()
    if args.noise_scale:
        model = perturb_model(model, args.noise_scale, args.noise_seed)
    model.save(args.out)
    print(f"wrote {args.out}: |V|={model.vocab.size} order={model.order} "
          f"contexts={len(model.table)}")
    return EXIT_OK


# runs


@dataclasses.dataclass
class _Loaded:
    cfg: RunConfig
    target: MarkovModel
    drafter: MarkovModel
    tokenizer: Tokenizer
    prompts: List[List[int]]
    cost: CostModel


def _load(args) -> _Loaded:
    cfg = load_run_config(args.config)
    engine = cfg.engine
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = parse_mode(args.mode)
    for flag, attr in (("K", "k"), ("W", "window"), ("theta", "theta"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[attr] = value
    if overrides:
        try:
            engine = engine.with_(**overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "cost_profile", None):
        cfg.cost_profile = args.cost_profile
    try:
        target = MarkovModel.load(cfg.target_model)
        drafter = MarkovModel.load(cfg.drafter_model)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load model: {exc}") from exc
    if target.vocab.size != drafter.vocab.size:
        raise ConfigError("drafter and target vocabularies differ")
    if engine.eos is None and target.vocab.eos is not None:
        engine = engine.with_(eos=target.vocab.eos)
    cfg.engine = engine
    tok = tokenizer_of(target)
    prompts = [tok.tokenize(p) for p in cfg.prompts]
    if any(len(p) == 0 for p in prompts):
        raise ConfigError("a prompt tokenizes to nothing")
    try:
        cost = load_cost_profile(cfg.cost_profile)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return _Loaded(cfg, target, drafter, tok, prompts, cost)


def _header(args) -> str:
    if args.no_timestamp:
        return ""
    return f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n"


def _run_sessions(ld: _Loaded, jobs: Sequence[Tuple[int, EngineConfig]]) -> List[SessionResult]:
    out = []
    for i, engine in jobs:
        out.append(decode(ld.target, ld.drafter, ld.prompts[i], engine))
    return out


def _write_outputs(outdir: Path, files: Dict[str, str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (outdir / name).write_text(text, encoding="utf-8")


def _report_text(title: str, rows: List[Tuple[object, RunSummary]], ld: _Loaded) -> str:
    lines = [title, "=" * len(title),
             f"cost profile: {ld.cost.name} "
             "(speedups are analytic estimates, not measurements)", ""]
    lines.append(f"{'prompt':>6}  {'mode':<12}{'K':>4}{'W':>4}{'theta':>7}  {'tau':>7}  "
                 f"{'speedup':>8}  {'exact':>5}  {'edit':>7}")
    for pid, s in rows:
        d = s.divergence
        exact = "" if d is None else ("yes" if d.exact_match else "no")
        edit = "" if d is None else f"{d.normalized_edit_distance:.4f}"
        lines.append(f"{pid!s:>6}  {s.mode.value:<12}{s.k:>4}{s.window:>4}{s.theta:>7.2f}  "
                     f"{s.tau:>7.3f}  {s.estimated_speedup:>7.3f}x  {exact:>5}  {edit:>7}")
    lines.append("")
    groups: Dict[tuple, List[RunSummary]] = {}
    for _, s in rows:
        groups.setdefault((s.mode.value, s.k, s.window, s.theta), []).append(s)
    lines.append("means over prompts:")
    for (mode, k, w, theta), ss in groups.items():
        tau = sum(s.tau for s in ss) / len(ss)
        sp = sum(s.estimated_speedup for s in ss) / len(ss)
        lines.append(f"  {mode:<12} K={k:<3} W={w:<2} theta={theta:<4}  tau={tau:.3f}  "
                     f"speedup={sp:.3f}x")
    return "\n".join(lines) + "\n"


def _execute(args, title: str, jobs: List[Tuple[int, EngineConfig]], baseline_mode: bool,
             summary_name: str, traces: bool = True) -> int:
    ld = args._loaded
    sessions = _run_sessions(ld, jobs)
    references: Dict[int, SessionResult] = {}
    if baseline_mode:
        for (i, engine), sess in zip(jobs, sessions):
            if engine.mode is Mode.TARGET_ONLY:
                references[i] = sess
    rows = []
    files: Dict[str, str] = {}
    header = _header(args)
    for (i, engine), sess in zip(jobs, sessions):
        ref = None if engine.mode is Mode.TARGET_ONLY else references.get(i)
        rows.append((i, summarize(sess, ld.cost, ref)))
        if traces:
            stem = f"{i}_{engine.mode.value}"
            files[f"rounds_{stem}.csv"] = header + rounds_csv(sess)
            files[f"session_{stem}.json"] = _transcript(sess, ld.tokenizer)
    files[summary_name] = header + summary_csv(rows)
    files["report.txt"] = _report_text(title, rows, ld)
    _write_outputs(ld.cfg.output_dir, files)
    print(files["report.txt"], end="")
    return EXIT_OK


def _transcript(sess: SessionResult, tok: Tokenizer) -> str:
    data = sess.to_dict()
    data["prompt_text"] = tok.detokenize(sess.prompt)
    data["generated_text"] = tok.detokenize(sess.generated)
    return json.dumps(data, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    ld = args._loaded
    jobs = [(i, ld.cfg.engine) for i in range(len(ld.prompts))]
    return _execute(args, f"run ({ld.cfg.engine.mode.value})", jobs, False, "run_summary.csv")


def cmd_compare(args) -> int:
    ld = args._loaded
    base = ld.cfg.engine
    jobs = []
    for i in range(len(ld.prompts)):
        for mode in (Mode.TARGET_ONLY, Mode.STANDARD, Mode.FLY):
            jobs.append((i, base.with_(mode=mode)))
    return _execute(args, "compare: target-only vs standard vs fly", jobs, True, "run_summary.csv")


def _parse_axis_values(axis: str, raw: Optional[str]) -> list:
    if raw is None:
        return list(SWEEP_DEFAULTS[axis])
    try:
        if axis == "theta":
            values = [float(v) for v in raw.split(",")]
        else:
            values = [int(v) for v in raw.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --values for axis {axis}: {raw!r}") from exc
    for v in values:
        if axis == "theta" and not 0.0 <= v <= 1.0:
            raise ConfigError(f"theta value {v} outside [0, 1]")
        if axis == "W" and v < 0:
            raise ConfigError(f"W value {v} must be >= 0")
        if axis == "K" and v < 1:
            raise ConfigError(f"K value {v} must be >= 1")
    return values


def cmd_sweep(args) -> int:
    values = _parse_axis_values(args.axis, args.values)
    ld = args._loaded
    attr = {"W": "window", "theta": "theta", "K": "k"}[args.axis]
    base = ld.cfg.engine
    if base.mode is Mode.TARGET_ONLY:
        raise ConfigError("sweeps need a speculative mode")
    jobs = [(i, base.with_(**{attr: v})) for i in range(len(ld.prompts)) for v in values]
    return _execute(args, f"sweep over {args.axis}: {values}", jobs, False, "sweep.csv",
                    traces=False)


def cmd_report(args) -> int:
    path = Path(args.summary)
    if not path.is_file():
        raise ConfigError(f"no such summary file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        print("(empty summary)")
        return EXIT_OK
    cols = list(rows[0].keys())
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) for c in cols}
    print("  ".join(c.rjust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(r[c].rjust(widths[c]) for c in cols))
    return EXIT_OK


# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fly", description="Loose speculative decoding over toy language models.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train-model", help="train and save a smoothed Markov model")
    t.add_argument("--corpus", required=True)
    t.add_argument("--order", type=int, default=2)
    t.add_argument("--smoothing", type=float, default=0.1)
    t.add_argument("--tokenizer", choices=["byte", "whitespace"], default="byte")
    t.add_argument("--eos", action="store_true", help="terminate each corpus line with EOS")
    t.add_argument("--noise-scale", type=float, default=0.0,
                   help="perturb counts with log-normal noise (makes a misaligned drafter)")
    t.add_argument("--noise-seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_model, needs_config=False)

    def run_flags(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--mode")
        sp.add_argument("--K", type=int)
        sp.add_argument("--W", type=int)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--cost-profile", dest="cost_profile")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--no-timestamp", action="store_true")
        sp.add_argument("--out")

    r = sub.add_parser("run", help="decode every prompt in one mode")
    run_flags(r)
    r.set_defaults(func=cmd_run, needs_config=True)

    c = sub.add_parser("compare", help="target-only vs standard vs fly on every prompt")
    run_flags(c)
    c.set_defaults(func=cmd_compare, needs_config=True)

    s = sub.add_parser("sweep", help="sweep one hyper-parameter")
    run_flags(s)
    s.add_argument("--axis", choices=["W", "theta", "K"], required=True)
    s.add_argument("--values", help="comma-separated values (default: the ablation grid)")
    s.set_defaults(func=cmd_sweep, needs_config=True)

    rep = sub.add_parser("report", help="print a summary CSV as a table")
    rep.add_argument("summary")
    rep.set_defaults(func=cmd_report, needs_config=False)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.needs_config:
            if args.command == "sweep":
                _parse_axis_values(args.axis, args.values)
            args._loaded = _load(args)
    except (ConfigError, IngestionError) as exc:
        print(f"fly: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, IngestionError) as exc:
        print(f"fly: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FlyError, OSError) as exc:
        print(f"fly: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
