"""Command line entry point: ``kashtts <subcommand> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 missing upstream artifact,
4 data validation failure, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .stages import PIPELINE, STAGES, MissingUpstream, run_stage, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_UPSTREAM, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5


def exit_code(exc: BaseException) -> int:
    from .model import ConfigMismatch

    if isinstance(exc, (ConfigError, ConfigMismatch)):
        return EXIT_CONFIG
    if isinstance(exc, MissingUpstream):
        return EXIT_UPSTREAM
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERIC
    if isinstance(exc, (ValueError, OSError, KeyError)):
        return EXIT_DATA
    return 1


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="pipeline config file")
    parser.add_argument("--jobs", type=int, default=d(1), help="parallel workers for per-utterance stages")
    parser.add_argument("--seed", type=int, default=d(None), help="override the training/sampling seed")
    parser.add_argument("--ode-steps", type=int, default=d(None), help="Euler steps at synthesis")
    parser.add_argument("--sigma-min", type=float, default=d(None), help="flow path noise floor at synthesis")
    parser.add_argument("--verbose", action="store_true", default=d(False), help="echo JSON log lines to stderr")
    parser.add_argument("--force", action="store_true", default=d(False), help="ignore cached stage outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kashtts", description="Kashmiri grapheme TTS pipeline")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}
    for name in (*STAGES, "run"):
        cmds[name] = sub.add_parser(name)
        _global_options(cmds[name], suppress=True)
    cmds["normalize-text"].add_argument("--text", help="normalize one string and print it instead")
    cmds["train"].add_argument("--steps", type=int, help="override [run] steps")
    cmds["run"].add_argument("--steps", type=int, help="override [run] steps")
    syn = cmds["synthesize"]
    syn.add_argument("--text", help="synthesize one string instead of the manifest splits")
    syn.add_argument("--speaker", help="speaker name (default: the studio speaker)")
    syn.add_argument("--out", type=Path, help="output .mel path for --text")
    return parser


def _print(record: dict) -> None:
    print(json.dumps(record, ensure_ascii=False, sort_keys=True))


def _normalize_one(text: str, cfg) -> dict:
    from .stages import _vocab_and_rules
    from .text import default_rules, default_vocab, text_to_ids

    vocab, rules = _vocab_and_rules(cfg) if cfg else (default_vocab(), default_rules())
    seq = text_to_ids(text, rules, vocab)
    return {"text": seq.text, "ids": list(seq.ids)}


def _synthesize_one(args, cfg) -> dict:
    from .features import write_mel
    from .model import synthesize
    from .stages import Workspace, _vocab_and_rules, load_trained, speaker_id

    if args.out is None:
        raise ConfigError("--text needs --out")
    ws = Workspace(cfg)
    if not (ws.dir("train") / "model.ckpt").exists():
        raise MissingUpstream("synthesize needs a completed train stage")
    model, speakers = load_trained(ws)
    vocab, rules = _vocab_and_rules(cfg)
    spk = speaker_id(speakers, args.speaker, model)
    mel = synthesize(args.text, spk, model, cfg.sampler, cfg.train.seed, vocab, rules)
    write_mel(args.out, mel, cfg.norm)
    return {"stage": "synthesize", "out": str(args.out), "frames": mel.n_frames, "speaker": spk}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        cfg = None
        if args.config is not None:
            cfg = with_overrides(load_config(args.config), args.seed, args.ode_steps, args.sigma_min,
                                 getattr(args, "steps", None))
        if args.command == "normalize-text" and args.text is not None:
            _print(_normalize_one(args.text, cfg))
            return EXIT_OK
        if cfg is None:
            raise ConfigError("--config is required")
        if args.command == "synthesize" and args.text is not None:
            _print(_synthesize_one(args, cfg))
            return EXIT_OK
        stages = PIPELINE if args.command == "run" else (args.command,)
        for stage in stages:
            res = run_stage(stage, cfg, jobs=args.jobs, force=args.force)
            _print({"stage": stage, "cached": res.cached, "key": res.key[:16], **res.info})
        return EXIT_OK
    except Exception as exc:  # mapped onto the documented exit codes
        code = exit_code(exc)
        if code == 1:
            raise
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}, ensure_ascii=False),
              file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
