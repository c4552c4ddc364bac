"""Command-line entry points.

Subcommands:
  decode        run the full pipeline (or --baseline for greedy) on a model
  mcts-init     run only the search stage; emits the iteration trace + pool
  theory-check  lemma/theorem verification reports for a tabular model
  bench         run an experiment spec (instances x methods x seeds)
  ablate        ablation variants on an instance family
  sweep         init-depth scaling sweep

All outputs are JSONL (or a single JSON report for theory-check) with
deterministic bytes for a fixed seed; timings go to .timing.json sidecars.
MEDAL_LOG_LEVEL in {error, info, trace} controls logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .decoder import DecodeConfig, decode, decode_greedy_baseline
from .denoisers import (
    FactorizedModel,
    RemoteDenoiser,
    TabularModel,
    fit_ngram,
    load_corpus,
)
from .errors import ConfigError, MedalError
from .harness import (
    ExperimentSpec,
    MethodSpec,
    ablation_matrix,
    build_instances,
    run_experiment,
    scaling_sweep,
)
from .mcts import run_cgmcts
from .seqcore import SeqState, Vocab
from .theory import verify_lemma1, verify_theorem1

log = logging.getLogger("medal.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "trace": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("MEDAL_LOG_LEVEL", "error").lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"MEDAL_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got {name!r}"
        )
    logging.basicConfig(
        level=_LOG_LEVELS[name],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def default_config() -> DecodeConfig:
    text = resources.files("medal.data").joinpath("default_config.json").read_text()
    return DecodeConfig.from_json(json.loads(text))


def load_config(path: str | None) -> DecodeConfig:
    if path is None:
        return default_config()
    with open(path, encoding="utf-8") as fh:
        return DecodeConfig.from_json(json.load(fh))


def load_model(spec: str, vocab_size: int | None = None, mask_id: int | None = None):
    """Model spec: a JSON file, ngram:<corpus>[?n=..&alpha=..], or remote:host:port."""
    if spec.startswith("remote:"):
        if vocab_size is None:
            raise ConfigError("remote models need --vocab-size")
        vocab = Vocab(vocab_size, mask_id if mask_id is not None else -1)
        return RemoteDenoiser(spec[len("remote:") :], vocab)
    if spec.startswith("ngram:"):
        rest = spec[len("ngram:") :]
        path, _, query = rest.partition("?")
        params = dict(kv.split("=", 1) for kv in query.split("&") if kv)
        return fit_ngram(
            load_corpus(path),
            n=int(params.get("n", 3)),
            alpha=float(params.get("alpha", 0.5)),
            vocab_size=int(params["vocab_size"]) if "vocab_size" in params else vocab_size,
        )
    with open(spec, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "probs" in obj:
        return TabularModel.from_dict(obj)
    if "rows" in obj:
        return FactorizedModel.from_dict(obj)
    raise ConfigError(f"cannot tell the model type of {spec}")


def _parse_ints(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(t) for t in text.replace(",", " ").split())


def _write_lines(path: str | None, lines: list[dict]) -> None:
    payload = "".join(json.dumps(line, separators=(",", ":")) + "\n" for line in lines)
    if path is None:
        sys.stdout.write(payload)
    else:
        Path(path).write_text(payload, encoding="utf-8")


def _apply_seed(cfg: DecodeConfig, seed: int | None) -> DecodeConfig:
    if seed is None:
        return cfg
    return replace(cfg, search=replace(cfg.search, seed=seed))


def _cmd_decode(args: argparse.Namespace) -> int:
    model = load_model(args.model, args.vocab_size, args.mask_id)
    cfg = _apply_seed(load_config(args.config), args.seed)
    prompt = _parse_ints(args.prompt)
    if args.baseline:
        result = decode_greedy_baseline(model, prompt, cfg)
    else:
        result = decode(model, prompt, cfg)
    _write_lines(args.out, [result.to_json()])
    log.info("decode finished: %d reveals", len(result.reveal_order))
    return 0


def _cmd_mcts_init(args: argparse.Namespace) -> int:
    model = load_model(args.model, args.vocab_size, args.mask_id)
    cfg = _apply_seed(load_config(args.config), args.seed)
    cfg.validate()
    prompt = _parse_ints(args.prompt)
    root = SeqState.fully_masked(model.vocab, prompt, cfg.length)
    lines: list[dict] = []

    def trace(rec: dict) -> None:
        lines.append({"kind": "trace", **rec})

    pool = run_cgmcts(model, root, cfg.search, trace=trace)
    lines.append(
        {
            "kind": "pool",
            "exhausted": pool.exhausted,
            "entries": [e.to_json() for e in pool.entries],
        }
    )
    _write_lines(args.out, lines)
    return 0


def _cmd_theory_check(args: argparse.Namespace) -> int:
    model = load_model(args.model, args.vocab_size, args.mask_id)
    if not isinstance(model, TabularModel):
        raise ConfigError("theory-check needs a tabular model")
    root = SeqState.fully_masked(model.vocab, (), model.length)
    if args.mode == "lemma1":
        report = verify_lemma1(model, root)
    else:
        budgets = list(_parse_ints(args.budgets)) or [1, 2, 4, 8]
        step_size = args.step_size if args.step_size else None
        report = verify_theorem1(
            model, root, args.k, budgets, step_size=step_size, seed=args.seed or 0
        )
    payload = json.dumps({"mode": args.mode, **report}, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(payload)
    else:
        Path(args.out).write_text(payload, encoding="utf-8")
    return 0


def _load_experiment(path: str) -> tuple[dict, list]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    instances = build_instances(obj["instances"])
    return obj, instances


def _cmd_bench(args: argparse.Namespace) -> int:
    obj, instances = _load_experiment(args.config)
    methods = []
    for m in obj["methods"]:
        methods.append(
            MethodSpec(
                id=m["id"],
                kind=m.get("kind", "medal"),
                config=DecodeConfig.from_json(m.get("config", {})),
                n=int(m.get("n", 5)),
            )
        )
    spec = ExperimentSpec(
        instances=tuple(instances),
        methods=tuple(methods),
        seeds=tuple(int(s) for s in obj.get("seeds", [1])),
        prompt=tuple(int(t) for t in obj.get("prompt", [])),
    )
    _, summary = run_experiment(spec, args.out)
    log.info("bench summary: %s", json.dumps(summary))
    if args.out is None:
        sys.stdout.write(json.dumps(summary, separators=(",", ":")) + "\n")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    obj, instances = _load_experiment(args.config)
    base_cfg = DecodeConfig.from_json(obj.get("config", {}))
    seeds = [int(s) for s in obj.get("seeds", [1])]
    prompt = tuple(int(t) for t in obj.get("prompt", []))
    _, summary = ablation_matrix(instances, base_cfg, seeds, args.out, prompt)
    if args.out is None:
        sys.stdout.write(json.dumps(summary, separators=(",", ":")) + "\n")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    obj, instances = _load_experiment(args.config)
    base_cfg = DecodeConfig.from_json(obj.get("config", {}))
    seeds = [int(s) for s in obj.get("seeds", [1])]
    prompt = tuple(int(t) for t in obj.get("prompt", []))
    lc_values = (
        list(_parse_ints(args.lc)) if args.lc else [int(v) for v in obj.get("lc_values", [0, 1, 2])]
    )
    _, summary = scaling_sweep(instances, base_cfg, seeds, lc_values, args.out, prompt)
    if args.out is None:
        sys.stdout.write(json.dumps(summary, separators=(",", ":")) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", required=True, help="model file, ngram:<corpus>, or remote:host:port")
        p.add_argument("--vocab-size", type=int, default=None)
        p.add_argument("--mask-id", type=int, default=None)

    p = sub.add_parser("decode", help="full decode (or greedy with --baseline)")
    add_model_args(p)
    p.add_argument("--prompt", default="", help="comma or space separated token ids")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--baseline", action="store_true")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("mcts-init", help="search stage only; trace + pool")
    add_model_args(p)
    p.add_argument("--prompt", default="")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mcts_init)

    p = sub.add_parser("theory-check", help="lemma1 / theorem1 reports")
    add_model_args(p)
    p.add_argument("--mode", choices=["lemma1", "theorem1"], default="lemma1")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--budgets", default="")
    p.add_argument("--step-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_theory_check)

    p = sub.add_parser("bench", help="run an experiment spec file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("ablate", help="ablation variants on a family")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="init-depth scaling sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--lc", default="", help="override lc values, e.g. 0,1,2,3")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MedalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
