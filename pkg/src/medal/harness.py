"""Experiment harness: seeded method-vs-baseline runs with JSONL metrics.

A run is the cross product of instances, methods and seeds. Every row
carries deterministic fields only (method, instance, seed, exact joint
log-prob when the instance is tabular, chosen-candidate cumulative gain,
model-call count, final tokens); a summary row with per-method aggregates
closes the file. Wall-clock timings are real but non-reproducible, so they
go to a separate .timing.json sidecar instead of the metrics stream.

Per-row failures are captured as error rows; one bad cell never aborts a
sweep.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .decoder import DecodeConfig, DecodeResult, decode, decode_greedy_baseline
from .denoisers import (
    CountingDenoiser,
    Denoiser,
    TabularModel,
    fit_ngram,
    load_corpus,
)
from .errors import ConfigError, MedalError
from .families import trap_family

METHOD_KINDS = ("medal", "greedy", "best_of_n")


@dataclass(frozen=True)
class MethodSpec:
    id: str
    kind: str
    config: DecodeConfig
    n: int = 5  # best_of_n only

    def validate(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise ConfigError(f"unknown method kind {self.kind!r}")
        if self.kind == "best_of_n" and self.n < 1:
            raise ConfigError("best_of_n needs n >= 1")
        self.config.validate()


@dataclass(frozen=True)
class ExperimentSpec:
    instances: tuple[tuple[str, Denoiser], ...]
    methods: tuple[MethodSpec, ...]
    seeds: tuple[int, ...]
    prompt: tuple[int, ...] = ()

    def validate(self) -> None:
        if not self.instances or not self.methods or not self.seeds:
            raise ConfigError("instances, methods and seeds must be non-empty")
        ids = [m.id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise ConfigError("method ids must be unique")
        for m in self.methods:
            m.validate()


def build_instances(obj) -> list[tuple[str, Denoiser]]:
    """Instance list from a JSON description (single object or list)."""
    if isinstance(obj, list):
        out: list[tuple[str, Denoiser]] = []
        for item in obj:
            out.extend(build_instances(item))
        return out
    kind = obj.get("kind")
    if kind == "trap_family":
        fam = trap_family(
            count=int(obj.get("count", 20)),
            seed=int(obj.get("seed", 0)),
            length=int(obj.get("length", 4)),
            vocab_size=int(obj.get("vocab_size", 3)),
        )
        seed = int(obj.get("seed", 0))
        return [(f"trap-{seed}-{i}", m) for i, m in enumerate(fam)]
    if kind == "tabular":
        path = Path(obj["path"])
        return [(path.stem, TabularModel.from_file(path))]
    if kind == "ngram":
        path = Path(obj["path"])
        model = fit_ngram(
            load_corpus(path),
            n=int(obj.get("n", 3)),
            alpha=float(obj.get("alpha", 0.5)),
            vocab_size=obj.get("vocab_size"),
        )
        return [(f"ngram-{path.stem}", model)]
    raise ConfigError(f"unknown instance kind {kind!r}")


def best_of_n_decode(
    model: Denoiser,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    n: int,
    seed: int,
) -> tuple[DecodeResult, list[DecodeResult]]:
    """Majority completion over n sub-decodes with derived seeds seed*n + i.

    Ties break toward the lexicographically smallest completion; the
    returned result is the first sub-decode that produced the winner.
    """
    subs: list[DecodeResult] = []
    for i in range(n):
        sub_seed = seed * n + i
        sub_cfg = replace(cfg, search=replace(cfg.search, seed=sub_seed))
        subs.append(decode(model, prompt, sub_cfg))
    counts: dict[tuple[int, ...], int] = {}
    for res in subs:
        key = res.final.gen_tokens()
        counts[key] = counts.get(key, 0) + 1
    winner = max(counts, key=lambda k: (counts[k], tuple(-t for t in k)))
    chosen = next(r for r in subs if r.final.gen_tokens() == winner)
    return chosen, subs


def _run_cell(
    model: Denoiser, prompt: Sequence[int], method: MethodSpec, seed: int
) -> tuple[DecodeResult, int]:
    counted = CountingDenoiser(model)
    cfg = replace(method.config, search=replace(method.config.search, seed=seed))
    if method.kind == "medal":
        result = decode(counted, prompt, cfg)
    elif method.kind == "greedy":
        result = decode_greedy_baseline(counted, prompt, cfg)
    else:
        result, _ = best_of_n_decode(counted, prompt, cfg, method.n, seed)
    return result, counted.calls


def _result_row(
    instance_id: str,
    model: Denoiser,
    method: MethodSpec,
    seed: int,
    result: DecodeResult,
    calls: int,
) -> dict:
    logprob = None
    if isinstance(model, TabularModel):
        logprob = model.joint_logprob(result.final.gen_tokens())
        if logprob == float("-inf"):
            logprob = None  # zero-mass completion; keep JSON finite
    gain = 0.0
    if result.pool is not None and result.chosen_candidate >= 0:
        gain = result.pool.entries[result.chosen_candidate].score
    return {
        "kind": "row",
        "instance": instance_id,
        "method": method.id,
        "seed": seed,
        "logprob": logprob,
        "cumulative_gain": gain,
        "model_calls": calls,
        "tokens": list(result.final.gen_tokens()),
    }


def _summary(rows: list[dict], method_ids: Sequence[str]) -> dict:
    per_method = {}
    for mid in method_ids:
        mine = [r for r in rows if r.get("method") == mid and "error" not in r]
        logps = [r["logprob"] for r in mine if r.get("logprob") is not None]
        gains = [r["cumulative_gain"] for r in mine]
        calls = [r["model_calls"] for r in mine]
        per_method[mid] = {
            "rows": len(mine),
            "errors": sum(
                1 for r in rows if r.get("method") == mid and "error" in r
            ),
            "mean_logprob": float(np.mean(logps)) if logps else None,
            "std_logprob": float(np.std(logps)) if logps else None,
            "mean_cumulative_gain": float(np.mean(gains)) if gains else None,
            "mean_model_calls": float(np.mean(calls)) if calls else None,
        }
    return {"kind": "summary", "methods": per_method}


def run_experiment(
    spec: ExperimentSpec, out_path: str | Path | None = None
) -> tuple[list[dict], dict]:
    """Run the full grid; returns (rows, summary) and optionally writes JSONL.

    The metrics file holds one row per (instance, method, seed) plus a
    final summary line. Timings land in <out>.timing.json.
    """
    spec.validate()
    rows: list[dict] = []
    timing: dict[str, float] = {}
    for instance_id, model in spec.instances:
        for method in spec.methods:
            for seed in spec.seeds:
                start = time.perf_counter()
                try:
                    result, calls = _run_cell(model, spec.prompt, method, seed)
                    row = _result_row(instance_id, model, method, seed, result, calls)
                except MedalError as exc:
                    row = {
                        "kind": "row",
                        "instance": instance_id,
                        "method": method.id,
                        "seed": seed,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                elapsed = time.perf_counter() - start
                timing[method.id] = timing.get(method.id, 0.0) + elapsed
                rows.append(row)
    summary = _summary(rows, [m.id for m in spec.methods])
    if out_path is not None:
        write_jsonl(out_path, rows, summary)
        sidecar = Path(str(out_path) + ".timing.json")
        sidecar.write_text(
            json.dumps({"seconds_by_method": timing}, indent=2) + "\n",
            encoding="utf-8",
        )
    return rows, summary


def write_jsonl(path: str | Path, rows: list[dict], summary: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        if summary is not None:
            fh.write(json.dumps(summary, separators=(",", ":")) + "\n")


ABLATION_VARIANTS = ("full", "no_mcts", "no_augmenter", "margin_only")


def ablation_methods(base_cfg: DecodeConfig) -> tuple[MethodSpec, ...]:
    """The four ablation variants plus the greedy reference."""
    no_mcts = replace(base_cfg, search=replace(base_cfg.search, init_length=0))
    no_aug = replace(base_cfg, augmenter="identity")
    margin_only = replace(
        base_cfg, search=replace(base_cfg.search, use_entropy_penalty=False)
    )
    return (
        MethodSpec("full", "medal", base_cfg),
        MethodSpec("no_mcts", "medal", no_mcts),
        MethodSpec("no_augmenter", "medal", no_aug),
        MethodSpec("margin_only", "medal", margin_only),
        MethodSpec("greedy", "greedy", base_cfg),
    )


def ablation_matrix(
    instances: Sequence[tuple[str, Denoiser]],
    base_cfg: DecodeConfig,
    seeds: Sequence[int],
    out_path: str | Path | None = None,
    prompt: Sequence[int] = (),
) -> tuple[list[dict], dict]:
    spec = ExperimentSpec(
        instances=tuple(instances),
        methods=ablation_methods(base_cfg),
        seeds=tuple(seeds),
        prompt=tuple(prompt),
    )
    return run_experiment(spec, out_path)


def scaling_sweep(
    instances: Sequence[tuple[str, Denoiser]],
    base_cfg: DecodeConfig,
    seeds: Sequence[int],
    lc_values: Sequence[int],
    out_path: str | Path | None = None,
    prompt: Sequence[int] = (),
) -> tuple[list[dict], dict]:
    """Init-depth sweep; lc=0 plus the greedy reference anchor the curve."""
    methods = [
        MethodSpec(
            f"lc={lc}",
            "medal",
            replace(base_cfg, search=replace(base_cfg.search, init_length=lc)),
        )
        for lc in lc_values
    ]
    methods.append(MethodSpec("greedy", "greedy", base_cfg))
    spec = ExperimentSpec(
        instances=tuple(instances),
        methods=tuple(methods),
        seeds=tuple(seeds),
        prompt=tuple(prompt),
    )
    return run_experiment(spec, out_path)
