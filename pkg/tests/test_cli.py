"""Command-line surface: config loading, model specs, subcommand output."""

from __future__ import annotations

import json

import numpy as np
import pytest

from medal.cli import default_config, load_config, load_model, main, _parse_ints
from medal.decoder import DecodeConfig
from medal.denoisers import FactorizedModel, NGramMaskedModel, TabularModel
from medal.errors import ConfigError
from medal.families import trap_family
from medal.seqcore import Vocab


@pytest.fixture
def trap_file(tmp_path):
    model = trap_family(1, seed=0)[0]
    path = tmp_path / "trap.json"
    model.to_file(path)
    return path


@pytest.fixture
def small_cfg_file(tmp_path):
    cfg = {
        "length": 4,
        "remaining_mode": "argmax",
        "search": {"init_length": 2, "candidate_count": 3, "max_simulations": 60},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_default_config_is_valid():
    cfg = default_config()
    cfg.validate()
    assert cfg.length == 256
    assert cfg.search.init_length == 20
    assert cfg.search.candidate_count == 3
    assert cfg.search.budget == 192


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"length": 8, "width": 2}')
    with pytest.raises(ConfigError):
        load_config(str(path))
    assert isinstance(load_config(None), DecodeConfig)


def test_parse_ints():
    assert _parse_ints("1,2 3") == (1, 2, 3)
    assert _parse_ints("") == ()
    assert _parse_ints(None) == ()


def test_load_model_kinds(tmp_path, trap_file):
    model = load_model(str(trap_file))
    assert isinstance(model, TabularModel)
    fact = tmp_path / "fact.json"
    fact.write_text(json.dumps({"vocab_size": 2, "rows": [[0.5, 0.5], [0.9, 0.1]]}))
    assert isinstance(load_model(str(fact)), FactorizedModel)
    corpus = tmp_path / "c.txt"
    corpus.write_text("0 1 2\n2 1 0\n")
    ng = load_model(f"ngram:{corpus}?n=2&alpha=0.25")
    assert isinstance(ng, NGramMaskedModel)
    assert ng.n == 2 and ng.alpha == 0.25
    mystery = tmp_path / "m.json"
    mystery.write_text('{"weights": []}')
    with pytest.raises(ConfigError):
        load_model(str(mystery))
    with pytest.raises(ConfigError):
        load_model("remote:localhost:1")  # no vocab size


def test_decode_command_is_byte_deterministic(tmp_path, trap_file, small_cfg_file):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = [
        "decode", "--model", str(trap_file), "--config", str(small_cfg_file),
        "--seed", "7",
    ]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    obj = json.loads(out1.read_text())
    assert set(obj) == {"final", "chosen_candidate", "reveal_order",
                        "per_step_scores", "pool"}
    assert len(obj["final"]["tokens"]) == 4
    assert obj["chosen_candidate"] >= 0


def test_decode_baseline_flag(tmp_path, trap_file, small_cfg_file):
    out = tmp_path / "g.jsonl"
    code = main([
        "decode", "--model", str(trap_file), "--config", str(small_cfg_file),
        "--baseline", "--out", str(out),
    ])
    assert code == 0
    obj = json.loads(out.read_text())
    assert obj["chosen_candidate"] == -1 and obj["pool"] is None


def test_mcts_init_emits_trace_then_pool(tmp_path, trap_file, small_cfg_file):
    out = tmp_path / "t.jsonl"
    code = main([
        "mcts-init", "--model", str(trap_file), "--config", str(small_cfg_file),
        "--out", str(out),
    ])
    assert code == 0
    lines = [json.loads(l) for l in out.read_text().strip().split("\n")]
    assert all(l["kind"] == "trace" for l in lines[:-1])
    pool = lines[-1]
    assert pool["kind"] == "pool"
    assert not pool["exhausted"]
    assert len(pool["entries"]) == 3


def test_theory_check_lemma(tmp_path, trap_file):
    out = tmp_path / "report.json"
    code = main([
        "theory-check", "--model", str(trap_file), "--mode", "lemma1",
        "--out", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["mode"] == "lemma1"
    assert report["max_excess"] <= 1e-9
    assert report["schedules_checked"] == 75  # 4 positions, all k


def test_theory_check_theorem(tmp_path, trap_file):
    out = tmp_path / "thm.json"
    code = main([
        "theory-check", "--model", str(trap_file), "--mode", "theorem1",
        "--k", "2", "--budgets", "1,2,4", "--out", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["budgets"] == [1, 2, 4]
    assert report["j_final"] <= report["j_greedy"] + 1e-9


def test_theory_check_rejects_non_tabular(tmp_path, capsys):
    corpus = tmp_path / "c.txt"
    corpus.write_text("0 1\n")
    code = main(["theory-check", "--model", f"ngram:{corpus}"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bench_command(tmp_path, small_cfg_file):
    spec = {
        "instances": {"kind": "trap_family", "count": 2, "seed": 0},
        "methods": [
            {"id": "medal", "kind": "medal",
             "config": json.loads(small_cfg_file.read_text())},
            {"id": "greedy", "kind": "greedy",
             "config": json.loads(small_cfg_file.read_text())},
        ],
        "seeds": [1, 2],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "bench.jsonl"
    assert main(["bench", "--config", str(spec_path), "--out", str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().strip().split("\n")]
    assert len(lines) == 2 * 2 * 2 + 1
    assert lines[-1]["kind"] == "summary"
    assert (tmp_path / "bench.jsonl.timing.json").exists()


def test_sweep_command_with_lc_override(tmp_path, small_cfg_file):
    spec = {
        "instances": {"kind": "trap_family", "count": 1, "seed": 3},
        "config": json.loads(small_cfg_file.read_text()),
        "seeds": [1],
    }
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sweep.jsonl"
    code = main(["sweep", "--config", str(spec_path), "--lc", "0,2",
                 "--out", str(out)])
    assert code == 0
    lines = [json.loads(l) for l in out.read_text().strip().split("\n")]
    methods = [l["method"] for l in lines if l["kind"] == "row"]
    assert methods == ["lc=0", "lc=2", "greedy"]


def test_ablate_command(tmp_path, small_cfg_file):
    spec = {
        "instances": {"kind": "trap_family", "count": 1, "seed": 2},
        "config": json.loads(small_cfg_file.read_text()),
        "seeds": [1],
    }
    spec_path = tmp_path / "abl.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "abl.jsonl"
    assert main(["ablate", "--config", str(spec_path), "--out", str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().strip().split("\n")]
    methods = {l["method"] for l in lines if l["kind"] == "row"}
    assert methods == {"full", "no_mcts", "no_augmenter", "margin_only", "greedy"}


def test_log_level_validation(monkeypatch):
    monkeypatch.setenv("MEDAL_LOG_LEVEL", "verbose")
    with pytest.raises(ConfigError):
        main(["decode", "--model", "x.json"])
