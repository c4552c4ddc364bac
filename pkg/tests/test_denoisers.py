"""Toy models: exact conditionals, smoothing, files, and the wire protocol."""

from __future__ import annotations

import json
import math
from itertools import product

import numpy as np
import pytest

import oracles
from medal.denoisers import (
    CountingDenoiser,
    DenoiserOutput,
    FactorizedModel,
    NGramMaskedModel,
    RemoteDenoiser,
    TabularModel,
    fit_ngram,
    load_corpus,
    serve_denoiser,
)
from medal.errors import (
    ConfigError,
    EmptyCorpus,
    NoMaskedPositions,
    NonFiniteLogits,
    ZeroMassContext,
)
from medal.seqcore import SeqState, UnmaskAction, Vocab, apply_many


def softmax(vec):
    vec = np.asarray(vec, dtype=np.float64)
    e = np.exp(vec - vec.max())
    return e / e.sum()


def random_joint(rng, length, vocab):
    joint = rng.dirichlet(np.full(vocab**length, 0.3)).reshape((vocab,) * length)
    return joint


def test_output_validation():
    with pytest.raises(ConfigError):
        DenoiserOutput({0: np.zeros((2, 2))})
    with pytest.raises(ConfigError):
        DenoiserOutput({0: np.zeros(3), 1: np.zeros(4)})
    with pytest.raises(NonFiniteLogits):
        DenoiserOutput({0: np.array([0.0, np.nan])})
    out = DenoiserOutput({2: [0.0, 1.0], 0: [1.0, 0.0]})
    assert out.positions() == [0, 2]
    assert out.matrix().shape == (2, 2)


def test_tabular_validation():
    v = Vocab(2)
    with pytest.raises(ConfigError):
        TabularModel(v, np.array([[0.5, 0.1], [0.1, 0.1]]))  # mass != 1
    with pytest.raises(ConfigError):
        TabularModel(v, np.array([[0.8, 0.3], [0.0, -0.1]]))  # negative
    with pytest.raises(ConfigError):
        TabularModel(v, np.ones((2, 3)) / 6)  # ragged axis


def test_tabular_predict_matches_enumeration(rng):
    # exhaustive: every joint shape, every revealed subset, every assignment
    for length, vocab in [(2, 2), (2, 3), (3, 2), (3, 3)]:
        model = TabularModel(Vocab(vocab), random_joint(rng, length, vocab))
        cells = oracles.cells_from_joint(model.joint)
        base = SeqState.fully_masked(model.vocab, (7 % vocab,), length)
        for r in range(length):  # how many positions to reveal
            for revealed_pos in product(range(length), repeat=r):
                if len(set(revealed_pos)) != r:
                    continue
                for toks in product(range(vocab), repeat=r):
                    acts = [
                        UnmaskAction(1 + p, t) for p, t in zip(revealed_pos, toks)
                    ]
                    state = apply_many(base, acts)
                    if state.is_complete:
                        continue
                    revealed = dict(zip(revealed_pos, toks))
                    out = model.predict(state)
                    for p in out.positions():
                        got = softmax(out.logits[p])
                        want = oracles.oracle_conditional(
                            cells, length, vocab, revealed, p - 1
                        )
                        assert np.max(np.abs(got - np.array(want))) < 1e-12


def test_tabular_zero_mass_context():
    # mass only on (0,0) and (1,1); revealing token 1 at pos 0 then asking
    # for the conditional of a context (0 at pos0, anything at pos1 = fine),
    # but revealing (0, then 1) has zero mass... use XOR-style pairs
    joint = np.zeros((2, 2))
    joint[0, 0] = 0.5
    joint[1, 1] = 0.5
    model = TabularModel(Vocab(2), joint)
    base = SeqState.fully_masked(model.vocab, (), 2)
    # context x0=0 has mass; conditional for x1 is a point mass on 0
    s = apply_many(base, [UnmaskAction(0, 0)])
    pos, cond = model.masked_conditional(s)
    assert pos == [1]
    assert cond == pytest.approx([1.0, 0.0])
    # build a zero-mass context by modeling 3 cells out of 4
    joint3 = np.array([[0.5, 0.25], [0.0, 0.25]])
    model3 = TabularModel(Vocab(2), joint3)
    s_bad = apply_many(SeqState.fully_masked(model3.vocab, (), 2), [])
    s_bad = apply_many(s_bad, [UnmaskAction(0, 1), UnmaskAction(1, 0)])
    with pytest.raises(NoMaskedPositions):
        model3.predict(s_bad)
    # now a genuinely zero-mass partial context: impossible with these cells
    joint0 = np.array([[0.5, 0.5], [0.0, 0.0]])
    model0 = TabularModel(Vocab(2), joint0)
    s0 = apply_many(SeqState.fully_masked(model0.vocab, (), 2), [UnmaskAction(0, 1)])
    with pytest.raises(ZeroMassContext):
        model0.masked_conditional(s0)
    out = model0.predict(s0)  # uniform fallback instead of raising
    assert softmax(out.logits[1]) == pytest.approx([0.5, 0.5])


def test_tabular_prompt_is_ignored(rng):
    joint = random_joint(rng, 2, 3)
    model = TabularModel(Vocab(3), joint)
    a = SeqState.fully_masked(model.vocab, (0, 1), 2)
    b = SeqState.fully_masked(model.vocab, (2,), 2)
    out_a, out_b = model.predict(a), model.predict(b)
    assert np.allclose(out_a.matrix(), out_b.matrix())


def test_tabular_joint_logprob():
    joint = np.array([[0.5, 0.25], [0.0, 0.25]])
    model = TabularModel(Vocab(2), joint)
    assert model.joint_logprob((0, 0)) == pytest.approx(math.log(0.5))
    assert model.joint_logprob((1, 0)) == float("-inf")
    with pytest.raises(ConfigError):
        model.joint_logprob((0, 0, 0))


def test_tabular_file_round_trip(tmp_path, rng):
    model = TabularModel(Vocab(3), random_joint(rng, 2, 3))
    path = tmp_path / "joint.json"
    model.to_file(path)
    back = TabularModel.from_file(path)
    assert back.vocab.size == 3 and back.length == 2
    assert np.max(np.abs(back.joint - model.joint)) < 1e-15
    obj = json.loads(path.read_text())
    assert set(obj) == {"vocab_size", "length", "probs"}


def test_factorized_matches_tabular(rng):
    rows = rng.dirichlet(np.ones(3), size=2)
    fact = FactorizedModel(Vocab(3), rows)
    tab = fact.as_tabular()
    state = SeqState.fully_masked(Vocab(3), (), 2)
    f_out, t_out = fact.predict(state), tab.predict(state)
    for p in (0, 1):
        assert np.max(np.abs(softmax(f_out.logits[p]) - softmax(t_out.logits[p]))) < 1e-12
    # conditioning on one side leaves the other side unchanged
    s1 = apply_many(state, [UnmaskAction(0, 2)])
    assert np.allclose(
        softmax(fact.predict(s1).logits[1]), softmax(tab.predict(s1).logits[1])
    )
    round_trip = FactorizedModel.from_dict(fact.to_dict())
    assert np.allclose(round_trip.rows, fact.rows)


def test_ngram_hand_counts():
    # corpus: 0 1, 0 2  ->  after context (0,): counts [0,1,1]
    model = fit_ngram([(0, 1), (0, 2)], n=2, alpha=1.0, vocab_size=3)
    state = SeqState.fully_masked(model.vocab, (0,), 2)
    out = model.predict(state)
    probs = np.exp(out.logits[1])
    # (count + alpha) / (total + alpha * V) = (1+1)/(2+3) for tokens 1 and 2
    assert probs == pytest.approx([1 / 5, 2 / 5, 2 / 5], abs=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    # position 2 has a masked neighbor, so it gets the smoothed unigram:
    # counts [2, 1, 1], (c+1)/(4+3)
    probs2 = np.exp(out.logits[2])
    assert probs2 == pytest.approx([3 / 7, 2 / 7, 2 / 7], abs=1e-12)


def test_ngram_context_windowing():
    model = fit_ngram([(0, 1, 2, 0)], n=3, alpha=0.5)
    v = model.vocab
    s = SeqState.fully_masked(v, (0, 1, 2), 3)
    # context capped at n-1 = 2 revealed tokens
    assert model.context_for(s, 3) == (1, 2)
    s2 = apply_many(s, [UnmaskAction(4, 0)])
    assert model.context_for(s2, 5) == (0,)
    assert model.context_for(s2, 3) == (1, 2)
    # a masked gap cuts the run
    assert model.context_for(s, 4) == ()


def test_ngram_unseen_context_uniform():
    model = fit_ngram([(0, 1)], n=2, alpha=2.0, vocab_size=4)
    s = SeqState.fully_masked(model.vocab, (3,), 1)
    probs = np.exp(model.predict(s).logits[1])
    # context (3,) never observed: all-alpha smoothing is uniform
    assert probs == pytest.approx([0.25] * 4, abs=1e-12)


def test_fit_ngram_errors():
    with pytest.raises(EmptyCorpus):
        fit_ngram([], n=2, alpha=1.0)
    with pytest.raises(EmptyCorpus):
        fit_ngram([()], n=2, alpha=1.0)
    with pytest.raises(ConfigError):
        fit_ngram([(0, 5)], n=2, alpha=1.0, vocab_size=3)
    with pytest.raises(ConfigError):
        fit_ngram([(0, 1)], n=0, alpha=1.0)
    with pytest.raises(ConfigError):
        fit_ngram([(0, 1)], n=2, alpha=0.0)
    with pytest.raises(ConfigError):
        fit_ngram([(-1, 1)], n=1, alpha=1.0)


def test_load_corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("0 1 2\n\n3 4\n")
    assert load_corpus(path) == [(0, 1, 2), (3, 4)]
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    with pytest.raises(EmptyCorpus):
        load_corpus(empty)


def test_counting_wrapper(rng):
    model = TabularModel(Vocab(2), random_joint(rng, 2, 2))
    counted = CountingDenoiser(model)
    s = SeqState.fully_masked(model.vocab, (), 2)
    counted.predict(s)
    counted.predict(s)
    assert counted.calls == 2
    counted.reset()
    assert counted.calls == 0
    assert counted.vocab == model.vocab


def test_state_vocab_mismatch_rejected(rng):
    model = TabularModel(Vocab(2), random_joint(rng, 2, 2))
    s = SeqState.fully_masked(Vocab(3), (), 2)
    with pytest.raises(ConfigError):
        model.predict(s)


def test_remote_round_trip_and_error_frames(rng):
    model = TabularModel(Vocab(3), random_joint(rng, 2, 3))
    server = serve_denoiser(model, port=0)
    server.serve_in_thread()
    host, port = server.server_address
    try:
        with RemoteDenoiser(f"{host}:{port}", vocab=model.vocab) as remote:
            state = SeqState.fully_masked(model.vocab, (1,), 2)
            local = model.predict(state)
            wire = remote.predict(state)
            assert wire.positions() == local.positions()
            assert np.max(np.abs(wire.matrix() - local.matrix())) < 1e-12
            # wrong generation length makes the server answer with an error
            # frame on the same connection, which surfaces as ConfigError
            bad = SeqState.fully_masked(model.vocab, (), 5)
            with pytest.raises(ConfigError, match="remote denoiser error"):
                remote.predict(bad)
            # connection still usable afterwards
            again = remote.predict(state)
            assert np.max(np.abs(again.matrix() - local.matrix())) < 1e-12
    finally:
        server.shutdown()
        server.server_close()


def test_remote_address_parsing():
    with pytest.raises(ConfigError):
        RemoteDenoiser("9999", vocab=Vocab(2))
