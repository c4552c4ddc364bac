"""Backend selection and numerical parity between kernel implementations."""

from __future__ import annotations

import math

import numpy as np
import pytest

from medal import kernels
from medal._scorekern_py import entropy_rows, score_rows
from medal.errors import ConfigError

import oracles


def test_python_backend_always_available():
    assert "py" in kernels.available_backends()
    assert kernels.get_backend("py").BACKEND == "python"


def test_auto_prefers_compiled_when_present():
    impl = kernels.get_backend("auto")
    if "c" in kernels.available_backends():
        assert impl.BACKEND == "c"
    else:
        assert impl.BACKEND == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ConfigError):
        kernels.get_backend("fortran")


def test_backends_agree_bitwise_tight(rng):
    if "c" not in kernels.available_backends():
        pytest.skip("compiled kernel not built")
    cmod = kernels.get_backend("c")
    for shape in [(1, 2), (3, 7), (16, 33), (40, 129)]:
        logits = rng.normal(scale=4.0, size=shape)
        for flag in (True, False):
            got_c = cmod.score_rows(logits, 5.0, 1e-8, flag)
            got_py = score_rows(logits, 5.0, 1e-8, flag)
            for a, b in zip(got_c, got_py):
                assert np.max(np.abs(a - b)) < 1e-12
        probs = got_py[0]
        assert np.max(np.abs(cmod.entropy_rows(probs) - entropy_rows(probs))) < 1e-12


def test_score_rows_fields_match_mpmath(rng):
    logits = rng.normal(scale=3.0, size=(6, 9))
    probs, ent, pen, margin, mf, scores = score_rows(logits, 5.0, 1e-8, True)
    for r in range(logits.shape[0]):
        ref = oracles.mp_score_row(logits[r], 5.0, 1e-8)
        for v in range(logits.shape[1]):
            assert oracles.mp_close(probs[r, v], ref["probs"][v], 1e-12)
            assert oracles.mp_close(scores[r, v], ref["scores"][v], 1e-12)
        assert oracles.mp_close(ent[r], ref["entropy"], 1e-12)
        assert oracles.mp_close(pen[r], ref["penalty"], 1e-12)
        assert oracles.mp_close(margin[r], ref["margin"], 1e-12)
        assert oracles.mp_close(mf[r], ref["margin_factor"], 1e-12)


def test_entropy_rows_is_exact_and_clamped():
    probs = np.array(
        [
            [0.25, 0.25, 0.25, 0.25],
            [1.0, 0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
        ]
    )
    ent = entropy_rows(probs)
    assert ent[0] == pytest.approx(math.log(4), abs=1e-15)
    assert ent[1] == 0.0  # 0 * log 0 treated as 0
    assert ent[2] == pytest.approx(math.log(2), abs=1e-15)
    assert np.all(ent <= math.log(4) + 1e-15)


def test_penalty_disabled_reports_ones(rng):
    logits = rng.normal(size=(4, 5))
    _, ent, pen, _, mf, scores = score_rows(logits, 5.0, 1e-8, False)
    probs = score_rows(logits, 5.0, 1e-8, True)[0]
    assert np.all(pen == 1.0)
    assert np.max(np.abs(scores - probs * mf[:, None])) < 1e-15
    # entropy is still reported even though it no longer enters the score
    assert np.all(ent > 0)
