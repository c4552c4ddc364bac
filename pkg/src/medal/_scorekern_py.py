"""Pure-numpy scoring kernels. Reference implementation for medal._scorekern.

Both backends must agree to float precision; the test suite checks this
whenever the compiled module is importable.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def score_rows(
    logits: np.ndarray,
    gamma: float,
    epsilon: float,
    use_entropy_penalty: bool = True,
):
    """Confidence-adjusted scores for a batch of positions.

    For each row: softmax probabilities, entropy -sum p*log(p+epsilon)
    clamped to [0, ln V], entropy penalty exp(-H), top-2 margin and its
    sigmoid factor 1/(1+exp(-gamma*margin)), and per-token scores
    p * penalty * margin_factor.

    Returns (probs, entropy, ent_penalty, margin, margin_factor, scores),
    shapes (P, V), (P,), (P,), (P,), (P,), (P, V).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError("logits must be 2-d (positions x vocab)")
    n_rows, width = logits.shape
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=1, keepdims=True)

    ln_v = math.log(width)
    entropy = -(probs * np.log(probs + epsilon)).sum(axis=1)
    np.clip(entropy, 0.0, ln_v, out=entropy)

    if use_entropy_penalty:
        ent_penalty = np.exp(-entropy)
    else:
        ent_penalty = np.ones(n_rows)

    if width >= 2:
        part = np.partition(probs, width - 2, axis=1)
        margin = part[:, -1] - part[:, -2]
    else:
        margin = probs[:, 0].copy()
    margin_factor = 1.0 / (1.0 + np.exp(-gamma * margin))

    scores = probs * (ent_penalty * margin_factor)[:, None]
    return probs, entropy, ent_penalty, margin, margin_factor, scores


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Exact Shannon entropy -sum p*ln(p) per row, 0*ln(0)=0, clamped to [0, ln V]."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probs must be 2-d")
    safe = np.where(probs > 0.0, probs, 1.0)
    ent = -(probs * np.log(safe)).sum(axis=1)
    np.clip(ent, 0.0, math.log(probs.shape[1]), out=ent)
    return ent
