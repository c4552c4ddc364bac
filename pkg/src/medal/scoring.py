"""Confidence-adjusted action scoring and the two-stage candidate filter.

Each masked position gets softmax probabilities p, an entropy penalty
exp(-H) with H = -sum_v p_v * log(p_v + epsilon), and a top-2 margin factor
sigmoid(gamma * (p_(1) - p_(2))). Token scores are the product of the three.
Candidates are filtered per position (top-k1) and then pooled globally
(top-k2); ties break toward lower position, then lower token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import kernels
from .errors import MissingPosition, NonFiniteLogits
from .seqcore import SeqState, UnmaskAction, masked_positions

DEFAULT_GAMMA = 5.0
DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class PositionScore:
    """Full scoring breakdown for one masked position.

    ent_penalty == exp(-entropy) and scores[v] == probs[v] * ent_penalty *
    margin_factor in the default mode; with the entropy penalty disabled
    (ablation), ent_penalty is reported as 1.0.
    """

    position: int
    probs: tuple[float, ...]
    entropy: float
    ent_penalty: float
    top2_margin: float
    margin_factor: float
    scores: tuple[float, ...]

    def best_token(self) -> int:
        best = 0
        for v in range(1, len(self.scores)):
            if self.scores[v] > self.scores[best]:
                best = v
        return best

    def to_json(self) -> dict:
        return {
            "position": self.position,
            "probs": list(self.probs),
            "entropy": self.entropy,
            "ent_penalty": self.ent_penalty,
            "top2_margin": self.top2_margin,
            "margin_factor": self.margin_factor,
            "scores": list(self.scores),
        }


@dataclass(frozen=True)
class ActionCandidates:
    """Output of the two-stage filter.

    per_position maps each masked position to its top-k1 (action, score)
    pairs, score-descending. pooled is the global top-k2 across the union,
    ordered by (score desc, position asc, token asc).
    """

    per_position: dict[int, tuple[tuple[UnmaskAction, float], ...]]
    pooled: tuple[tuple[UnmaskAction, float], ...]

    def pooled_actions(self) -> list[UnmaskAction]:
        return [a for a, _ in self.pooled]


def _validate_logits(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteLogits("logits contain NaN or infinity")


def score_position(
    logits,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    *,
    position: int = 0,
    use_entropy_penalty: bool = True,
) -> PositionScore:
    """Score a single position's logit vector."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError("logits must be a 1-d vector over at least two tokens")
    _validate_logits(arr)
    probs, ent, pen, margin, mf, scores = kernels.score_rows(
        arr[None, :], gamma, epsilon, use_entropy_penalty
    )
    return PositionScore(
        position=position,
        probs=tuple(probs[0]),
        entropy=float(ent[0]),
        ent_penalty=float(pen[0]),
        top2_margin=float(margin[0]),
        margin_factor=float(mf[0]),
        scores=tuple(scores[0]),
    )


def score_state(
    state: SeqState,
    output,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    *,
    use_entropy_penalty: bool = True,
) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Batch-score all masked positions.

    `output` may be a DenoiserOutput or a plain {position: logits} mapping
    covering exactly the masked positions. Returns (positions ascending,
    probs matrix, scores matrix).
    """
    logits_map: Mapping[int, np.ndarray] = getattr(output, "logits", output)
    positions = masked_positions(state)
    have = set(logits_map)
    want = set(positions)
    if have != want:
        missing = sorted(want - have)
        extra = sorted(have - want)
        raise MissingPosition(
            f"denoiser output mismatch: missing positions {missing}, extra {extra}"
        )
    matrix = np.stack([np.asarray(logits_map[p], dtype=np.float64) for p in positions])
    _validate_logits(matrix)
    probs, _, _, _, _, scores = kernels.score_rows(
        matrix, gamma, epsilon, use_entropy_penalty
    )
    return positions, probs, scores


def build_candidates(
    state: SeqState,
    output,
    k1: int,
    k2: int,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    *,
    use_entropy_penalty: bool = True,
) -> ActionCandidates:
    """Two-stage action filter over all masked positions of `state`."""
    if k1 < 1 or k2 < 1:
        raise ValueError("k1 and k2 must be >= 1")
    positions, _, scores = score_state(
        state, output, gamma, epsilon, use_entropy_penalty=use_entropy_penalty
    )
    width = scores.shape[1]
    take = min(k1, width)

    per_position: dict[int, tuple[tuple[UnmaskAction, float], ...]] = {}
    union: list[tuple[float, int, int]] = []
    for row, pos in enumerate(positions):
        srow = scores[row]
        # stable order: score desc, token asc
        order = np.lexsort((np.arange(width), -srow))[:take]
        kept = tuple(
            (UnmaskAction(pos, int(tok)), float(srow[tok])) for tok in order
        )
        per_position[pos] = kept
        union.extend((float(srow[tok]), pos, int(tok)) for tok in order)

    union.sort(key=lambda item: (-item[0], item[1], item[2]))
    pooled = tuple(
        (UnmaskAction(pos, tok), s) for s, pos, tok in union[: min(k2, len(union))]
    )
    return ActionCandidates(per_position=per_position, pooled=pooled)
