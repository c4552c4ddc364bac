"""Sequence states, vocabulary, and unmask actions.

A state is an immutable snapshot of a partially revealed token sequence:
a read-only prompt prefix followed by a generation region whose positions
are either revealed or masked. All engine layers operate on these values;
mutation always goes through apply_action / apply_many, which return new
states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, PositionNotMasked, TokenIsMask


@dataclass(frozen=True)
class Vocab:
    """Content tokens are 0..size-1; mask_id lies outside that range."""

    size: int
    mask_id: int = -1

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ConfigError(f"vocab size must be >= 2, got {self.size}")
        if self.mask_id == -1:
            object.__setattr__(self, "mask_id", self.size)
        if 0 <= self.mask_id < self.size:
            raise ConfigError(
                f"mask_id {self.mask_id} collides with content range 0..{self.size - 1}"
            )

    def is_content(self, token: int) -> bool:
        return 0 <= token < self.size


@dataclass(frozen=True)
class UnmaskAction:
    """Commit `token` at `position` (absolute index into the sequence)."""

    position: int
    token: int


@dataclass(frozen=True)
class SeqState:
    vocab: Vocab
    prompt_len: int
    tokens: tuple[int, ...]
    masked: tuple[bool, ...]
    step: int = 0

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.masked):
            raise ConfigError("tokens and masked must have equal length")
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise ConfigError(f"prompt_len {self.prompt_len} out of range")
        if self.gen_length < 1:
            raise ConfigError("generation region must be non-empty")
        for i, (tok, m) in enumerate(zip(self.tokens, self.masked)):
            if m and i < self.prompt_len:
                raise ConfigError(f"prompt position {i} cannot be masked")
            if m != (tok == self.vocab.mask_id):
                raise ConfigError(f"mask flag and token disagree at position {i}")
            if not m and not self.vocab.is_content(tok):
                raise ConfigError(f"revealed token {tok} at {i} outside vocab")

    @classmethod
    def fully_masked(
        cls, vocab: Vocab, prompt: Sequence[int], length: int, step: int = 0
    ) -> "SeqState":
        """Fresh decode root: prompt revealed, `length` masked slots after it."""
        prompt = tuple(prompt)
        tokens = prompt + (vocab.mask_id,) * length
        masked = (False,) * len(prompt) + (True,) * length
        return cls(vocab, len(prompt), tokens, masked, step)

    @property
    def gen_length(self) -> int:
        return len(self.tokens) - self.prompt_len

    @property
    def is_complete(self) -> bool:
        return not any(self.masked)

    def gen_tokens(self) -> tuple[int, ...]:
        return self.tokens[self.prompt_len :]

    def reveal_count(self) -> int:
        """Revealed positions inside the generation region."""
        return sum(1 for m in self.masked[self.prompt_len :] if not m)

    def apply(self, action: UnmaskAction) -> "SeqState":
        return apply_action(self, action)


def masked_positions(state: SeqState) -> list[int]:
    """Ascending absolute indices of masked positions."""
    return [i for i, m in enumerate(state.masked) if m]


def apply_action(state: SeqState, action: UnmaskAction) -> SeqState:
    """Reveal one position; returns a new state with step advanced by 1."""
    return apply_many(state, [action])


def apply_many(state: SeqState, actions: Iterable[UnmaskAction]) -> SeqState:
    """Reveal several distinct positions at once; step advances by the count."""
    tokens = list(state.tokens)
    masked = list(state.masked)
    n = 0
    for act in actions:
        if not 0 <= act.position < len(tokens) or not masked[act.position]:
            raise PositionNotMasked(f"position {act.position} is not masked")
        if act.token == state.vocab.mask_id:
            raise TokenIsMask("cannot reveal the mask token")
        if not state.vocab.is_content(act.token):
            raise TokenIsMask(f"token {act.token} outside vocab")
        tokens[act.position] = act.token
        masked[act.position] = False
        n += 1
    return SeqState(
        state.vocab, state.prompt_len, tuple(tokens), tuple(masked), state.step + n
    )


# ---------------------------------------------------------------------------
# serialization
#
# State objects and the vocab serialize separately: states embed no vocab
# descriptor so the wire format stays minimal.


def vocab_to_json(vocab: Vocab) -> dict:
    return {"size": vocab.size, "mask_id": vocab.mask_id}


def vocab_from_json(obj: dict) -> Vocab:
    return Vocab(size=int(obj["size"]), mask_id=int(obj["mask_id"]))


def state_to_json(state: SeqState) -> dict:
    return {
        "prompt_len": state.prompt_len,
        "tokens": list(state.tokens),
        "masked": [bool(m) for m in state.masked],
        "step": state.step,
    }


def state_from_json(obj: dict, vocab: Vocab) -> SeqState:
    return SeqState(
        vocab=vocab,
        prompt_len=int(obj["prompt_len"]),
        tokens=tuple(int(t) for t in obj["tokens"]),
        masked=tuple(bool(m) for m in obj["masked"]),
        step=int(obj.get("step", 0)),
    )


def state_to_line(state: SeqState) -> str:
    return json.dumps(state_to_json(state), separators=(",", ":"))


def state_from_line(line: str, vocab: Vocab) -> SeqState:
    return state_from_json(json.loads(line), vocab)
