"""Denoiser interface and desk-scale reference models.

A denoiser takes a partially masked state and returns one logit vector per
masked position, covering content tokens only. Predictions must be pure
functions of the state so that search and replay stay deterministic.

Three toy families with known structure:

* TabularModel: explicit joint over the generation region; conditionals are
  exact posteriors given all revealed generation tokens.
* FactorizedModel: independent per-position distributions.
* NGramMaskedModel: smoothed n-gram conditioned on the longest contiguous
  revealed suffix preceding each position (prompt included).

RemoteDenoiser speaks line-delimited JSON over a socket so an external
process can stand in for the model; serve_denoiser exposes any local model
over the same wire format.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyCorpus, NoMaskedPositions, NonFiniteLogits, ZeroMassContext
from .seqcore import (
    SeqState,
    Vocab,
    masked_positions,
    state_from_json,
    state_to_json,
)

# floor added before log so tabular/factorized logits stay finite at p=0
LOGIT_FLOOR = 1e-12


@dataclass
class DenoiserOutput:
    """Logit vectors keyed by absolute masked position.

    Each vector has length vocab.size (content tokens only; the mask token
    gets no logit). Treat instances as immutable.
    """

    logits: dict[int, np.ndarray]

    def __post_init__(self) -> None:
        clean: dict[int, np.ndarray] = {}
        width = None
        for pos, vec in self.logits.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise ConfigError(f"logits for position {pos} must be 1-d")
            if width is None:
                width = arr.shape[0]
            elif arr.shape[0] != width:
                raise ConfigError("logit vectors must share one width")
            if not np.isfinite(arr).all():
                raise NonFiniteLogits(f"non-finite logits at position {pos}")
            clean[int(pos)] = arr
        self.logits = clean

    def positions(self) -> list[int]:
        return sorted(self.logits)

    def matrix(self, positions: Sequence[int] | None = None) -> np.ndarray:
        if positions is None:
            positions = self.positions()
        return np.stack([self.logits[p] for p in positions])


class Denoiser:
    """Base interface. Subclasses set vocab and implement predict.

    concurrent_safe is an advisory capability flag: drivers that want to
    issue predict calls from several threads must check it and serialize
    calls when it is False. The engine in this package is strictly serial.
    """

    concurrent_safe: bool = True
    vocab: Vocab

    def predict(self, state: SeqState) -> DenoiserOutput:
        raise NotImplementedError

    def _check_state(self, state: SeqState) -> list[int]:
        if state.vocab.size != self.vocab.size:
            raise ConfigError(
                f"state vocab size {state.vocab.size} != model vocab {self.vocab.size}"
            )
        pos = masked_positions(state)
        if not pos:
            raise NoMaskedPositions("state is fully revealed")
        return pos


class TabularModel(Denoiser):
    """Explicit joint distribution over a fixed-length generation region.

    predict() conditions on all revealed generation tokens jointly and
    returns exact per-position posterior marginals. Prompt tokens are
    outside the modeled region and are ignored. A revealed context with
    zero joint mass falls back to uniform conditionals (predict never
    raises for reachable states); exact-inference callers that need the
    distinction use masked_conditional(), which raises ZeroMassContext.
    """

    def __init__(self, vocab: Vocab, joint: np.ndarray):
        joint = np.asarray(joint, dtype=np.float64)
        if joint.ndim < 1:
            raise ConfigError("joint must have at least one axis")
        if any(dim != vocab.size for dim in joint.shape):
            raise ConfigError("every joint axis must have length vocab.size")
        if (joint < 0).any():
            raise ConfigError("joint probabilities must be non-negative")
        total = joint.sum()
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"joint mass {total} not within 1e-9 of 1")
        self.vocab = vocab
        self.joint = joint / total
        self.length = joint.ndim

    def _gen_index(self, state: SeqState) -> tuple:
        if state.gen_length != self.length:
            raise ConfigError(
                f"state generation length {state.gen_length} != model length {self.length}"
            )
        idx = []
        for off in range(self.length):
            p = state.prompt_len + off
            idx.append(slice(None) if state.masked[p] else state.tokens[p])
        return tuple(idx)

    def _context_slice(self, state: SeqState) -> tuple[list[int], np.ndarray]:
        """Positions still masked and the unnormalized joint over them."""
        pos = self._check_state(state)
        sub = self.joint[self._gen_index(state)]
        return pos, np.asarray(sub)

    def masked_conditional(self, state: SeqState) -> tuple[list[int], np.ndarray]:
        """Exact joint posterior over masked positions given revealed tokens.

        Returns (positions ascending, array with one axis per position in
        that order). Raises ZeroMassContext when the revealed context has
        no mass.
        """
        pos, sub = self._context_slice(state)
        mass = sub.sum()
        if mass <= 0.0:
            raise ZeroMassContext(
                f"revealed context has zero mass at positions {pos}"
            )
        return pos, sub / mass

    def predict(self, state: SeqState) -> DenoiserOutput:
        pos, sub = self._context_slice(state)
        mass = sub.sum()
        v = self.vocab.size
        out: dict[int, np.ndarray] = {}
        for axis, p in enumerate(pos):
            if mass <= 0.0:
                probs = np.full(v, 1.0 / v)
            else:
                other = tuple(a for a in range(sub.ndim) if a != axis)
                probs = sub.sum(axis=other) / mass
            out[p] = np.log(probs + LOGIT_FLOOR)
        return DenoiserOutput(out)

    def joint_logprob(self, gen_tokens: Sequence[int]) -> float:
        """ln q(x) of a full generation-region assignment (-inf at zero mass)."""
        if len(gen_tokens) != self.length:
            raise ConfigError("assignment length mismatch")
        p = float(self.joint[tuple(int(t) for t in gen_tokens)])
        return float(np.log(p)) if p > 0.0 else float("-inf")

    # -- file format: sparse list of (assignment, mass); omitted cells are 0

    @classmethod
    def from_dict(cls, obj: dict) -> "TabularModel":
        v = int(obj["vocab_size"])
        length = int(obj["length"])
        joint = np.zeros((v,) * length)
        for entry in obj["probs"]:
            toks = tuple(int(t) for t in entry["tokens"])
            if len(toks) != length:
                raise ConfigError(f"assignment {toks} has wrong length")
            joint[toks] += float(entry["p"])
        return cls(Vocab(v), joint)

    def to_dict(self) -> dict:
        entries = []
        for toks in np.ndindex(*self.joint.shape):
            p = float(self.joint[toks])
            if p > 0.0:
                entries.append({"tokens": list(toks), "p": p})
        return {
            "vocab_size": self.vocab.size,
            "length": self.length,
            "probs": entries,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "TabularModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


class FactorizedModel(Denoiser):
    """Independent per-position distributions over the generation region."""

    def __init__(self, vocab: Vocab, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != vocab.size:
            raise ConfigError("rows must be (length, vocab.size)")
        if (rows < 0).any():
            raise ConfigError("probabilities must be non-negative")
        sums = rows.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ConfigError("each row must sum to 1")
        self.vocab = vocab
        self.rows = rows / sums[:, None]
        self.length = rows.shape[0]

    def predict(self, state: SeqState) -> DenoiserOutput:
        pos = self._check_state(state)
        if state.gen_length != self.length:
            raise ConfigError(
                f"state generation length {state.gen_length} != model length {self.length}"
            )
        out = {}
        for p in pos:
            out[p] = np.log(self.rows[p - state.prompt_len] + LOGIT_FLOOR)
        return DenoiserOutput(out)

    def as_tabular(self) -> TabularModel:
        """Product joint; intended for small instances only."""
        joint = np.array(1.0)
        for row in self.rows:
            joint = np.multiply.outer(joint, row)
        return TabularModel(self.vocab, joint)

    @classmethod
    def from_dict(cls, obj: dict) -> "FactorizedModel":
        return cls(Vocab(int(obj["vocab_size"])), np.asarray(obj["rows"], dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab.size,
            "length": self.length,
            "rows": self.rows.tolist(),
        }


class NGramMaskedModel(Denoiser):
    """Additively smoothed n-gram over the longest revealed suffix.

    The context for a masked position i is the run of revealed tokens
    immediately before i (prompt tokens count), truncated to the last n-1.
    Conditionals are (count + alpha) / (total + alpha * V), so every
    distribution is strictly positive and sums to 1. A fully masked
    neighborhood degrades to the smoothed unigram.
    """

    def __init__(
        self,
        vocab: Vocab,
        n: int,
        alpha: float,
        counts: list[dict[tuple[int, ...], np.ndarray]],
    ):
        if n < 1:
            raise ConfigError("n must be >= 1")
        if alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if len(counts) != n:
            raise ConfigError("need one count table per order 0..n-1")
        self.vocab = vocab
        self.n = n
        self.alpha = alpha
        self.counts = counts
        self._logit_cache: dict[tuple[int, ...], np.ndarray] = {}

    def _logits_for(self, ctx: tuple[int, ...]) -> np.ndarray:
        cached = self._logit_cache.get(ctx)
        if cached is not None:
            return cached
        table = self.counts[len(ctx)]
        vec = table.get(ctx)
        v = self.vocab.size
        if vec is None:
            vec = np.zeros(v)
        probs = (vec + self.alpha) / (vec.sum() + self.alpha * v)
        row = np.log(probs)
        self._logit_cache[ctx] = row
        return row

    def context_for(self, state: SeqState, position: int) -> tuple[int, ...]:
        """Revealed suffix feeding position's conditional (may be empty)."""
        lo = position
        while lo > 0 and not state.masked[lo - 1] and position - lo < self.n - 1:
            lo -= 1
        return state.tokens[lo:position]

    def predict(self, state: SeqState) -> DenoiserOutput:
        pos = self._check_state(state)
        out = {}
        for p in pos:
            out[p] = self._logits_for(self.context_for(state, p))
        return DenoiserOutput(out)


def fit_ngram(
    corpus: Iterable[Sequence[int]],
    n: int,
    alpha: float,
    vocab_size: int | None = None,
) -> NGramMaskedModel:
    """Count-based fit over integer sequences.

    vocab_size defaults to max(token)+1 (at least 2). Raises EmptyCorpus
    when no non-empty sequence is present.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if alpha <= 0:
        raise ConfigError("alpha must be > 0")
    seqs = [tuple(int(t) for t in seq) for seq in corpus]
    seqs = [s for s in seqs if s]
    if not seqs:
        raise EmptyCorpus("corpus has no non-empty sequences")
    max_tok = max(max(s) for s in seqs)
    if min(min(s) for s in seqs) < 0:
        raise ConfigError("corpus tokens must be non-negative")
    v = vocab_size if vocab_size is not None else max(max_tok + 1, 2)
    if max_tok >= v:
        raise ConfigError(f"corpus token {max_tok} outside vocab size {v}")

    counts: list[dict[tuple[int, ...], np.ndarray]] = [{} for _ in range(n)]
    for seq in seqs:
        for i, tok in enumerate(seq):
            for k in range(min(i, n - 1) + 1):
                ctx = seq[i - k : i]
                table = counts[k]
                vec = table.get(ctx)
                if vec is None:
                    vec = np.zeros(v)
                    table[ctx] = vec
                vec[tok] += 1.0
    return NGramMaskedModel(Vocab(v), n, alpha, counts)


def load_corpus(path: str | Path) -> list[tuple[int, ...]]:
    """One whitespace-separated integer sequence per line; blanks skipped."""
    seqs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                seqs.append(tuple(int(p) for p in parts))
    if not seqs:
        raise EmptyCorpus(f"no sequences in {path}")
    return seqs


class CountingDenoiser(Denoiser):
    """Transparent wrapper that counts predict() calls."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.vocab = inner.vocab
        self.concurrent_safe = inner.concurrent_safe
        self.calls = 0

    def predict(self, state: SeqState) -> DenoiserOutput:
        self.calls += 1
        return self.inner.predict(state)

    def reset(self) -> None:
        self.calls = 0


# ---------------------------------------------------------------------------
# remote protocol: one JSON object per line in each direction.
# request  = serialized state {"prompt_len", "tokens", "masked", "step"}
# response = {"logits": {"<position>": [floats]}} or {"error": "..."}


class RemoteDenoiser(Denoiser):
    """Client for a denoiser served over a byte stream.

    The wire format carries no vocab descriptor, so the caller supplies the
    vocab. One in-flight request at a time (concurrent_safe = False).
    """

    concurrent_safe = False

    def __init__(self, address: str | tuple[str, int], vocab: Vocab, timeout: float = 30.0):
        if isinstance(address, str):
            host, _, port = address.rpartition(":")
            if not host:
                raise ConfigError(f"remote address {address!r} must be host:port")
            address = (host, int(port))
        self.address = address
        self.vocab = vocab
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._fh = None
        self._lock = threading.Lock()

    def _connect(self) -> None:
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
            self._fh = self._sock.makefile("rwb")

    def predict(self, state: SeqState) -> DenoiserOutput:
        self._check_state(state)
        payload = (json.dumps(state_to_json(state), separators=(",", ":")) + "\n").encode()
        with self._lock:
            self._connect()
            self._fh.write(payload)
            self._fh.flush()
            line = self._fh.readline()
        if not line:
            raise ConfigError("remote denoiser closed the connection")
        obj = json.loads(line)
        if "error" in obj:
            raise ConfigError(f"remote denoiser error: {obj['error']}")
        logits = {int(p): np.asarray(v, dtype=np.float64) for p, v in obj["logits"].items()}
        return DenoiserOutput(logits)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            if self._sock is not None:
                self._sock.close()
                self._sock = None

    def __enter__(self) -> "RemoteDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class _DenoiserHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        model: Denoiser = self.server.model  # type: ignore[attr-defined]
        for raw in self.rfile:
            raw = raw.strip()
            if not raw:
                continue
            try:
                state = state_from_json(json.loads(raw), model.vocab)
                out = model.predict(state)
                reply = {
                    "logits": {str(p): out.logits[p].tolist() for p in out.positions()}
                }
            except Exception as exc:  # report, keep serving
                reply = {"error": f"{type(exc).__name__}: {exc}"}
            self.wfile.write((json.dumps(reply, separators=(",", ":")) + "\n").encode())
            self.wfile.flush()


class DenoiserServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, model: Denoiser, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _DenoiserHandler)
        self.model = model

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve_denoiser(model: Denoiser, host: str = "127.0.0.1", port: int = 0) -> DenoiserServer:
    """Bind a server for `model`; call .serve_in_thread() or .serve_forever()."""
    return DenoiserServer(model, host, port)
