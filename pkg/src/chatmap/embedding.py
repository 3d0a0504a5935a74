"""Deterministic text embeddings for conversations (first user turn only).

The local embedder is a hashed bag of character n-grams: every n-gram of the
case-folded text (n in `ngram_range`, inclusive) lands in bucket
``fnv1a64(utf8(g)) % dim`` with sign taken from the low bit of a second hash
``fnv1a64(b"\\x01" + utf8(g))``, then the histogram is L2-normalized.  FNV-1a
uses the published 64-bit constants (see docs/FORMATS.md), so independent
implementations can reproduce vectors bit-for-bit; tests/data holds the
conformance vectors.

An external-API embedder kind exists as a client interface; tests exercise it
with a recorded-response transport, never over the network.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .corpus import ConversationRecord
from .errors import ExternalUnavailable, InvalidArg, NoUserTurn

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_SIGN_PREFIX = b"\x01"

KIND_LOCAL = "local-deterministic"
KIND_EXTERNAL = "external-api"

DEFAULT_DIMENSION = 256
DEFAULT_NGRAM_RANGE = (3, 5)


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET_BASIS
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@lru_cache(maxsize=1 << 18)
def _gram_hashes(gram: str) -> tuple[int, int]:
    data = gram.encode("utf-8")
    return fnv1a64(data), fnv1a64(_SIGN_PREFIX + data)


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = KIND_LOCAL
    dimension: int = DEFAULT_DIMENSION
    ngram_range: tuple[int, int] = DEFAULT_NGRAM_RANGE
    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    max_retries: int = 2

    def __post_init__(self):
        if self.kind not in (KIND_LOCAL, KIND_EXTERNAL):
            raise InvalidArg(f"unknown embedder kind {self.kind!r}")
        if self.dimension < 8:
            raise InvalidArg("dimension must be >= 8")
        lo, hi = self.ngram_range
        if not (1 <= lo <= hi):
            raise InvalidArg(f"bad ngram_range {self.ngram_range}")


def local_embed(text: str, dim: int = DEFAULT_DIMENSION, ngram_range: tuple[int, int] = DEFAULT_NGRAM_RANGE) -> np.ndarray:
    """Hashed character n-gram embedding; the all-zeros vector for texts with
    no n-grams (too short / empty) is returned unnormalized."""
    if dim < 8:
        raise InvalidArg("dimension must be >= 8")
    folded = text.casefold()
    v = np.zeros(dim, dtype=np.float64)
    lo, hi = ngram_range
    for n in range(lo, hi + 1):
        for i in range(len(folded) - n + 1):
            h, s = _gram_hashes(folded[i:i + n])
            v[h % dim] += 1.0 if s & 1 == 0 else -1.0
    norm = float(np.linalg.norm(v))
    if norm > 0.0:
        v /= norm
    return v


def is_degenerate(vector: np.ndarray) -> bool:
    """True for the zero-information (all-zeros, unnormalized) embedding."""
    return not np.any(vector)


class LocalEmbedder:
    def __init__(self, cfg: EmbedderConfig):
        self.cfg = cfg

    def embed(self, text: str) -> np.ndarray:
        return local_embed(text, self.cfg.dimension, self.cfg.ngram_range)


class ExternalEmbedder:
    """Client for a remote embedding endpoint.

    `transport` is any callable(text) -> sequence of floats; production wiring
    would close over an HTTP session, tests pass a recorded-response double.
    Failures are retried at most cfg.max_retries times, then surface as
    ExternalUnavailable.
    """

    def __init__(self, cfg: EmbedderConfig, transport: Callable[[str], Sequence[float]]):
        self.cfg = cfg
        self._transport = transport

    def embed(self, text: str) -> np.ndarray:
        last_exc: Exception | None = None
        for _ in range(self.cfg.max_retries + 1):
            try:
                values = self._transport(text)
                break
            except Exception as exc:  # transport owns its error taxonomy
                last_exc = exc
        else:
            raise ExternalUnavailable(f"embedding endpoint failed after {self.cfg.max_retries + 1} attempts") from last_exc
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (self.cfg.dimension,):
            raise ExternalUnavailable(f"endpoint returned shape {v.shape}, expected ({self.cfg.dimension},)")
        norm = float(np.linalg.norm(v))
        if norm > 0.0:
            v = v / norm
        return v


def make_embedder(cfg: EmbedderConfig, transport: Callable[[str], Sequence[float]] | None = None):
    if cfg.kind == KIND_LOCAL:
        return LocalEmbedder(cfg)
    if transport is None:
        raise InvalidArg("external-api embedder requires a transport")
    return ExternalEmbedder(cfg, transport)


def embed_first_turn(record: ConversationRecord, embedder) -> np.ndarray:
    """Embed exactly the first user turn's text (later turns never matter)."""
    text = record.first_user_text()
    if text is None:
        raise NoUserTurn(f"record {record.key} has no user turn")
    return embedder.embed(text)


def embed_records(records, embedder) -> np.ndarray:
    """(n, dim) matrix of first-turn embeddings, rows in input order."""
    rows = [embed_first_turn(rec, embedder) for rec in records]
    if not rows:
        return np.zeros((0, embedder.cfg.dimension), dtype=np.float64)
    return np.stack(rows)
