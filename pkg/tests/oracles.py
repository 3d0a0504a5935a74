"""Independent reference implementations used to cross-check the package.

Nothing here imports the implementation paths it is checking: tokenization is
a hand-rolled character scan, search is a linear pass over records, k-NN is
the O(n^2) definition, the bundle reader speaks raw struct, and FNV-1a is
re-derived from its published constants.
"""

from __future__ import annotations

import gzip
import struct

from chatmap.corpus import ConversationRecord
from chatmap.index import FilterQuery

MATCH_CAP = 10_000


def reference_tokenize(text: str) -> list[tuple[str, int]]:
    folded = text.casefold()
    tokens: list[str] = []
    current: list[str] = []
    for ch in folded:
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return [(tok, i) for i, tok in enumerate(tokens)]


def _turn_tokens(rec: ConversationRecord) -> list[list[str]]:
    return [[t for t, _ in reference_tokenize(turn.text)] for turn in rec.turns]


def _has_phrase(turn_tokens: list[list[str]], terms: list[str]) -> bool:
    m = len(terms)
    for tokens in turn_tokens:
        for i in range(len(tokens) - m + 1):
            if tokens[i:i + m] == terms:
                return True
    return False


class OracleCorpus:
    """Linear-scan search oracle over a fixed record list.

    Ordering is produced independently of the index: a stable sort by
    (dataset, conversation_id) followed by a stable sort on timestamp
    descending, which equals ordering by (-timestamp, dataset, id).
    Turn token lists are precomputed once; every query still visits every
    record.
    """

    def __init__(self, records):
        by_id = sorted(records, key=lambda r: (r.dataset, r.conversation_id))
        self.ordered = sorted(by_id, key=lambda r: r.timestamp, reverse=True)
        self.tokens = {rec.key: _turn_tokens(rec) for rec in self.ordered}

    def matches(self, rec: ConversationRecord, q: FilterQuery, terms: list[str]) -> bool:
        for name in ("dataset", "hashed_ip", "country", "state", "language", "model"):
            want = getattr(q, name)
            if want is not None and getattr(rec, name) != want:
                return False
        if q.toxic is not None and rec.toxic != q.toxic:
            return False
        if q.redacted is not None and rec.redacted != q.redacted:
            return False
        if q.min_turns is not None and rec.turn_count < q.min_turns:
            return False
        if terms and not _has_phrase(self.tokens[rec.key], terms):
            return False
        return True

    def search(self, q: FilterQuery):
        """(total_matched, cap_applied, matched keys in display order, capped)."""
        terms = [t for t, _ in reference_tokenize(q.contains)] if q.contains else []
        keys: list[tuple[str, str]] = []
        cap_applied = False
        for rec in self.ordered:
            if not self.matches(rec, q, terms):
                continue
            if len(keys) == MATCH_CAP:
                cap_applied = True
                break
            keys.append(rec.key)
        return len(keys), cap_applied, keys

    def page(self, q: FilterQuery, page: int, page_size: int):
        _, _, keys = self.search(q)
        return keys[(page - 1) * page_size: page * page_size]


def brute_force_knn(X, k: int):
    """Exact neighbor lists by the definition: sort by (distance, index)."""
    import math

    n = len(X)
    idx_out = []
    dist_out = []
    for i in range(n):
        cands = []
        for j in range(n):
            if j == i:
                continue
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(X[i], X[j])))
            cands.append((d, j))
        cands.sort()
        idx_out.append([j for _, j in cands[:k]])
        dist_out.append([d for d, _ in cands[:k]])
    return idx_out, dist_out


def read_bundle_raw(data: bytes):
    """Struct-level bundle reader, independent of chatmap.vizservice."""
    payload = gzip.decompress(data)
    assert payload[:4] == b"WVB1"
    pos = 4

    def u16str():
        nonlocal pos
        (n,) = struct.unpack_from("<H", payload, pos)
        pos += 2
        out = payload[pos:pos + n].decode("utf-8")
        pos += n
        return out

    (n_datasets,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    result = []
    for _ in range(n_datasets):
        name = u16str()
        (n_points,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        points = []
        for _ in range(n_points):
            cid = u16str()
            x, y = struct.unpack_from("<ff", payload, pos)
            pos += 8
            points.append((cid, x, y, u16str()))
        result.append((name, points))
    assert pos == len(payload)
    return result


def fnv1a64_reference(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) % (1 << 64)
    return h


def make_random_query(rng, records, *, page: int = 1, page_size: int = 30) -> FilterQuery:
    """Random FilterQuery mixing selective and non-selective predicates."""
    kwargs: dict = {"page": page, "page_size": page_size}
    rec = records[rng.randrange(len(records))]

    mode = rng.random()
    if mode < 0.45:
        # phrase lifted from a real turn (guaranteed non-trivial hit count)
        turn = rec.turns[rng.randrange(len(rec.turns))]
        tokens = [t for t, _ in reference_tokenize(turn.text)]
        if tokens:
            length = rng.randint(1, min(3, len(tokens)))
            start = rng.randrange(len(tokens) - length + 1)
            kwargs["contains"] = " ".join(tokens[start:start + length])
    elif mode < 0.55:
        kwargs["contains"] = rng.choice(["zzzqx", "python", "email", "how many", "story"])

    if rng.random() < 0.4:
        kwargs["language"] = rec.language if rng.random() < 0.8 else "Klingon"
    if rng.random() < 0.25:
        kwargs["country"] = rec.country
        if rec.state and rng.random() < 0.5:
            kwargs["state"] = rec.state
    if rng.random() < 0.15:
        kwargs["model"] = rec.model
    if rng.random() < 0.1:
        kwargs["hashed_ip"] = rec.hashed_ip
    if rng.random() < 0.2:
        kwargs["toxic"] = rng.random() < 0.5
    if rng.random() < 0.15:
        kwargs["redacted"] = rng.random() < 0.5
    if rng.random() < 0.3:
        kwargs["min_turns"] = rng.randint(1, 7)
    if rng.random() < 0.1:
        kwargs["dataset"] = rec.dataset
    return FilterQuery(**kwargs)
