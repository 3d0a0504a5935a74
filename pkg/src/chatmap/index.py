"""Immutable positional inverted index with compositional filter search.

A doc matches a FilterQuery iff every present predicate holds: `contains` is
a consecutive-token phrase over the doc's case-folded token stream, the seven
exact/boolean fields compare for equality, and `min_turns` compares the turn
count.  Matches are enumerated in display order (timestamp descending,
(dataset, conversation_id) ascending tie-break), capped at 10,000 per search,
and sliced into pages of at most 30 hits.

The index is immutable after build: any number of threads may search it
concurrently without locking.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, replace

from . import binio
from .corpus import (
    ConversationRecord,
    Turn,
    format_timestamp,
    timestamp_from_micros,
    timestamp_micros,
)
from .errors import DuplicateId, FormatError, InvalidArg, NotFound, PageOutOfRange

MATCH_CAP = 10_000
MAX_PAGE_SIZE = 30
MAX_THRESHOLD = 1_000
SNIPPET_CHARS = 160

# Gap inserted between consecutive turns' token positions so that a phrase
# (consecutive positions) can never straddle a turn boundary.
TURN_POSITION_GAP = 2

INDEX_MAGIC = b"WVIX"
INDEX_VERSION = 1

# Categorical fields with posting lists, in persisted order.
CATEGORICAL_FIELDS = ("dataset", "hashed_ip", "country", "state", "language", "model", "toxic", "redacted")


def tokenize(text: str) -> list[tuple[str, int]]:
    """Case-folded terms with 0-based term positions.

    Terms are maximal runs of alphanumeric code points of the case-folded
    text; everything else separates.
    """
    out = []
    pos = 0
    for isword, group in itertools.groupby(text.casefold(), key=str.isalnum):
        if isword:
            out.append(("".join(group), pos))
            pos += 1
    return out


def _bool_key(v: bool) -> str:
    return "true" if v else "false"


@dataclass(frozen=True)
class FilterQuery:
    """Conjunction of up to ten predicates plus pagination/threshold controls."""

    contains: str | None = None
    hashed_ip: str | None = None
    country: str | None = None
    state: str | None = None
    language: str | None = None
    model: str | None = None
    dataset: str | None = None
    toxic: bool | None = None
    redacted: bool | None = None
    min_turns: int | None = None
    page: int = 1
    page_size: int = MAX_PAGE_SIZE
    threshold: int = 100

    def normalized(self) -> "FilterQuery":
        """Clamp page_size into [1, 30]; validate page and threshold."""
        if self.page < 1:
            raise InvalidArg("page must be >= 1")
        if not (1 <= self.threshold <= MAX_THRESHOLD):
            raise InvalidArg(f"threshold must be in [1, {MAX_THRESHOLD}]")
        ps = min(max(self.page_size, 1), MAX_PAGE_SIZE)
        return replace(self, page_size=ps) if ps != self.page_size else self

    def field_predicates(self) -> list[tuple[str, str]]:
        """(field, value-key) pairs for the present exact/boolean predicates."""
        preds = []
        for name in ("dataset", "hashed_ip", "country", "state", "language", "model"):
            value = getattr(self, name)
            if value is not None:
                preds.append((name, value))
        for name in ("toxic", "redacted"):
            value = getattr(self, name)
            if value is not None:
                preds.append((name, _bool_key(value)))
        return preds


@dataclass(frozen=True)
class SearchHit:
    conversation_id: str
    dataset: str
    timestamp: str  # RFC 3339
    country: str
    state: str
    hashed_ip: str
    model: str
    snippet: str


@dataclass(frozen=True)
class ResultPage:
    total_matched: int
    cap_applied: bool
    page: int
    hits: tuple[SearchHit, ...]


def _doc_sort_key(rec: ConversationRecord):
    return (-timestamp_micros(rec.timestamp), rec.dataset, rec.conversation_id)


def _doc_positions(rec: ConversationRecord) -> dict[str, list[int]]:
    """term -> ascending positions over all turns, with inter-turn gaps."""
    positions: dict[str, list[int]] = {}
    offset = 0
    for turn in rec.turns:
        toks = tokenize(turn.text)
        for term, pos in toks:
            positions.setdefault(term, []).append(offset + pos)
        offset += len(toks) + TURN_POSITION_GAP
    return positions


class CorpusIndex:
    """Positional inverted index + per-field metadata postings.

    Docs are stored in display order, so a doc's ordinal doubles as its rank
    in doc_order and postings (ascending by ordinal) enumerate matches in
    result order.  `input_positions[ordinal]` records where the doc stood in
    the build input (the sort permutation).
    """

    def __init__(self, docs, input_positions, term_postings, field_postings):
        self.docs: list[ConversationRecord] = docs
        self.input_positions: list[int] = input_positions
        self.term_postings: dict[str, list[tuple[int, tuple[int, ...]]]] = term_postings
        self.field_postings: dict[tuple[str, str], list[int]] = field_postings
        self.turn_counts: list[int] = [d.turn_count for d in docs]
        self._by_key: dict[tuple[str, str], int] = {d.key: i for i, d in enumerate(docs)}

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def doc_order(self) -> list[int]:
        return self.input_positions

    def vocabulary(self) -> list[str]:
        return sorted(self.term_postings)

    def ordinal_of(self, dataset: str, conversation_id: str) -> int | None:
        return self._by_key.get((dataset, conversation_id))


def build_index(records) -> CorpusIndex:
    """Build the immutable index; raises DuplicateId on repeated keys."""
    records = list(records)
    seen: set[tuple[str, str]] = set()
    for rec in records:
        if rec.key in seen:
            raise DuplicateId(f"duplicate (dataset, conversation_id): {rec.key}")
        seen.add(rec.key)

    order = sorted(range(len(records)), key=lambda i: _doc_sort_key(records[i]))
    docs = [records[i] for i in order]

    term_postings: dict[str, list[tuple[int, tuple[int, ...]]]] = {}
    field_postings: dict[tuple[str, str], list[int]] = {}
    for ordinal, rec in enumerate(docs):
        for term, positions in _doc_positions(rec).items():
            term_postings.setdefault(term, []).append((ordinal, tuple(positions)))
        for fname in ("dataset", "hashed_ip", "country", "state", "language", "model"):
            field_postings.setdefault((fname, getattr(rec, fname)), []).append(ordinal)
        field_postings.setdefault(("toxic", _bool_key(rec.toxic)), []).append(ordinal)
        field_postings.setdefault(("redacted", _bool_key(rec.redacted)), []).append(ordinal)

    return CorpusIndex(docs, order, term_postings, field_postings)


def _intersect_sorted(lists: list[list[int]]) -> list[int]:
    """Intersection of strictly ascending int lists, ascending."""
    if not lists:
        return []
    lists = sorted(lists, key=len)
    result = lists[0]
    for other in lists[1:]:
        if not result:
            return []
        out = []
        i = j = 0
        n, m = len(result), len(other)
        while i < n and j < m:
            a, b = result[i], other[j]
            if a == b:
                out.append(a)
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        result = out
    return result


def _phrase_match(position_lists: list[tuple[int, ...]]) -> bool:
    """True if some p has p+i present in position_lists[i] for all i."""
    if len(position_lists) == 1:
        return bool(position_lists[0])
    shifted = [set(p - i for p in positions) for i, positions in enumerate(position_lists)]
    smallest = min(shifted, key=len)
    return any(all(p in s for s in shifted) for p in smallest)


def iter_matching_ordinals(index: CorpusIndex, query: FilterQuery):
    """Yield matching doc ordinals in doc_order (ascending ordinal)."""
    q = query.normalized()
    terms = [t for t, _ in tokenize(q.contains)] if q.contains else []

    candidate_lists: list[list[int]] = []
    for key in q.field_predicates():
        candidate_lists.append(index.field_postings.get(key, []))

    term_entries: list[list[tuple[int, tuple[int, ...]]]] = []
    for term in terms:
        entries = index.term_postings.get(term)
        if entries is None:
            return
        term_entries.append(entries)
        candidate_lists.append([e[0] for e in entries])

    if candidate_lists:
        candidates = _intersect_sorted(candidate_lists)
    else:
        candidates = range(len(index.docs))

    # Per-term cursors for position lookup; candidates ascend, so each cursor
    # only moves forward.
    cursors = [0] * len(term_entries)
    min_turns = q.min_turns
    for ordinal in candidates:
        if min_turns is not None and index.turn_counts[ordinal] < min_turns:
            continue
        if term_entries:
            position_lists = []
            for t, entries in enumerate(term_entries):
                i = cursors[t]
                while entries[i][0] != ordinal:
                    i += 1
                cursors[t] = i
                position_lists.append(entries[i][1])
            if not _phrase_match(position_lists):
                continue
        yield ordinal


def _make_hit(rec: ConversationRecord) -> SearchHit:
    first = rec.first_user_text() or ""
    return SearchHit(
        conversation_id=rec.conversation_id,
        dataset=rec.dataset,
        timestamp=format_timestamp(rec.timestamp),
        country=rec.country,
        state=rec.state,
        hashed_ip=rec.hashed_ip,
        model=rec.model,
        snippet=first[:SNIPPET_CHARS],
    )


def execute_search(index: CorpusIndex, query: FilterQuery) -> ResultPage:
    """Run the query; cap at 10,000 matches, slice the requested page.

    Raises PageOutOfRange for pages past the last non-empty page (page 1 of
    an empty result is allowed and empty).
    """
    q = query.normalized()
    matches = list(itertools.islice(iter_matching_ordinals(index, q), MATCH_CAP + 1))
    cap_applied = len(matches) > MATCH_CAP
    if cap_applied:
        matches = matches[:MATCH_CAP]
    total = len(matches)

    last_page = max(1, -(-total // q.page_size))
    if q.page > last_page:
        raise PageOutOfRange(f"page {q.page} is beyond last page {last_page}")
    start = (q.page - 1) * q.page_size
    hits = tuple(_make_hit(index.docs[o]) for o in matches[start:start + q.page_size])
    return ResultPage(total_matched=total, cap_applied=cap_applied, page=q.page, hits=hits)


def get_conversation(index: CorpusIndex, dataset: str, conversation_id: str) -> ConversationRecord:
    ordinal = index.ordinal_of(dataset, conversation_id)
    if ordinal is None:
        raise NotFound(f"no conversation {conversation_id!r} in dataset {dataset!r}")
    return index.docs[ordinal]


# ---------------------------------------------------------------------------
# Persistence (WVIX; layout documented in docs/FORMATS.md)
# ---------------------------------------------------------------------------


def _flags(rec: ConversationRecord) -> int:
    return (1 if rec.toxic else 0) | (2 if rec.redacted else 0)


def write_index_bytes(index: CorpusIndex) -> bytes:
    buf = io.BytesIO()
    buf.write(INDEX_MAGIC)
    binio.write_u16(buf, INDEX_VERSION)

    binio.write_u32(buf, len(index.docs))
    for ordinal, rec in enumerate(index.docs):
        binio.write_str(buf, rec.conversation_id)
        binio.write_str(buf, rec.dataset)
        binio.write_i64(buf, timestamp_micros(rec.timestamp))
        binio.write_u32(buf, index.input_positions[ordinal])
        binio.write_str(buf, rec.hashed_ip)
        binio.write_str(buf, rec.country)
        binio.write_str(buf, rec.state)
        binio.write_str(buf, rec.language)
        binio.write_str(buf, rec.model)
        binio.write_u8(buf, _flags(rec))
        binio.write_u32(buf, len(rec.turns))
        for turn in rec.turns:
            binio.write_u8(buf, 0 if turn.role == "user" else 1)
            binio.write_str(buf, turn.text)

    binio.write_u32(buf, len(index.term_postings))
    for term in sorted(index.term_postings):
        entries = index.term_postings[term]
        binio.write_str(buf, term)
        binio.write_varint(buf, len(entries))
        binio.write_deltas(buf, (e[0] for e in entries))
        for _, positions in entries:
            binio.write_varint(buf, len(positions))
            binio.write_deltas(buf, positions)

    binio.write_u32(buf, len(index.field_postings))
    for (fname, value) in sorted(index.field_postings):
        ordinals = index.field_postings[(fname, value)]
        binio.write_str(buf, fname)
        binio.write_str(buf, value)
        binio.write_varint(buf, len(ordinals))
        binio.write_deltas(buf, ordinals)
    return buf.getvalue()


def read_index_bytes(data: bytes) -> CorpusIndex:
    r = binio.Reader(data)
    r.expect_magic(INDEX_MAGIC)
    version = r.read_u16()
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")

    doc_count = r.read_u32()
    docs: list[ConversationRecord] = []
    input_positions: list[int] = []
    for _ in range(doc_count):
        conversation_id = r.read_str()
        dataset = r.read_str()
        ts = timestamp_from_micros(r.read_i64())
        input_positions.append(r.read_u32())
        hashed_ip = r.read_str()
        country = r.read_str()
        state = r.read_str()
        language = r.read_str()
        model = r.read_str()
        flags = r.read_u8()
        n_turns = r.read_u32()
        turns = []
        for _ in range(n_turns):
            role = "user" if r.read_u8() == 0 else "assistant"
            turns.append(Turn(role, r.read_str()))
        docs.append(ConversationRecord(
            conversation_id=conversation_id,
            dataset=dataset,
            timestamp=ts,
            turns=tuple(turns),
            hashed_ip=hashed_ip,
            country=country,
            state=state,
            language=language,
            toxic=bool(flags & 1),
            redacted=bool(flags & 2),
            model=model,
        ))

    term_postings: dict[str, list[tuple[int, tuple[int, ...]]]] = {}
    for _ in range(r.read_u32()):
        term = r.read_str()
        n_docs = r.read_varint()
        ordinals = r.read_deltas(n_docs)
        entries = []
        for ordinal in ordinals:
            n_pos = r.read_varint()
            entries.append((ordinal, tuple(r.read_deltas(n_pos))))
        term_postings[term] = entries

    field_postings: dict[tuple[str, str], list[int]] = {}
    for _ in range(r.read_u32()):
        fname = r.read_str()
        value = r.read_str()
        n_docs = r.read_varint()
        field_postings[(fname, value)] = r.read_deltas(n_docs)

    if not r.eof():
        raise FormatError("trailing bytes after index")
    idx = CorpusIndex(docs, input_positions, term_postings, field_postings)
    return idx


def save_index(index: CorpusIndex, path) -> None:
    data = write_index_bytes(index)
    with open(path, "wb") as fh:
        fh.write(data)


def load_index(path) -> CorpusIndex:
    with open(path, "rb") as fh:
        return read_index_bytes(fh.read())
