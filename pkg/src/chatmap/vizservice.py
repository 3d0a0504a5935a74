"""Display subsets, coordinate bundles, the coordinate cache, and the
subset-first highlight protocol.

The embedding page never ships the whole corpus: a fixed uniform sample of at
most 1,500 conversations per dataset is laid out ahead of time and delivered
as one gzip-compressed binary bundle (WVB1, bit-exact across rebuilds).
Highlight queries run against the subset's own index first; only when the
subset yields fewer matches than the query threshold is the full index
consulted, and the extra matches are embedded, projected and memoized in a
write-once SQLite coordinate cache keyed by (dataset, conversation_id,
model_version).
"""

from __future__ import annotations

import gzip
import io
import sqlite3
import struct
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import ConversationRecord
from .embedding import EmbedderConfig, embed_first_turn, is_degenerate, make_embedder
from .errors import CacheUnavailable, FormatError, InvalidArg, MissingCoordinate
from .index import CorpusIndex, FilterQuery, build_index, iter_matching_ordinals
from .projection import (
    LayoutParams,
    ProjectorModel,
    fit_projector,
    kmeans_labels,
    knn_graph,
    model_fingerprint,
    optimize_layout,
    silhouette_score,
    write_model_bytes,
)

BUNDLE_MAGIC = b"WVB1"
MAX_SUBSET_PER_DATASET = 1_500
PREVIEW_CHARS = 120
_GZIP_LEVEL = 6

Key = tuple[str, str]  # (dataset, conversation_id)


@dataclass(frozen=True)
class DisplaySubset:
    language: str
    seed: int
    per_dataset: dict[str, list[str]]

    def keys(self) -> set[Key]:
        return {(d, cid) for d, ids in self.per_dataset.items() for cid in ids}

    def total(self) -> int:
        return sum(len(ids) for ids in self.per_dataset.values())


def select_display_subset(records, language: str, n_per_dataset: int = MAX_SUBSET_PER_DATASET,
                          seed: int = 0) -> DisplaySubset:
    """Uniform sample without replacement per dataset, deterministic per seed.

    Only records of `language` (exact match) with a non-empty first user turn
    are candidates; datasets smaller than n_per_dataset contribute all their
    records.
    """
    import random

    by_dataset: dict[str, list[str]] = {}
    for rec in records:
        if rec.language != language:
            continue
        if not rec.first_user_text():
            continue
        by_dataset.setdefault(rec.dataset, []).append(rec.conversation_id)

    per_dataset: dict[str, list[str]] = {}
    for dataset in sorted(by_dataset):
        ids = sorted(by_dataset[dataset])
        rng = random.Random(f"{seed}|{dataset}")
        take = min(n_per_dataset, len(ids))
        per_dataset[dataset] = sorted(rng.sample(ids, take))
    return DisplaySubset(language=language, seed=seed, per_dataset=per_dataset)


def make_preview(rec: ConversationRecord) -> str:
    return (rec.first_user_text() or "")[:PREVIEW_CHARS]


# ---------------------------------------------------------------------------
# Coordinate bundle (WVB1; layout documented in docs/FORMATS.md)
# ---------------------------------------------------------------------------


def _write_u16_str(buf: io.BytesIO, s: str) -> None:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise FormatError("string too long for u16 length prefix")
    buf.write(struct.pack("<H", len(data)))
    buf.write(data)


def build_bundle(subset: DisplaySubset, coordinates: dict[Key, tuple[float, float]],
                 previews: dict[Key, str]) -> bytes:
    """Serialize and gzip the subset's points; byte-deterministic.

    Coordinates are stored as little-endian float32 (values are cast on
    write).  Raises MissingCoordinate if any subset id lacks one.
    """
    payload = io.BytesIO()
    payload.write(BUNDLE_MAGIC)
    payload.write(struct.pack("<I", len(subset.per_dataset)))
    for dataset in sorted(subset.per_dataset):
        ids = subset.per_dataset[dataset]
        _write_u16_str(payload, dataset)
        payload.write(struct.pack("<I", len(ids)))
        for cid in ids:
            key = (dataset, cid)
            if key not in coordinates:
                raise MissingCoordinate(f"no coordinate for {key}")
            x, y = coordinates[key]
            _write_u16_str(payload, cid)
            payload.write(struct.pack("<ff", x, y))
            _write_u16_str(payload, previews.get(key, ""))
    return gzip.compress(payload.getvalue(), compresslevel=_GZIP_LEVEL, mtime=0)


@dataclass(frozen=True)
class BundlePoint:
    conversation_id: str
    x: float
    y: float
    preview: str


@dataclass(frozen=True)
class ParsedBundle:
    datasets: list[tuple[str, list[BundlePoint]]]

    def total(self) -> int:
        return sum(len(points) for _, points in self.datasets)


def parse_bundle(data: bytes) -> ParsedBundle:
    try:
        payload = gzip.decompress(data)
    except (OSError, EOFError) as exc:
        raise FormatError(f"bundle is not valid gzip: {exc}") from None
    view = memoryview(payload)
    if bytes(view[:4]) != BUNDLE_MAGIC:
        raise FormatError("bad bundle magic")
    pos = 4

    def read_u16str() -> str:
        nonlocal pos
        (n,) = struct.unpack_from("<H", view, pos)
        pos += 2
        s = bytes(view[pos:pos + n]).decode("utf-8")
        pos += n
        return s

    (n_datasets,) = struct.unpack_from("<I", view, pos)
    pos += 4
    datasets = []
    for _ in range(n_datasets):
        name = read_u16str()
        (n_points,) = struct.unpack_from("<I", view, pos)
        pos += 4
        points = []
        for _ in range(n_points):
            cid = read_u16str()
            x, y = struct.unpack_from("<ff", view, pos)
            pos += 8
            points.append(BundlePoint(cid, x, y, read_u16str()))
        datasets.append((name, points))
    if pos != len(payload):
        raise FormatError("trailing bytes after bundle payload")
    return ParsedBundle(datasets=datasets)


# ---------------------------------------------------------------------------
# Coordinate cache
# ---------------------------------------------------------------------------


class CoordinateCache:
    """Write-once persistent (dataset, conversation_id, model_version) -> (x, y).

    Backed by SQLite; a key never changes value once written (INSERT OR
    IGNORE), so concurrent duplicate computes are harmless.  Backend failures
    surface as CacheUnavailable so callers can degrade to compute-only.
    """

    def __init__(self, path=":memory:"):
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        try:
            self._conn = sqlite3.connect(str(path), check_same_thread=False)
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS coords ("
                " dataset TEXT NOT NULL,"
                " conversation_id TEXT NOT NULL,"
                " model_version TEXT NOT NULL,"
                " x REAL NOT NULL,"
                " y REAL NOT NULL,"
                " PRIMARY KEY (dataset, conversation_id, model_version))"
            )
            self._conn.commit()
        except sqlite3.Error as exc:
            raise CacheUnavailable(f"cannot open coordinate cache: {exc}") from exc

    def get(self, dataset: str, conversation_id: str, model_version: str) -> tuple[float, float] | None:
        with self._lock:
            try:
                row = self._conn.execute(
                    "SELECT x, y FROM coords WHERE dataset=? AND conversation_id=? AND model_version=?",
                    (dataset, conversation_id, model_version),
                ).fetchone()
            except sqlite3.Error as exc:
                raise CacheUnavailable(str(exc)) from exc
            if row is None:
                self.misses += 1
                return None
            self.hits += 1
            return (row[0], row[1])

    def put(self, dataset: str, conversation_id: str, model_version: str, x: float, y: float) -> None:
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT OR IGNORE INTO coords VALUES (?, ?, ?, ?, ?)",
                    (dataset, conversation_id, model_version, float(x), float(y)),
                )
                self._conn.commit()
            except sqlite3.Error as exc:
                raise CacheUnavailable(str(exc)) from exc

    def __len__(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM coords").fetchone()[0]

    def close(self) -> None:
        self._conn.close()


# ---------------------------------------------------------------------------
# Highlight protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FallbackPoint:
    dataset: str
    conversation_id: str
    x: float
    y: float
    preview: str


@dataclass(frozen=True)
class HighlightResult:
    matched_in_subset: list[Key]
    fallback_points: list[FallbackPoint]
    fallback_used: bool
    counters: dict[str, int]


@dataclass
class ServiceCounters:
    subset_searches: int = 0
    full_index_searches: int = 0
    projector_invocations: int = 0
    cache_unavailable: int = 0


class VizService:
    """Executes subset-first highlight for one language map.

    Thread-safe for concurrent highlight calls: the indexes and model are
    immutable, the cache is write-once, and counters are advisory.
    """

    def __init__(self, full_index: CorpusIndex, subset: DisplaySubset, model: ProjectorModel,
                 model_version: str, cache: CoordinateCache, embedder,
                 subset_index: CorpusIndex | None = None):
        self.full_index = full_index
        self.subset = subset
        self.subset_keys = subset.keys()
        self.model = model
        self.model_version = model_version
        self.cache = cache
        self.embedder = embedder
        self.counters = ServiceCounters()
        if subset_index is None:
            subset_records = [full_index.docs[full_index.ordinal_of(d, cid)]
                              for d, ids in subset.per_dataset.items() for cid in ids]
            subset_index = build_index(subset_records)
        self.subset_index = subset_index

    @property
    def language(self) -> str:
        return self.subset.language

    def counters_snapshot(self) -> dict[str, int]:
        return {
            "subset_searches": self.counters.subset_searches,
            "full_index_searches": self.counters.full_index_searches,
            "projector_invocations": self.counters.projector_invocations,
            "cache_hits": self.cache.hits,
            "cache_misses": self.cache.misses,
            "cache_unavailable": self.counters.cache_unavailable,
        }

    def _coords_for(self, rec: ConversationRecord) -> tuple[float, float]:
        cached = None
        try:
            cached = self.cache.get(rec.dataset, rec.conversation_id, self.model_version)
        except CacheUnavailable:
            self.counters.cache_unavailable += 1
        if cached is not None:
            return cached
        v = embed_first_turn(rec, self.embedder)
        x, y = self.model.project(v)
        x = float(np.float32(x))
        y = float(np.float32(y))
        self.counters.projector_invocations += 1
        try:
            self.cache.put(rec.dataset, rec.conversation_id, self.model_version, x, y)
        except CacheUnavailable:
            self.counters.cache_unavailable += 1
        return (x, y)

    def highlight(self, query: FilterQuery) -> HighlightResult:
        """Subset search first; full-index fallback only below the threshold.

        The map's language is forced into the query (both phases), so every
        fallback hit is projectable by this map's model.  When fallback runs,
        at most `threshold` total points are returned: all subset matches plus
        the first (threshold - |subset matches|) full-index matches in display
        order that are not already displayed.
        """
        q = replace(query.normalized(), language=self.language)
        self.counters.subset_searches += 1
        matched = [self.subset_index.docs[o].key
                   for o in iter_matching_ordinals(self.subset_index, q)]
        if len(matched) >= q.threshold:
            return HighlightResult(matched, [], False, self.counters_snapshot())

        self.counters.full_index_searches += 1
        budget = q.threshold - len(matched)
        fallback: list[FallbackPoint] = []
        for ordinal in iter_matching_ordinals(self.full_index, q):
            rec = self.full_index.docs[ordinal]
            if rec.key in self.subset_keys:
                continue
            x, y = self._coords_for(rec)
            fallback.append(FallbackPoint(rec.dataset, rec.conversation_id, x, y, make_preview(rec)))
            if len(fallback) >= budget:
                break
        return HighlightResult(matched, fallback, True, self.counters_snapshot())


# ---------------------------------------------------------------------------
# Language map pipeline (subset -> layout -> projector -> bundle inputs)
# ---------------------------------------------------------------------------


@dataclass
class LanguageMap:
    subset: DisplaySubset
    coordinates: dict[Key, tuple[float, float]]
    previews: dict[Key, str]
    model: ProjectorModel
    model_bytes: bytes = field(repr=False)
    model_version: str
    silhouette: float

    @property
    def language(self) -> str:
        return self.subset.language

    def bundle_bytes(self) -> bytes:
        return build_bundle(self.subset, self.coordinates, self.previews)


def build_language_map(
    records,
    language: str,
    *,
    embed_cfg: EmbedderConfig | None = None,
    layout_params: LayoutParams | None = None,
    n_per_dataset: int = MAX_SUBSET_PER_DATASET,
    seed: int = 0,
    projector_hidden: int = 64,
    metric_clusters: int = 5,
) -> LanguageMap:
    """Train one language's display artifacts from corpus records.

    Deterministic for fixed inputs and seed.  The silhouette metric scores the
    2D layout against cluster labels derived by k-means on the input
    embeddings (no external labels exist for real corpora).
    """
    embed_cfg = embed_cfg or EmbedderConfig()
    layout_params = layout_params or LayoutParams(rng_seed=seed)
    embedder = make_embedder(embed_cfg)

    subset = select_display_subset(records, language, n_per_dataset, seed)
    by_key = {rec.key: rec for rec in records}
    subset_records = [by_key[(d, cid)] for d, ids in subset.per_dataset.items() for cid in ids]
    if len(subset_records) <= layout_params.k_neighbors:
        raise InvalidArg(
            f"subset has {len(subset_records)} usable records; "
            f"need more than k={layout_params.k_neighbors} to train a layout"
        )

    X = np.stack([embed_first_turn(rec, embedder) for rec in subset_records])
    degenerate = [i for i in range(len(X)) if is_degenerate(X[i])]
    if degenerate:  # subset selection already excludes these; defense in depth
        keep = [i for i in range(len(X)) if i not in set(degenerate)]
        subset_records = [subset_records[i] for i in keep]
        X = X[keep]

    ids = [f"{rec.dataset}/{rec.conversation_id}" for rec in subset_records]
    graph = knn_graph(X, layout_params.k_neighbors)
    layout = optimize_layout(graph, layout_params, point_ids=ids)
    model = fit_projector(X, layout, language, hidden=projector_hidden, seed=seed)
    model_bytes = write_model_bytes(model)

    coordinates: dict[Key, tuple[float, float]] = {}
    previews: dict[Key, str] = {}
    for rec, xy in zip(subset_records, layout.Y):
        coordinates[rec.key] = (float(np.float32(xy[0])), float(np.float32(xy[1])))
        previews[rec.key] = make_preview(rec)

    sil = 0.0
    if len(X) >= 2 * metric_clusters:
        labels = kmeans_labels(X, metric_clusters, seed=seed)
        sil = silhouette_score(layout.Y, labels)

    return LanguageMap(
        subset=subset,
        coordinates=coordinates,
        previews=previews,
        model=model,
        model_bytes=model_bytes,
        model_version=model_fingerprint(model_bytes),
        silhouette=sil,
    )
