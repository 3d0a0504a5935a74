"""Operator entry points.

    chatmap synth        generate a deterministic synthetic corpus
    chatmap ingest       parse a line-delimited dataset into canonical form
    chatmap build-index  build and persist the search index (WVIX)
    chatmap train        train a language's layout + projector, emit WVPM/WVB1
    chatmap bundle       recompute just the coordinate bundle
    chatmap serve        run the HTTP API
    chatmap bench        indexed vs naive-scan latency on random keywords

Every command is deterministic for a fixed seed except the wall-clock fields
of bench reports.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

from .corpus import (
    BUILTIN_ADAPTERS,
    generate_synthetic_corpus,
    get_adapter,
    load_corpus,
    save_corpus,
)
from .embedding import DEFAULT_NGRAM_RANGE, EmbedderConfig, make_embedder
from .errors import ChatmapError
from .index import (
    MATCH_CAP,
    CorpusIndex,
    FilterQuery,
    build_index,
    execute_search,
    load_index,
    save_index,
    tokenize,
)
from .projection import LayoutParams, load_model, model_fingerprint
from .server import ApiConfig, AppState, LanguageRuntime, create_app
from .vizservice import (
    CoordinateCache,
    DisplaySubset,
    VizService,
    build_language_map,
    parse_bundle,
)


def _parse_topic_mix(spec: str):
    pairs = []
    for chunk in spec.split(","):
        name, _, weight = chunk.partition(":")
        pairs.append((name.strip(), float(weight) if weight else 1.0))
    return pairs


def cmd_synth(args) -> int:
    mix = _parse_topic_mix(args.topics) if args.topics else None
    records = generate_synthetic_corpus(
        args.n, args.seed, mix, dataset=args.dataset,
        shared_ip_fraction=args.shared_ip_fraction,
    )
    save_corpus(records, args.output)
    print(f"generated={len(records)} dataset={args.dataset} seed={args.seed} -> {args.output}")
    return 0


def cmd_ingest(args) -> int:
    adapter = get_adapter(args.adapter)
    if args.dataset:
        adapter = adapter.with_dataset(args.dataset)
    records, stats = load_corpus(args.input, adapter)
    save_corpus(records, args.output)
    for warning in stats.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"parsed={stats.parsed} skipped={stats.skipped}")
    return 0


def cmd_build_index(args) -> int:
    records, stats = load_corpus(args.input)
    index = build_index(records)
    save_index(index, args.output)
    size = Path(args.output).stat().st_size
    print(f"docs={len(index)} terms={len(index.term_postings)} skipped={stats.skipped} bytes={size}")
    return 0


def _layout_params(args) -> LayoutParams:
    return LayoutParams(
        k_neighbors=args.k_neighbors,
        epochs=args.epochs,
        rng_seed=args.seed,
    )


def cmd_train(args) -> int:
    records, _ = load_corpus(args.corpus)
    lang_map = build_language_map(
        records,
        args.language,
        embed_cfg=EmbedderConfig(dimension=args.dimension),
        layout_params=_layout_params(args),
        n_per_dataset=args.n_per_dataset,
        seed=args.seed,
    )
    Path(args.output_model).write_bytes(lang_map.model_bytes)
    out = (
        f"language={lang_map.language} points={lang_map.subset.total()} "
        f"silhouette={lang_map.silhouette:.3f} train_rmse={lang_map.model.train_rmse:.4f}"
    )
    if args.output_bundle:
        bundle = lang_map.bundle_bytes()
        Path(args.output_bundle).write_bytes(bundle)
        out += f" bundle_bytes={len(bundle)}"
    print(out)
    return 0


def cmd_bundle(args) -> int:
    # Re-runs the deterministic training pipeline; identical corpus/seed yield
    # the exact bundle the matching `train` run produced.
    records, _ = load_corpus(args.corpus)
    lang_map = build_language_map(
        records,
        args.language,
        embed_cfg=EmbedderConfig(dimension=args.dimension),
        layout_params=_layout_params(args),
        n_per_dataset=args.n_per_dataset,
        seed=args.seed,
    )
    bundle = lang_map.bundle_bytes()
    Path(args.output).write_bytes(bundle)
    print(f"language={lang_map.language} points={lang_map.subset.total()} bundle_bytes={len(bundle)}")
    return 0


def _subset_from_bundle(language: str, bundle: bytes) -> DisplaySubset:
    parsed = parse_bundle(bundle)
    return DisplaySubset(
        language=language,
        seed=0,
        per_dataset={name: [p.conversation_id for p in points] for name, points in parsed.datasets},
    )


def build_app_state(index: CorpusIndex, maps_dir: Path, cache_path: str) -> AppState:
    """Load every <stem>.wvpm + <stem>.wvb1 pair under maps_dir."""
    state = AppState(index=index)
    cache = CoordinateCache(cache_path)
    for model_path in sorted(maps_dir.glob("*.wvpm")):
        bundle_path = model_path.with_suffix(".wvb1")
        if not bundle_path.exists():
            print(f"warning: {model_path.name} has no matching .wvb1, skipped", file=sys.stderr)
            continue
        model_bytes = model_path.read_bytes()
        model = load_model(model_path)
        bundle = bundle_path.read_bytes()
        service = VizService(
            full_index=index,
            subset=_subset_from_bundle(model.language, bundle),
            model=model,
            model_version=model_fingerprint(model_bytes),
            cache=cache,
            embedder=make_embedder(EmbedderConfig(dimension=model.dimension, ngram_range=DEFAULT_NGRAM_RANGE)),
        )
        state.add_runtime(LanguageRuntime(language=model.language, bundle=bundle, service=service))
    return state


def cmd_serve(args) -> int:
    import uvicorn

    index = load_index(args.index)
    maps_dir = Path(args.maps_dir)
    cache_path = args.cache or str(maps_dir / "coords.sqlite")
    state = build_app_state(index, maps_dir, cache_path)
    config = ApiConfig(host=args.host, port=args.port, default_language=args.language,
                       default_threshold=args.threshold)
    app = create_app(state, config)
    print(f"serving {len(index)} conversations, maps: {sorted(state.runtimes)} "
          f"on http://{config.host}:{config.port}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Benchmark: indexed search vs naive full scan
# ---------------------------------------------------------------------------


def _turn_token_lists(rec) -> list[list[str]]:
    return [[t for t, _ in tokenize(turn.text)] for turn in rec.turns]


def _contains_phrase(token_lists: list[list[str]], terms: list[str]) -> bool:
    m = len(terms)
    first = terms[0]
    for tokens in token_lists:
        limit = len(tokens) - m
        for i, tok in enumerate(tokens):
            if i > limit:
                break
            if tok == first and tokens[i:i + m] == terms:
                return True
    return False


def naive_scan_search(docs, query: FilterQuery):
    """Reference-style full pass over the records, no index structures.

    Re-tokenizes every document on every call (that is the point of the
    baseline).  Returns (total_matched, cap_applied, first_page_ordinals).
    """
    q = query.normalized()
    terms = [t for t, _ in tokenize(q.contains)] if q.contains else []
    preds = q.field_predicates()
    total = 0
    cap_applied = False
    first_page: list[int] = []
    for ordinal, rec in enumerate(docs):
        ok = all(
            ("true" if getattr(rec, name) else "false") == value
            if name in ("toxic", "redacted") else getattr(rec, name) == value
            for name, value in preds
        )
        if not ok:
            continue
        if q.min_turns is not None and rec.turn_count < q.min_turns:
            continue
        if terms and not _contains_phrase(_turn_token_lists(rec), terms):
            continue
        total += 1
        if total > MATCH_CAP:
            total = MATCH_CAP
            cap_applied = True
            break
        if total <= q.page_size:
            first_page.append(ordinal)
    return total, cap_applied, first_page


def run_bench(index: CorpusIndex, n_queries: int = 10, seed: int = 0) -> dict:
    import random

    vocab = index.vocabulary()
    rng = random.Random(seed)
    if len(vocab) >= n_queries:
        terms = rng.sample(vocab, n_queries)
    else:
        terms = [rng.choice(vocab) for _ in range(n_queries)]

    indexed_times: list[float] = []
    naive_times: list[float] = []
    totals: list[int] = []
    for term in terms:
        q = FilterQuery(contains=term)
        t0 = time.perf_counter()
        page = execute_search(index, q)
        indexed_times.append(time.perf_counter() - t0)
        totals.append(page.total_matched)

        t0 = time.perf_counter()
        naive_total, _, _ = naive_scan_search(index.docs, q)
        naive_times.append(time.perf_counter() - t0)
        if naive_total != page.total_matched:
            raise ChatmapError(
                f"bench cross-check failed for {term!r}: indexed {page.total_matched} vs naive {naive_total}"
            )

    indexed_mean = statistics.mean(indexed_times)
    naive_mean = statistics.mean(naive_times)
    return {
        "doc_count": len(index),
        "queries": terms,
        "matches_per_query": totals,
        "indexed_mean_s": indexed_mean,
        "indexed_stdev_s": statistics.stdev(indexed_times) if len(indexed_times) > 1 else 0.0,
        "naive_mean_s": naive_mean,
        "naive_stdev_s": statistics.stdev(naive_times) if len(naive_times) > 1 else 0.0,
        "speedup": naive_mean / indexed_mean if indexed_mean > 0 else float("inf"),
    }


def cmd_bench(args) -> int:
    index = load_index(args.index)
    report = run_bench(index, n_queries=args.queries, seed=args.seed)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(f"docs={report['doc_count']} queries={len(report['queries'])}")
        print(f"indexed  mean={report['indexed_mean_s'] * 1000:.2f}ms "
              f"stdev={report['indexed_stdev_s'] * 1000:.2f}ms")
        print(f"naive    mean={report['naive_mean_s'] * 1000:.2f}ms "
              f"stdev={report['naive_stdev_s'] * 1000:.2f}ms")
        print(f"speedup  {report['speedup']:.1f}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chatmap", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--dataset", default="synthetic")
    p.add_argument("--topics", help="e.g. 'coding:2,email:1,story:1,math:1'")
    p.add_argument("--shared-ip-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse a dataset into canonical corpus form")
    p.add_argument("--input", required=True)
    p.add_argument("--adapter", default="canonical", choices=sorted(BUILTIN_ADAPTERS))
    p.add_argument("--dataset", help="override the adapter's default dataset tag")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-index", help="build the WVIX search index")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_index)

    for name, helptext in (("train", "train a language map (model + bundle)"),
                           ("bundle", "recompute a language's coordinate bundle")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--corpus", required=True)
        p.add_argument("--language", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dimension", type=int, default=256)
        p.add_argument("--k-neighbors", type=int, default=15)
        p.add_argument("--epochs", type=int, default=200)
        p.add_argument("--n-per-dataset", type=int, default=1500)
        if name == "train":
            p.add_argument("--output-model", required=True)
            p.add_argument("--output-bundle")
            p.set_defaults(func=cmd_train)
        else:
            p.add_argument("--output", required=True)
            p.set_defaults(func=cmd_bundle)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--index", required=True)
    p.add_argument("--maps-dir", required=True, help="directory of <lang>.wvpm/<lang>.wvb1 pairs")
    p.add_argument("--cache", help="coordinate cache path (default: <maps-dir>/coords.sqlite)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--language", default="English", help="default map language")
    p.add_argument("--threshold", type=int, default=100,
                   help="default highlight threshold (1-1000)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="indexed vs naive-scan latency")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChatmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
