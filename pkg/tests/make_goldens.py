#!/usr/bin/env python3
"""Regenerate committed artifacts: embedding conformance vectors and the
golden index/bundle files.  Run from the repo root:

    python3 tests/make_goldens.py

Rebuilds must be byte-identical; CI-style tests fail if these drift.
"""

from __future__ import annotations

import json
from pathlib import Path

from chatmap.corpus import generate_synthetic_corpus
from chatmap.embedding import local_embed
from chatmap.index import build_index, write_index_bytes
from chatmap.vizservice import build_bundle, make_preview, select_display_subset

HERE = Path(__file__).parent

CONFORMANCE_TEXTS = [
    "",
    "a",
    "aa",
    "abc",
    "hello world",
    "Hello World",
    "write a python function to parse a csv file",
    "how many tennis balls fit in a school bus",
    "tell me a story about a lighthouse keeper",
    "draft a polite email asking about a refund",
    "the quick brown fox jumps over the lazy dog",
    "ABC abc AbC",
    "  spaces   everywhere  ",
    "punctuation, matters! (or does it?)",
    "números en español: uno, dos, tres",
    "中文短句测试",
    "русский текст для проверки",
    "emoji 🙂 in the middle",
    "tabs\tand\nnewlines",
    "repeat repeat repeat repeat repeat",
]


def write_embedding_vectors() -> None:
    entries = []
    for text in CONFORMANCE_TEXTS:
        vec = local_embed(text, 64, (3, 5))
        entries.append({"text": text, "vector": [round(x, 12) for x in vec.tolist()]})
    payload = {
        "dimension": 64,
        "ngram_range": [3, 5],
        "hash": "fnv1a64",
        "entries": entries,
    }
    out = HERE / "data" / "embedding_vectors.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(entries)} entries)")


def golden_corpus():
    return generate_synthetic_corpus(25, seed=123)


def write_golden_index() -> None:
    data = write_index_bytes(build_index(golden_corpus()))
    out = HERE / "golden" / "small.wvix"
    out.parent.mkdir(exist_ok=True)
    out.write_bytes(data)
    print(f"wrote {out} ({len(data)} bytes)")


def golden_bundle_inputs():
    records = golden_corpus()
    subset = select_display_subset(records, "English", n_per_dataset=10, seed=42)
    by_key = {r.key: r for r in records}
    coordinates = {}
    previews = {}
    for dataset, ids in subset.per_dataset.items():
        for i, cid in enumerate(ids):
            coordinates[(dataset, cid)] = (float(i) * 0.5, float(i) * -0.25)
            previews[(dataset, cid)] = make_preview(by_key[(dataset, cid)])
    return subset, coordinates, previews


def write_golden_bundle() -> None:
    subset, coordinates, previews = golden_bundle_inputs()
    data = build_bundle(subset, coordinates, previews)
    out = HERE / "golden" / "small.wvb1"
    out.parent.mkdir(exist_ok=True)
    out.write_bytes(data)
    print(f"wrote {out} ({len(data)} bytes)")


if __name__ == "__main__":
    write_embedding_vectors()
    write_golden_index()
    write_golden_bundle()
