from __future__ import annotations

import pytest

from chatmap.corpus import generate_synthetic_corpus
from chatmap.embedding import EmbedderConfig, make_embedder
from chatmap.index import build_index
from chatmap.projection import LayoutParams
from chatmap.vizservice import build_language_map


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(300, seed=11)


@pytest.fixture(scope="session")
def small_index(small_corpus):
    return build_index(small_corpus)


@pytest.fixture(scope="session")
def english_corpus():
    return generate_synthetic_corpus(400, seed=5, language_mix=[("English", 1.0)])


@pytest.fixture(scope="session")
def english_map(english_corpus):
    """One trained language map shared by viz/service/server tests."""
    return build_language_map(
        english_corpus,
        "English",
        embed_cfg=EmbedderConfig(dimension=64),
        layout_params=LayoutParams(k_neighbors=10, epochs=60, rng_seed=1),
        n_per_dataset=150,
        seed=2,
    )


@pytest.fixture(scope="session")
def english_embedder():
    return make_embedder(EmbedderConfig(dimension=64))
