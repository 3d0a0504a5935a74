"""chatmap: exact filter search and 2D embedding maps for conversation logs."""

from .corpus import ConversationRecord, FieldMapping, Turn, generate_synthetic_corpus, parse_record
from .embedding import EmbedderConfig, embed_first_turn, local_embed
from .index import CorpusIndex, FilterQuery, ResultPage, build_index, execute_search, tokenize
from .projection import LayoutParams, ProjectorModel, fit_projector, knn_graph, optimize_layout
from .vizservice import CoordinateCache, VizService, build_bundle, parse_bundle, select_display_subset

__version__ = "0.1.0"

__all__ = [
    "ConversationRecord",
    "CoordinateCache",
    "CorpusIndex",
    "EmbedderConfig",
    "FieldMapping",
    "FilterQuery",
    "LayoutParams",
    "ProjectorModel",
    "ResultPage",
    "Turn",
    "VizService",
    "build_bundle",
    "build_index",
    "embed_first_turn",
    "execute_search",
    "fit_projector",
    "generate_synthetic_corpus",
    "knn_graph",
    "local_embed",
    "optimize_layout",
    "parse_bundle",
    "parse_record",
    "select_display_subset",
    "tokenize",
]
