"""Read-only HTTP API: search, bundle delivery, highlight, conversation details.

Endpoints and query-parameter names are the stable contract consumed by the
browser UI (and mirrored in its tests):

    GET /api/search?contains=homework&toxic=false&language=English&page=2
    GET /api/embeddings/bundle?language=english        (gzip body + ETag/304)
    GET /api/embeddings/highlight?contains=python&language=english
    GET /api/conversation/{dataset}/{id}?from=embedding&lang=english
    GET /api/meta                                      (datasets/languages)

Shared state is immutable after startup except the write-once coordinate
cache, so requests are handled concurrently without locking.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .corpus import format_timestamp
from .errors import BadParam, NotFound, PageOutOfRange
from .index import (
    MATCH_CAP,
    MAX_THRESHOLD,
    CorpusIndex,
    FilterQuery,
    ResultPage,
    execute_search,
    get_conversation,
)
from .vizservice import HighlightResult, VizService

RECOGNIZED_PARAMS = (
    "contains", "hashed_ip", "country", "state", "language", "model", "dataset",
    "toxic", "redacted", "min_turns", "page", "threshold",
)
_STRING_PARAMS = ("contains", "hashed_ip", "country", "state", "language", "model", "dataset")


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    default_language: str = "English"
    default_page_size: int = 30
    default_threshold: int = 100
    max_threshold: int = MAX_THRESHOLD
    cors_origins: tuple[str, ...] = ("*",)
    match_cap: int = MATCH_CAP

    def __post_init__(self):
        if not (1 <= self.default_threshold <= self.max_threshold <= MAX_THRESHOLD):
            raise ValueError("threshold defaults must stay within the documented caps")
        if not (1 <= self.default_page_size <= 30):
            raise ValueError("default_page_size must be in [1, 30]")


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise BadParam(key, f"{key} must be 'true' or 'false', got {raw!r}")


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise BadParam(key, f"{key} must be an integer, got {raw!r}") from None


def parse_query_params(params, *, default_page_size: int = 30,
                       default_threshold: int = 100) -> tuple[FilterQuery, list[str]]:
    """Build a FilterQuery from URL query params.

    Unknown keys are ignored but reported back (warning header); malformed or
    out-of-range values raise BadParam naming the offending key.
    """
    ignored = [k for k in params if k not in RECOGNIZED_PARAMS]
    kwargs = {"page_size": default_page_size, "threshold": default_threshold}
    for key in _STRING_PARAMS:
        if key in params:
            kwargs[key] = params[key]
    for key in ("toxic", "redacted"):
        if key in params:
            kwargs[key] = _parse_bool(key, params[key])
    for key in ("min_turns", "page", "threshold"):
        if key in params:
            kwargs[key] = _parse_int(key, params[key])
    if kwargs.get("page", 1) < 1:
        raise BadParam("page", "page must be >= 1")
    if not (1 <= kwargs["threshold"] <= MAX_THRESHOLD):
        raise BadParam("threshold", f"threshold must be in [1, {MAX_THRESHOLD}]")
    return FilterQuery(**kwargs), ignored


def _page_json(page: ResultPage) -> dict:
    return {
        "total_matched": page.total_matched,
        "cap_applied": page.cap_applied,
        "page": page.page,
        "hits": [
            {
                "conversation_id": h.conversation_id,
                "dataset": h.dataset,
                "timestamp": h.timestamp,
                "country": h.country,
                "state": h.state,
                "hashed_ip": h.hashed_ip,
                "model": h.model,
                "snippet": h.snippet,
            }
            for h in page.hits
        ],
    }


def _highlight_json(result: HighlightResult) -> dict:
    return {
        "matched_in_subset": [
            {"dataset": d, "conversation_id": cid} for d, cid in result.matched_in_subset
        ],
        "fallback_points": [
            {
                "dataset": p.dataset,
                "conversation_id": p.conversation_id,
                "x": p.x,
                "y": p.y,
                "preview": p.preview,
            }
            for p in result.fallback_points
        ],
        "fallback_used": result.fallback_used,
        "counters": result.counters,
    }


@dataclass
class LanguageRuntime:
    """Per-language artifacts the server holds: bundle bytes + highlight service."""

    language: str
    bundle: bytes
    service: VizService
    etag: str = ""

    def __post_init__(self):
        if not self.etag:
            self.etag = '"' + hashlib.sha256(self.bundle).hexdigest() + '"'


@dataclass
class AppState:
    index: CorpusIndex
    runtimes: dict[str, LanguageRuntime] = field(default_factory=dict)

    def add_runtime(self, runtime: LanguageRuntime) -> None:
        self.runtimes[runtime.language.casefold()] = runtime

    def runtime_for(self, language: str) -> LanguageRuntime:
        rt = self.runtimes.get(language.casefold())
        if rt is None:
            raise NotFound(f"no embedding map for language {language!r}")
        return rt


def create_app(state: AppState, config: ApiConfig | None = None) -> FastAPI:
    config = config or ApiConfig()
    app = FastAPI(title="chatmap", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    def error_json(status: int, error: str, **extra):
        return JSONResponse(status_code=status, content={"error": error, **extra})

    @app.exception_handler(BadParam)
    async def _bad_param(_req, exc: BadParam):
        return error_json(400, "BadParam", param=exc.param, detail=str(exc))

    @app.exception_handler(PageOutOfRange)
    async def _page_oor(_req, exc: PageOutOfRange):
        return error_json(400, "PageOutOfRange", detail=str(exc))

    @app.exception_handler(NotFound)
    async def _not_found(_req, exc: NotFound):
        return error_json(404, "NotFound", detail=str(exc.args[0]) if exc.args else "not found")

    def with_warning(payload: dict, ignored: list[str]) -> JSONResponse:
        headers = {}
        if ignored:
            headers["X-Ignored-Params"] = ",".join(sorted(ignored))
        return JSONResponse(content=payload, headers=headers)

    @app.get("/api/search")
    def api_search(request: Request):
        query, ignored = parse_query_params(
            dict(request.query_params),
            default_page_size=config.default_page_size,
            default_threshold=config.default_threshold,
        )
        page = execute_search(state.index, query)
        return with_warning(_page_json(page), ignored)

    @app.get("/api/embeddings/bundle")
    def api_bundle(request: Request):
        language = request.query_params.get("language", config.default_language)
        rt = state.runtime_for(language)
        if request.headers.get("if-none-match", "").strip() in (rt.etag, rt.etag.strip('"')):
            return Response(status_code=304, headers={"ETag": rt.etag})
        return Response(
            content=rt.bundle,
            media_type="application/octet-stream",
            headers={
                "Content-Encoding": "gzip",
                "ETag": rt.etag,
                "Cache-Control": "public, max-age=86400",
            },
        )

    @app.get("/api/embeddings/highlight")
    def api_highlight(request: Request):
        params = dict(request.query_params)
        language = params.get("language") or config.default_language
        query, ignored = parse_query_params(
            params,
            default_page_size=config.default_page_size,
            default_threshold=config.default_threshold,
        )
        rt = state.runtime_for(language)
        result = rt.service.highlight(query)
        return with_warning(_highlight_json(result), ignored)

    @app.get("/api/conversation/{dataset}/{conversation_id}")
    def api_conversation(dataset: str, conversation_id: str, request: Request):
        rec = get_conversation(state.index, dataset, conversation_id)
        return {
            "conversation": {
                "conversation_id": rec.conversation_id,
                "dataset": rec.dataset,
                "timestamp": format_timestamp(rec.timestamp),
                "turns": [{"role": t.role, "text": t.text} for t in rec.turns],
                "hashed_ip": rec.hashed_ip,
                "country": rec.country,
                "state": rec.state,
                "language": rec.language,
                "toxic": rec.toxic,
                "redacted": rec.redacted,
                "model": rec.model,
                "turn_count": rec.turn_count,
            },
            "from": request.query_params.get("from"),
            "lang": request.query_params.get("lang"),
        }

    @app.get("/api/meta")
    def api_meta():
        datasets: dict[str, int] = {}
        for rec in state.index.docs:
            datasets[rec.dataset] = datasets.get(rec.dataset, 0) + 1
        return {
            "doc_count": len(state.index),
            "datasets": datasets,
            "languages": sorted(rt.language for rt in state.runtimes.values()),
            "match_cap": config.match_cap,
        }

    return app
