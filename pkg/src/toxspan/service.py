"""HTTP service for span prediction, model listing, and dataset browsing.

Models are loaded lazily on first request and kept in a bounded LRU; requests
for a model that is still loading get 503 rather than queueing behind the
load. Inference per model is serialized (batch size 1). Request logs never
include text bodies.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .corpus import Dataset
from .errors import FetchError, RegistryError
from .neural import SpanModel
from .registry import Registry

logger = logging.getLogger(__name__)


@dataclass
class ServiceSettings:
    max_text_length: int = 20_000
    model_lru_size: int = 2
    datasets: dict[str, Dataset] = field(default_factory=dict)
    console_dir: Path | None = None
    max_page_size: int = 500


class ModelLoadInProgress(Exception):
    def __init__(self, name: str):
        super().__init__(f"model {name!r} is currently loading")
        self.name = name


class ModelManager:
    """Lazy, LRU-bounded pool of loaded models with per-model locks."""

    def __init__(self, registry: Registry, lru_size: int):
        self.registry = registry
        self.lru_size = lru_size
        self._models: OrderedDict[str, SpanModel] = OrderedDict()
        self._cache_lock = threading.Lock()
        self._load_locks: dict[str, threading.Lock] = {}
        self._infer_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _named_lock(self, table: dict[str, threading.Lock], name: str) -> threading.Lock:
        with self._locks_guard:
            return table.setdefault(name, threading.Lock())

    def get(self, name: str) -> SpanModel:
        with self._cache_lock:
            if name in self._models:
                self._models.move_to_end(name)
                return self._models[name]

        load_lock = self._named_lock(self._load_locks, name)
        if not load_lock.acquire(blocking=False):
            raise ModelLoadInProgress(name)
        try:
            with self._cache_lock:
                if name in self._models:
                    self._models.move_to_end(name)
                    return self._models[name]
            model = self.registry.resolve(name)
            with self._cache_lock:
                self._models[name] = model
                while len(self._models) > self.lru_size:
                    evicted, _ = self._models.popitem(last=False)
                    logger.info("evicted model %s from the pool", evicted)
            return model
        finally:
            load_lock.release()

    def predict(self, name: str, text: str, merge_adjacent: bool):
        model = self.get(name)
        with self._named_lock(self._infer_locks, name):
            return model.predict(text, merge_adjacent=merge_adjacent)

    def loaded_names(self) -> list[str]:
        with self._cache_lock:
            return list(self._models)


class PredictRequest(BaseModel):
    text: str
    model: str
    merge_adjacent: bool = False


def create_app(
    registry: Registry | None = None,
    settings: ServiceSettings | None = None,
) -> FastAPI:
    settings = settings or ServiceSettings()
    registry = registry or Registry()
    app = FastAPI(title="toxspan", docs_url=None, redoc_url=None)
    manager = ModelManager(registry, settings.model_lru_size)
    app.state.manager = manager
    app.state.settings = settings

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        logger.info(
            "%s %s -> %d (%.1f ms)",
            request.method,
            request.url.path,
            response.status_code,
            (time.perf_counter() - start) * 1000,
        )
        return response

    @app.post("/api/spans")
    def predict_spans(req: PredictRequest) -> JSONResponse:
        if len(req.text) > settings.max_text_length:
            raise HTTPException(
                status_code=400,
                detail=f"text exceeds the {settings.max_text_length}-character limit",
            )
        start = time.perf_counter()
        try:
            spans, _ = manager.predict(req.model, req.text, req.merge_adjacent)
        except RegistryError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ModelLoadInProgress as exc:
            return JSONResponse(
                status_code=503, content={"detail": str(exc)}, headers={"Retry-After": "2"}
            )
        except FetchError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        latency_ms = (time.perf_counter() - start) * 1000
        return JSONResponse(
            {
                "spans": [[s, e] for s, e in spans.to_ranges()],
                "offsets": list(spans.offsets),
                "model": req.model,
                "latency_ms": round(latency_ms, 3),
            }
        )

    @app.get("/api/models")
    def list_models() -> JSONResponse:
        loaded = set(manager.loaded_names())
        entries = []
        for card in registry.list_models():
            cached = registry.is_cached(card.name)
            entries.append(
                {
                    "name": card.name,
                    "base_checkpoint": card.base_checkpoint,
                    "languages": list(card.languages),
                    "reported_span_f1": card.reported_span_f1,
                    "available": cached or not registry.offline,
                    "loaded": card.name in loaded,
                }
            )
        return JSONResponse(entries)

    @app.get("/api/datasets")
    def list_datasets() -> JSONResponse:
        return JSONResponse(
            [
                {
                    "name": name,
                    "language": ds.language,
                    "granularity": ds.granularity.value,
                    "total": len(ds.posts),
                }
                for name, ds in sorted(settings.datasets.items())
            ]
        )

    @app.get("/api/datasets/{name}")
    def browse_dataset(name: str, page: int = 0, size: int = 50) -> JSONResponse:
        if name not in settings.datasets:
            known = ", ".join(sorted(settings.datasets)) or "none installed"
            raise HTTPException(status_code=404, detail=f"unknown dataset {name!r} ({known})")
        if page < 0 or size < 1 or size > settings.max_page_size:
            raise HTTPException(
                status_code=400,
                detail=f"page must be >= 0 and 1 <= size <= {settings.max_page_size}",
            )
        ds = settings.datasets[name]
        window = ds.posts[page * size : page * size + size]
        posts = []
        for post in window:
            record: dict = {"id": post.id, "text": post.text}
            if post.gold_spans is not None:
                record["spans"] = list(post.gold_spans.offsets)
                record["span_pairs"] = [[s, e] for s, e in post.gold_spans.to_ranges()]
            if post.post_label is not None:
                record["label"] = post.post_label.value
            posts.append(record)
        return JSONResponse(
            {"name": name, "page": page, "size": size, "total": len(ds.posts), "posts": posts}
        )

    if settings.console_dir and Path(settings.console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=settings.console_dir, html=True), name="console")

    return app
