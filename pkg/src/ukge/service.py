"""HTTP API serving entity vectors from a trained checkpoint.

Public methods live under ``/api/v1``; the maintenance endpoint
``/admin/v1/ingest`` answers 404 unless the bearer token matches.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from .kg import read_dictionary_tsv, sidecar
from .training import parse_checkpoint

logger = logging.getLogger(__name__)

API_VERSION = "1.0.0"
DEFAULT_MAX_BATCH = 1000
MAX_LIST = 100


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message


def local_name(iri: str) -> str:
    cut = max(iri.rfind("/"), iri.rfind("#"))
    return iri[cut + 1 :]


def _f32_list(row: np.ndarray) -> list[float]:
    # str() of a float32 is its shortest round-trip decimal
    return [float(str(x)) for x in row]


@dataclass(frozen=True)
class VectorStore:
    """Immutable IRI -> float32 vector table; swapped wholesale on ingest."""

    entities: tuple[str, ...]
    vectors: np.ndarray
    name: str
    version: str
    index: dict[str, int] = field(init=False, repr=False)
    _names: list[str] = field(init=False, repr=False)
    _names_iri: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.entities) != self.vectors.shape[0]:
            raise ValueError("dictionary and vector rows disagree")
        vec = np.ascontiguousarray(self.vectors, dtype=np.float32)
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        index = {iri: i for i, iri in enumerate(self.entities)}
        if len(index) != len(self.entities):
            raise ValueError("duplicate IRIs in dictionary")
        object.__setattr__(self, "index", index)
        keyed = sorted((local_name(e).lower(), e) for e in self.entities)
        object.__setattr__(self, "_names", [k for k, _ in keyed])
        object.__setattr__(self, "_names_iri", [e for _, e in keyed])

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, iri: str) -> list[float] | None:
        i = self.index.get(iri)
        return None if i is None else _f32_list(self.vectors[i])

    def autocomplete(self, prefix: str, limit: int) -> list[str]:
        q = prefix.lower()
        lo = bisect.bisect_left(self._names, q)
        hits = []
        for i in range(lo, len(self._names)):
            if not self._names[i].startswith(q):
                break
            hits.append(self._names_iri[i])
        return sorted(hits)[:limit]

    def meta(self) -> dict:
        return {"name": self.name, "version": self.version, "num_entities": self.num_entities, "dim": self.dim}

    @classmethod
    def from_checkpoint(
        cls, checkpoint: str | Path, entities_tsv: str | Path | None = None, dataset_name: str | None = None
    ) -> "VectorStore":
        data = Path(checkpoint).read_bytes()
        table = parse_checkpoint(data)
        entities = read_dictionary_tsv(entities_tsv or sidecar(checkpoint, ".entities.tsv"))
        if len(entities) != table.num_entities:
            raise ValueError(
                f"dictionary has {len(entities)} entities, checkpoint has {table.num_entities}"
            )
        return cls(
            tuple(entities),
            table.entity_vectors.astype(np.float32),
            dataset_name or Path(checkpoint).stem,
            hashlib.sha256(data).hexdigest()[:12],
        )


class JSON(JSONResponse):
    def render(self, content: Any) -> bytes:
        return json.dumps(content, ensure_ascii=False, allow_nan=False, separators=(",", ":")).encode("utf-8")


def _error(status: int, code: str, message: str) -> JSON:
    return JSON({"error": {"code": code, "message": message}}, status_code=status)


def _int_param(value: str | None, name: str, default: int) -> int:
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise ApiError(400, f"bad_{name}", f"{name} must be an integer") from None


def create_app(
    store: VectorStore,
    admin_token: str | None = None,
    max_batch: int = DEFAULT_MAX_BATCH,
) -> FastAPI:
    app = FastAPI(title="ukge embedding service", version=API_VERSION, docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store
    swap_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return _error(exc.http_status, exc.code, exc.message)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        if exc.status_code == 404:
            return _error(404, "not_found", "no such endpoint")
        if exc.status_code == 405:
            return _error(400, "method_not_allowed", str(exc.detail))
        return _error(400, "bad_request", str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", "malformed request")

    @app.get("/api/v1/version")
    def version():
        return JSON({"api_version": API_VERSION, "data_version": app.state.store.version})

    @app.get("/api/v1/health")
    def health():
        return JSON({"status": "ok"})

    @app.get("/api/v1/datasets")
    def datasets():
        return JSON([app.state.store.meta()])

    @app.get("/api/v1/size")
    def size():
        s = app.state.store
        return JSON({"num_entities": s.num_entities, "dim": s.dim, "dataset": s.name})

    @app.post("/api/v1/get_embeddings")
    async def get_embeddings(request: Request):
        try:
            body = await request.json()
        except ValueError:
            raise ApiError(400, "bad_json", "request body must be JSON") from None
        ents = body.get("entities") if isinstance(body, dict) else None
        if not isinstance(ents, list) or not all(isinstance(e, str) for e in ents):
            raise ApiError(400, "bad_request", "'entities' must be a list of IRIs")
        if not ents:
            raise ApiError(400, "empty_request", "'entities' must not be empty")
        if len(ents) > max_batch:
            raise ApiError(400, "payload_too_large", f"at most {max_batch} entities per request")
        s = app.state.store
        found, missing = [], []
        for e in ents:
            vec = s.vector(e)
            if vec is None:
                missing.append(e)
            else:
                found.append({"entity": e, "vector": vec})
        return JSON({"embeddings": found, "not_found": missing})

    @app.get("/api/v1/embedding/{iri:path}")
    def embedding(iri: str):
        vec = app.state.store.vector(iri)
        if vec is None:
            raise ApiError(404, "unknown_entity", f"no embedding for {iri}")
        return JSON({"entity": iri, "vector": vec})

    @app.get("/api/v1/autocomplete")
    def autocomplete(q: str | None = None, limit: str | None = None):
        if not q:
            raise ApiError(400, "missing_q", "query parameter q must be non-empty")
        n = _int_param(limit, "limit", 10)
        if not 1 <= n <= MAX_LIST:
            raise ApiError(400, "limit_out_of_range", f"limit must be in [1, {MAX_LIST}]")
        return JSON(app.state.store.autocomplete(q, n))

    @app.get("/api/v1/random")
    def random(n: str | None = None):
        k = _int_param(n, "n", 1)
        if not 1 <= k <= MAX_LIST:
            raise ApiError(400, "n_out_of_range", f"n must be in [1, {MAX_LIST}]")
        s = app.state.store
        if k > s.num_entities:
            raise ApiError(400, "n_too_large", f"dataset has only {s.num_entities} entities")
        rows = np.random.default_rng().choice(s.num_entities, size=k, replace=False)
        return JSON([{"entity": s.entities[i], "vector": _f32_list(s.vectors[i])} for i in rows.tolist()])

    @app.post("/admin/v1/ingest")
    async def ingest(request: Request):
        auth = request.headers.get("authorization", "")
        if admin_token is None or auth != f"Bearer {admin_token}":
            return Response(status_code=404)
        try:
            body = await request.json()
            path = body["checkpoint_path"]
            name = body.get("dataset_name")
        except (ValueError, KeyError, TypeError, AttributeError):
            raise ApiError(400, "bad_request", "expected {checkpoint_path, dataset_name}") from None
        if not swap_lock.acquire(blocking=False):
            raise ApiError(503, "reload_in_progress", "another ingest is running")
        try:
            try:
                new = await run_in_threadpool(VectorStore.from_checkpoint, path, None, name)
            except (OSError, ValueError) as exc:
                raise ApiError(400, "bad_checkpoint", str(exc)) from None
            app.state.store = new  # single reference assignment: readers see old or new, never a mix
        finally:
            swap_lock.release()
        logger.info("ingested %s (%d entities)", path, new.num_entities)
        return JSON({"loaded": new.num_entities})

    return app


def app_from_env() -> FastAPI:
    """Build the app from ``UKGE_DATA_PATH``, ``UKGE_ADMIN_TOKEN`` and ``UKGE_MAX_BATCH``."""
    path = os.environ.get("UKGE_DATA_PATH")
    if not path:
        raise RuntimeError("UKGE_DATA_PATH is not set")
    store = VectorStore.from_checkpoint(path)
    return create_app(
        store,
        admin_token=os.environ.get("UKGE_ADMIN_TOKEN") or None,
        max_batch=int(os.environ.get("UKGE_MAX_BATCH", DEFAULT_MAX_BATCH)),
    )
