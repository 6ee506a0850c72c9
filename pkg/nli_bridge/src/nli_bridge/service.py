"""HTTP wire layer: three scoring endpoints plus health.

Contract notes that matter to clients:
- every scoring response carries the serving model's version string;
- malformed JSON bodies return 400 (not the framework default 422);
- batches larger than the configured limit return 413;
- all scoring endpoints return 503 until the backend has loaded;
- batch results preserve request order.
"""

import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backends import ScoringBackend, make_backend
from .config import ServiceConfig


class EntailRequest(BaseModel):
    premise: str
    hypothesis: str


class EntailBatchRequest(BaseModel):
    pairs: list[EntailRequest] = Field(min_length=1)


class FaithfulRequest(BaseModel):
    knowledge: str
    response: str


def create_app(
    config: ServiceConfig | None = None,
    backend: ScoringBackend | None = None,
    load_on_startup: bool = True,
) -> FastAPI:
    config = config or ServiceConfig()
    backend = backend or make_backend(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if load_on_startup and not backend.loaded:
            backend.load()
        yield

    app = FastAPI(title="nli-bridge", lifespan=lifespan)
    app.state.config = config
    app.state.backend = backend
    # Model inference is serialized; request handling stays concurrent.
    inference_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def not_ready() -> JSONResponse:
        return JSONResponse(status_code=503, content={"detail": "models are not loaded"})

    @app.get("/health")
    def health():
        models = [
            {"name": "nli", "version": backend.nli_version},
            {"name": "critic", "version": backend.critic_version},
        ]
        if not backend.loaded:
            return JSONResponse(
                status_code=503, content={"status": "loading", "models": models}
            )
        return {"status": "ok", "models": models}

    @app.post("/entail")
    def entail(body: EntailRequest):
        if not backend.loaded:
            return not_ready()
        with inference_lock:
            (scores,) = backend.entail([(body.premise, body.hypothesis)])
        return {
            "entail": scores.entail,
            "neutral": scores.neutral,
            "contradict": scores.contradict,
            "model_version": backend.nli_version,
        }

    @app.post("/entail_batch")
    def entail_batch(body: EntailBatchRequest):
        if not backend.loaded:
            return not_ready()
        if len(body.pairs) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={
                    "detail": f"batch of {len(body.pairs)} exceeds limit {config.max_batch}"
                },
            )
        with inference_lock:
            scored = backend.entail([(p.premise, p.hypothesis) for p in body.pairs])
        return {
            "results": [
                {"entail": s.entail, "neutral": s.neutral, "contradict": s.contradict}
                for s in scored
            ],
            "model_version": backend.nli_version,
        }

    @app.post("/faithful")
    def faithful(body: FaithfulRequest):
        if not backend.loaded:
            return not_ready()
        if not body.response.strip():
            return JSONResponse(
                status_code=400, content={"detail": "response must be non-empty"}
            )
        with inference_lock:
            prob = backend.hallucination_prob(body.knowledge, body.response)
        return {"hallucination_prob": prob, "model_version": backend.critic_version}

    return app
