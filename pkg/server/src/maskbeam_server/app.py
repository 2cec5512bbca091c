"""The JSON-over-HTTP serving surface.

Endpoints: POST /classify, /infill, /similarity, /perplexity, /grammar and
GET /healthz. Responses mirror the attack engine's adapter expectations
bit-exactly; errors are {"error": "..."} with a non-200 status (400 for bad
requests, 413 for oversize batches, 501 for unconfigured optional backends,
500 for model failures). The server holds no state between requests.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backends import (
    MASK,
    build_classifier,
    build_grammar,
    build_infiller,
    build_perplexity,
    build_similarity,
)
from .config import ServerConfig

log = logging.getLogger(__name__)


class ClassifyRequest(BaseModel):
    texts: list[list[list[str]]] = Field(default_factory=list)


class InfillRequest(BaseModel):
    tokens: list[str]
    mask_index: int
    min_prob: float = 0.0
    top_n: int = 50


class SimilarityRequest(BaseModel):
    pairs: list[list[list[str]]] = Field(default_factory=list)


class SentencesRequest(BaseModel):
    sentences: list[str] = Field(default_factory=list)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServerConfig) -> FastAPI:
    app = FastAPI(title="maskbeam-server")
    classifier = build_classifier(config.classifier)
    infiller = build_infiller(config.infiller)
    similarity = build_similarity(config.similarity)
    perplexity = build_perplexity(config.perplexity)
    grammar = build_grammar(config.grammar)

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception) -> JSONResponse:
        log.exception("request failed: %s", exc)
        return _error(500, str(exc))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/classify")
    def classify(request: ClassifyRequest):
        if len(request.texts) > config.max_batch:
            return _error(413, f"batch of {len(request.texts)} exceeds {config.max_batch}")
        for i, segments in enumerate(request.texts):
            if not segments or any(len(seg) == 0 for seg in segments):
                return _error(400, f"texts[{i}]: empty text or segment")
        probs = classifier.classify(request.texts) if request.texts else []
        return {"labels": classifier.labels, "probs": probs}

    @app.post("/infill")
    def infill(request: InfillRequest):
        sentinels = [i for i, tok in enumerate(request.tokens) if tok == MASK]
        if len(sentinels) != 1:
            return _error(400, f"expected exactly one {MASK} sentinel, got {len(sentinels)}")
        if request.mask_index != sentinels[0]:
            return _error(400, f"mask_index {request.mask_index} does not point at the sentinel")
        proposals = infiller.infill(
            request.tokens, request.mask_index, request.min_prob, request.top_n
        )
        return {"proposals": [{"token": t, "prob": p} for t, p in proposals]}

    @app.post("/similarity")
    def score_similarity(request: SimilarityRequest):
        if len(request.pairs) > config.max_batch:
            return _error(413, f"batch of {len(request.pairs)} exceeds {config.max_batch}")
        for i, pair in enumerate(request.pairs):
            if len(pair) != 2:
                return _error(400, f"pairs[{i}]: expected two token lists")
        scores = similarity.similarity([(a, b) for a, b in request.pairs])
        return {"scores": scores}

    @app.post("/perplexity")
    def score_perplexity(request: SentencesRequest):
        if perplexity is None:
            return _error(501, "no perplexity backend configured")
        if len(request.sentences) > config.max_batch:
            return _error(413, f"batch of {len(request.sentences)} exceeds {config.max_batch}")
        return {"perplexities": perplexity.perplexity(request.sentences)}

    @app.post("/grammar")
    def score_grammar(request: SentencesRequest):
        if grammar is None:
            return _error(501, "no grammar backend configured")
        if len(request.sentences) > config.max_batch:
            return _error(413, f"batch of {len(request.sentences)} exceeds {config.max_batch}")
        return {"error_counts": grammar.grammar_errors(request.sentences)}

    return app
