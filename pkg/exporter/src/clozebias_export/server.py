"""HTTP service implementing POST /v1/logprobs over one loaded model.

Requests are serialized through a lock (single model instance); batching
happens inside a request. Errors use the protocol's envelope:
{"error": {"code": ..., "message": ...}} with a non-2xx status.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from clozebias_export.scoring import ExportError, ModelScorer


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": status, "message": message}}, status_code=status)


def create_app(scorer: ModelScorer, batch_size: int = 8) -> FastAPI:
    app = FastAPI(title="clozebias-export", docs_url=None, redoc_url=None)
    lock = threading.Lock()

    @app.post("/v1/logprobs")
    async def logprobs(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict) or not isinstance(body.get("texts"), list):
            return _error(400, "body must be an object with a 'texts' array")
        if not all(isinstance(t, str) for t in body["texts"]):
            return _error(400, "'texts' must contain strings")
        model_id = body.get("model_id")
        if model_id is not None and model_id != scorer.model_id:
            return _error(400, f"this endpoint serves model_id {scorer.model_id!r}")
        try:
            with lock:
                records = scorer.score_texts(body["texts"], batch_size=batch_size)
        except ExportError as err:
            return _error(422, str(err))
        return JSONResponse(records)

    return app


def serve(model: str, port: int, model_id: str | None = None,
          device: str = "cpu", batch_size: int = 8) -> None:
    import uvicorn

    scorer = ModelScorer(model, model_id=model_id, device=device)
    uvicorn.run(create_app(scorer, batch_size=batch_size), host="127.0.0.1", port=port)
