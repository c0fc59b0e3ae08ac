"""HTTP+JSON surface over PipelineService.

All business behavior lives in the service; handlers translate between HTTP
and service calls plus error mapping (unknown id -> 404, bad payload -> 400,
illegal requeue -> 409).
"""

from __future__ import annotations

import json

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from .service import ConflictError, NotFoundError, PayloadError, PipelineService


def create_app(service: PipelineService) -> FastAPI:
    app = FastAPI(title="vetrad pipeline", version="1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = service

    @app.post("/v1/images")
    async def submit_image(
        payload: UploadFile = File(...),
        metadata: str = Form("{}"),
        request_id: str = Form(...),
    ):
        try:
            meta = json.loads(metadata)
        except json.JSONDecodeError as exc:
            raise HTTPException(400, f"metadata is not valid JSON: {exc}")
        body = await payload.read()
        try:
            return service.enqueue(request_id, body, meta)
        except PayloadError as exc:
            raise HTTPException(400, str(exc))

    @app.get("/v1/requests")
    def list_requests(status: str | None = None, limit: int = 200):
        return service.list_requests(status=status, limit=limit)

    @app.get("/v1/requests/{request_id}")
    def get_request(request_id: str):
        try:
            return service.get_request(request_id)
        except NotFoundError:
            raise HTTPException(404, f"unknown request: {request_id}")

    @app.post("/v1/requests/{request_id}/requeue")
    def requeue(request_id: str):
        try:
            return service.requeue(request_id)
        except NotFoundError:
            raise HTTPException(404, f"unknown request: {request_id}")
        except ConflictError as exc:
            raise HTTPException(409, str(exc))

    @app.get("/v1/studies/{study_id}")
    def get_study(study_id: str):
        try:
            return service.get_study(study_id)
        except NotFoundError:
            raise HTTPException(404, f"unknown study: {study_id}")

    @app.get("/v1/queue/stats")
    def stats():
        return service.stats()

    @app.get("/v1/drift/weekly")
    def drift_weekly():
        return service.drift_weekly()

    @app.get("/v1/drift/verdicts")
    def drift_verdicts():
        return service.drift_verdicts()

    @app.get("/v1/rules")
    def rules():
        return service.active_rules()

    return app
