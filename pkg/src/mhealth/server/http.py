"""JSON-over-HTTP front end for a MedicalServer."""

from __future__ import annotations

import json
from typing import Optional

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse

from mhealth.server.service import (
    Accepted,
    MedicalServer,
    NotFound,
    Unauthorized,
    ValidationError,
)
from mhealth.server.store import SessionUpload


def _bearer(authorization: Optional[str]) -> Optional[str]:
    if not authorization:
        return None
    scheme, _, token = authorization.partition(" ")
    return token.strip() if scheme.lower() == "bearer" else None


def create_app(server: MedicalServer) -> FastAPI:
    app = FastAPI(title="mhealth medical server")
    app.state.server = server

    @app.post("/v1/ingest")
    async def ingest(request: Request, authorization: Optional[str] = Header(default=None)):
        token = _bearer(authorization)
        try:
            pid = server.authenticate(token)
        except Unauthorized as exc:
            raise HTTPException(401, str(exc))
        try:
            upload = SessionUpload.from_dict(json.loads(await request.body()))
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        if upload.patient_id != pid:
            raise HTTPException(401, "token is not bound to this patient")
        try:
            result = server.ingest(token, upload)
        except Unauthorized as exc:
            raise HTTPException(401, str(exc))
        except ValidationError as exc:
            raise HTTPException(422, str(exc))
        if isinstance(result, Accepted):
            body = {"state": None if result.state is None else result.state.label,
                    "alert": result.alert is not None}
        else:
            body = {"duplicate": True}
        return JSONResponse(body)

    @app.get("/v1/patients/{patient_id}/status")
    def status(patient_id: str):
        try:
            return server.get_status(patient_id).to_dict()
        except NotFound:
            raise HTTPException(404, "unknown patient")

    @app.get("/v1/patients/{patient_id}/history")
    def history(patient_id: str, from_ms: Optional[int] = None, to_ms: Optional[int] = None):
        try:
            return [e.to_dict() for e in server.query_history(patient_id, from_ms, to_ms)]
        except NotFound:
            raise HTTPException(404, "unknown patient")
        except ValueError as exc:
            raise HTTPException(422, str(exc))

    @app.get("/v1/alerts")
    def alerts(since_ms: int = 0):
        return [a.to_dict() for a in server.alerts(since_ms)]

    return app
