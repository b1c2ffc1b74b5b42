"""HTTP surface of the labeling server (JSON over HTTP/1.1)."""

from __future__ import annotations

import os
from typing import Any, Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response as HttpResponse
from fastapi.staticfiles import StaticFiles

from .codebook import codebook_to_json, answers_from_json
from .service import LabelServer, Response, UnknownRaterError, new_response_id, utc_now_iso
from .tasking import Task


def task_to_json(t: Task) -> dict[str, Any]:
    return {
        "task_id": t.task_id,
        "point_id": t.point_id,
        "lat": round(t.location.lat, 6),
        "lon": round(t.location.lon, 6),
        "image_url": t.image_url,
        "gsv_url": t.gsv_url,
        "replication_k": t.replication_k,
    }


def create_app(server: LabelServer, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="streetsurvey labeling service")

    @app.get("/api/schema")
    def schema() -> dict[str, Any]:
        return codebook_to_json(server.codebook)

    @app.get("/api/tasks/next")
    def next_task(rater: str = Query(...)):
        try:
            task = server.next_task(rater)
        except UnknownRaterError:
            return JSONResponse({"error": f"unknown rater {rater!r}"}, status_code=404)
        if task is None:
            return HttpResponse(status_code=204)
        return task_to_json(task)

    @app.post("/api/responses")
    async def submit(request: Request):
        body = await request.json()
        try:
            resp = Response(
                response_id=body.get("response_id") or new_response_id(),
                task_id=body["task_id"],
                rater_id=body["rater_id"],
                codebook_version=server.codebook.version,
                answers=answers_from_json(body.get("answers", {})),
                submitted_at=body.get("submitted_at") or utc_now_iso(),
                duration_s=body.get("duration_s"),
                amends=body.get("amends"),
                no_coverage=bool(body.get("no_coverage", False)),
            )
        except (KeyError, ValueError) as e:
            return JSONResponse({"status": "rejected", "reason": f"bad request: {e}"},
                                status_code=422)
        result = server.submit(resp)
        if result.status == "accepted":
            return JSONResponse({"status": "accepted", "response_id": result.response_id},
                                status_code=201)
        if result.status == "conflict":
            return JSONResponse({"status": "conflict", "reason": result.reason}, status_code=409)
        return JSONResponse({
            "status": "rejected",
            "reason": result.reason,
            "violations": [
                {"variable_key": v.variable_key, "reason": v.reason} for v in result.violations
            ],
        }, status_code=422)

    @app.get("/api/progress")
    def progress() -> dict[str, Any]:
        return server.progress().to_json()

    @app.get("/api/export/responses")
    def export() -> dict[str, Any]:
        return {
            "batch_id": server.batch.batch_id,
            "codebook_version": server.codebook.version,
            "responses": [r.to_json() for r in server.accepted_responses()],
        }

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app
