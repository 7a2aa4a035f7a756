"""HTTP wire API for the review service.

JSON over HTTP: POST /sessions, GET /sessions/{id}/next?rater=..,
POST /sessions/{id}/ratings, POST /sessions/{id}/finalize,
GET /sessions/{id}/report. Rater-facing payloads never carry origin
fields; the report is only served once a session is finalized.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from ..stats import StatsError, TuringReport, render_report
from .core import (
    DuplicateRatingError,
    FinalizedError,
    IncompleteSessionError,
    ReviewError,
    SessionStore,
    UnknownEntityError,
)


class CreateSessionRequest(BaseModel):
    ai: list[str]
    human: list[str]
    raters: list[str]
    shuffle_seed: int = 0


class RatingRequest(BaseModel):
    rater_id: str
    item_id: str
    readability: int = Field(ge=1, le=9)
    relevance: int = Field(ge=1, le=9)
    origin_guess: str


class FinalizeRequest(BaseModel):
    partial: bool = False


def _http_error(exc: ReviewError) -> HTTPException:
    if isinstance(exc, UnknownEntityError):
        return HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, (DuplicateRatingError, FinalizedError, IncompleteSessionError)):
        return HTTPException(status_code=409, detail=str(exc))
    return HTTPException(status_code=422, detail=str(exc))


def report_payload(report: TuringReport) -> dict:
    return {
        "per_rater": {
            rater: {k: {"correct": c.correct, "total": c.total, "pct": c.pct_str} for k, c in cells.items()}
            for rater, cells in report.per_rater.items()
        },
        "pooled": {k: {"correct": c.correct, "total": c.total, "pct": c.pct_str} for k, c in report.pooled.items()},
        "identification_tests": {k: asdict(t) for k, t in report.identification_tests.items()},
        "ratings": {
            m: {
                "ai_mean": s.ai_mean,
                "ai_sd": s.ai_sd,
                "human_mean": s.human_mean,
                "human_sd": s.human_sd,
                "p_value": s.test.p_value,
            }
            for m, s in report.ratings.items()
        },
        "agreement": None
        if report.agreement is None
        else {
            m: {
                "table": asdict(s.table),
                "percent_agreement": s.percent_agreement,
                "ac1": s.ac1,
            }
            for m, s in report.agreement.items()
        },
        "dichotomize_threshold": report.dichotomize_threshold,
        "null_rate": report.null_rate,
    }


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="cliniclm review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            session = store.create_session(req.ai, req.human, req.raters, req.shuffle_seed)
        except ReviewError as exc:
            raise _http_error(exc)
        return {"session_id": session.session_id, "items": len(session.items), "raters": session.rater_ids}

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str, rater: str = Query(...)):
        try:
            return store.next_item(session_id, rater)
        except ReviewError as exc:
            raise _http_error(exc)

    @app.post("/sessions/{session_id}/ratings")
    def submit_rating(session_id: str, req: RatingRequest):
        try:
            return store.submit_rating(
                session_id,
                req.rater_id,
                req.item_id,
                req.readability,
                req.relevance,
                req.origin_guess,
            )
        except ReviewError as exc:
            raise _http_error(exc)

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str, req: FinalizeRequest | None = None):
        try:
            bundle = store.finalize(session_id, partial=req.partial if req else False)
        except ReviewError as exc:
            raise _http_error(exc)
        return {"finalized": True, "raters": len(bundle)}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str, format: str = "json"):
        try:
            rep = store.report(session_id)
        except ReviewError as exc:
            raise _http_error(exc)
        except StatsError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if format == "text":
            return PlainTextResponse(render_report(rep))
        return report_payload(rep)

    return app
