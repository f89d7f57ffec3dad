"""HTTP surface of the study service.

Endpoint schemas are the unlinkability boundary: device endpoints speak
pseudonyms, participant endpoints speak tokens, and no endpoint accepts
both (checked structurally in the tests via ENDPOINT_IDENTIFIERS).

POST /v1/events                      ingest one batch (headers: Pseudonym,
                                     First-Seq, Last-Seq, Checksum; body:
                                     newline-delimited canonical lines)
POST /v1/participants                sign up with an email
POST /v1/participants/completion     report study completion (token in body)
POST /v1/raffle/draw                 admin-flagged raffle draw
GET  /v1/questionnaires/latest       latest version (If-Version -> 304)
GET  /v1/devices/{pseudonym}/aggregates   daily aggregates for the dashboard
DELETE /v1/devices/{pseudonym}/events     deletion request
"""

from __future__ import annotations

from datetime import date

from fastapi import FastAPI, Header, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .service import (
    AlreadyReportedError,
    ChecksumMismatchError,
    DuplicateEnrollmentError,
    InsufficientCompletersError,
    InvalidEmailError,
    NonePublishedError,
    SchemaRejectionError,
    StudyService,
    UnknownTokenError,
)

# identifier kinds each endpoint's schema touches; no row may contain both
ENDPOINT_IDENTIFIERS: dict[str, frozenset[str]] = {
    "POST /v1/events": frozenset({"pseudonym"}),
    "POST /v1/participants": frozenset({"email", "participant_token"}),
    "POST /v1/participants/completion": frozenset({"participant_token"}),
    "POST /v1/raffle/draw": frozenset({"email"}),
    "GET /v1/questionnaires/latest": frozenset(),
    "GET /v1/devices/{pseudonym}/aggregates": frozenset({"pseudonym"}),
    "DELETE /v1/devices/{pseudonym}/events": frozenset({"pseudonym"}),
}


class SignupBody(BaseModel):
    email: str


class CompletionBody(BaseModel):
    participant_token: str
    met_threshold: bool


class RaffleBody(BaseModel):
    n: int
    seed: int


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, **extra})


def create_app(service: StudyService) -> FastAPI:
    app = FastAPI(title="sensediary study service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/v1/events")
    async def ingest(
        request: Request,
        pseudonym: str = Header(),
        first_seq: int = Header(),
        last_seq: int = Header(),
        checksum: str = Header(),
    ):
        body = await request.body()
        try:
            acked = service.ingest_batch(pseudonym, first_seq, last_seq, checksum, body)
        except ChecksumMismatchError as exc:
            return _error(409, str(exc))
        except SchemaRejectionError as exc:
            return _error(422, str(exc))
        return {"acked_through": acked}

    @app.post("/v1/participants", status_code=201)
    def signup(body: SignupBody):
        try:
            token = service.signup(body.email)
        except InvalidEmailError as exc:
            return _error(400, str(exc))
        except DuplicateEnrollmentError as exc:
            return _error(409, str(exc))
        return {"participant_token": token}

    @app.post("/v1/participants/completion")
    def completion(body: CompletionBody):
        try:
            code = service.report_completion(body.participant_token, body.met_threshold)
        except UnknownTokenError:
            return _error(404, "unknown participant token")
        except AlreadyReportedError as exc:
            return _error(
                409, "completion already reported", participation_code=exc.participation_code
            )
        if code is None:
            return {"eligible": False, "participation_code": None}
        return {"eligible": True, "participation_code": code}

    @app.post("/v1/raffle/draw")
    def raffle(body: RaffleBody, x_admin_key: str = Header(default="")):
        if x_admin_key != service.admin_key:
            return _error(403, "admin key required")
        try:
            winners = service.draw_raffle(body.n, body.seed)
        except InsufficientCompletersError as exc:
            return _error(409, str(exc))
        return {"winners": winners}

    @app.get("/v1/questionnaires/latest")
    def latest_questionnaire(if_version: int | None = Header(default=None)):
        try:
            qdef = service.latest_questionnaire(if_version)
        except NonePublishedError:
            return _error(404, "no questionnaire published")
        if qdef is None:
            return Response(status_code=304)
        return Response(
            content=qdef.to_json_text(),
            media_type="application/json",
            headers={"Questionnaire-Version": str(qdef.version)},
        )

    @app.get("/v1/devices/{pseudonym}/aggregates")
    def aggregates(pseudonym: str, start: str, end: str):
        try:
            start_day = date.fromisoformat(start)
            end_day = date.fromisoformat(end)
        except ValueError as exc:
            return _error(400, f"bad date: {exc}")
        if end_day < start_day or (end_day - start_day).days > 92:
            return _error(400, "date range empty or too wide")
        days = service.aggregates(pseudonym, start_day, end_day)
        return {"days": [d.as_dict() for d in days]}

    @app.delete("/v1/devices/{pseudonym}/events")
    def delete_device(pseudonym: str):
        removed = service.delete_device_data(pseudonym)
        return {"removed": removed}

    return app
