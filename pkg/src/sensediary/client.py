"""Clients for talking to the study service.

Two interchangeable flavors: an in-process client that calls the service
object directly (deterministic; records every request as a wire capture
for privacy audits) and an HTTP client for a real server. The in-process
capture mirrors exactly what the HTTP layer would carry, so canary scans
over it cover the wire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import httpx

from .questionnaire import QuestionnaireDef
from .service import (
    AlreadyReportedError,
    ChecksumMismatchError,
    SchemaRejectionError,
    StudyService,
)
from .sync import Batch, BatchRejectedError, TransportError


@dataclass(frozen=True)
class WireRecord:
    """One captured request as it would appear on the wire."""

    method: str
    path: str
    headers: tuple[tuple[str, str], ...]
    body: bytes

    def flatten(self) -> str:
        header_text = " ".join(f"{k}:{v}" for k, v in self.headers)
        return f"{self.method} {self.path} {header_text} {self.body.decode('utf-8', 'replace')}"


@dataclass
class WireCapture:
    records: list[WireRecord] = field(default_factory=list)

    def add(self, method: str, path: str, headers: dict, body: bytes) -> None:
        self.records.append(WireRecord(method, path, tuple(sorted(headers.items())), body))

    def flatten(self) -> str:
        return "\n".join(r.flatten() for r in self.records)


class ServiceUnreachableError(RuntimeError):
    pass


class InProcessServiceClient:
    """Drives a StudyService object directly; deterministic by construction."""

    def __init__(self, service: StudyService, capture: WireCapture | None = None):
        self.service = service
        self.capture = capture or WireCapture()

    # transport signature used by sync.SyncClient
    def upload(self, batch: Batch) -> int:
        self.capture.add(
            "POST",
            "/v1/events",
            {
                "pseudonym": batch.pseudonym,
                "first-seq": str(batch.first_seq),
                "last-seq": str(batch.last_seq),
                "checksum": batch.checksum,
            },
            batch.body,
        )
        try:
            return self.service.ingest_batch(
                batch.pseudonym, batch.first_seq, batch.last_seq, batch.checksum, batch.body
            )
        except ChecksumMismatchError as exc:
            raise TransportError(str(exc)) from None
        except SchemaRejectionError as exc:
            raise BatchRejectedError(str(exc)) from None

    def signup(self, email: str) -> str:
        self.capture.add(
            "POST", "/v1/participants", {}, json.dumps({"email": email}).encode()
        )
        return self.service.signup(email)

    def report_completion(self, participant_token: str, met_threshold: bool) -> str | None:
        self.capture.add(
            "POST",
            "/v1/participants/completion",
            {},
            json.dumps(
                {"participant_token": participant_token, "met_threshold": met_threshold}
            ).encode(),
        )
        return self.service.report_completion(participant_token, met_threshold)

    def latest_questionnaire(self) -> QuestionnaireDef:
        self.capture.add("GET", "/v1/questionnaires/latest", {}, b"")
        qdef = self.service.latest_questionnaire()
        assert qdef is not None
        return qdef

    def draw_raffle(self, n: int, seed: int) -> list[str]:
        self.capture.add(
            "POST", "/v1/raffle/draw", {}, json.dumps({"n": n, "seed": seed}).encode()
        )
        return self.service.draw_raffle(n, seed)


class HttpServiceClient:
    """Same surface over real HTTP; determinism is not guaranteed here."""

    def __init__(self, base_url: str, admin_key: str = "change-me", timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.admin_key = admin_key
        self._http = httpx.Client(base_url=self.base_url, timeout=timeout)

    def upload(self, batch: Batch) -> int:
        try:
            response = self._http.post(
                "/v1/events",
                headers={
                    "pseudonym": batch.pseudonym,
                    "first-seq": str(batch.first_seq),
                    "last-seq": str(batch.last_seq),
                    "checksum": batch.checksum,
                },
                content=batch.body,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from None
        if response.status_code == 422:
            raise BatchRejectedError(response.text)
        if response.status_code != 200:
            raise TransportError(f"status {response.status_code}: {response.text}")
        return int(response.json()["acked_through"])

    def _post_json(self, path: str, payload: dict, headers: dict | None = None) -> httpx.Response:
        try:
            return self._http.post(path, json=payload, headers=headers or {})
        except httpx.HTTPError as exc:
            raise ServiceUnreachableError(str(exc)) from None

    def signup(self, email: str) -> str:
        response = self._post_json("/v1/participants", {"email": email})
        if response.status_code != 201:
            raise RuntimeError(f"signup failed: {response.text}")
        return response.json()["participant_token"]

    def report_completion(self, participant_token: str, met_threshold: bool) -> str | None:
        response = self._post_json(
            "/v1/participants/completion",
            {"participant_token": participant_token, "met_threshold": met_threshold},
        )
        if response.status_code == 409:
            raise AlreadyReportedError(response.json().get("participation_code"))
        if response.status_code != 200:
            raise RuntimeError(f"completion report failed: {response.text}")
        return response.json()["participation_code"]

    def latest_questionnaire(self) -> QuestionnaireDef:
        try:
            response = self._http.get("/v1/questionnaires/latest")
        except httpx.HTTPError as exc:
            raise ServiceUnreachableError(str(exc)) from None
        if response.status_code != 200:
            raise RuntimeError(f"questionnaire fetch failed: {response.text}")
        return QuestionnaireDef.from_json_text(response.text)

    def draw_raffle(self, n: int, seed: int) -> list[str]:
        response = self._post_json(
            "/v1/raffle/draw", {"n": n, "seed": seed}, headers={"x-admin-key": self.admin_key}
        )
        if response.status_code != 200:
            raise RuntimeError(f"raffle draw failed: {response.text}")
        return response.json()["winners"]

    def close(self) -> None:
        self._http.close()
