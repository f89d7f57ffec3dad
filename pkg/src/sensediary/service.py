"""Study backend: anonymous event ingestion and the participant registry.

The two stores are physically separate by construction: the registry
lives in ``participants.jsonl``, device events under ``events/<pseudonym>.log``.
Their record shapes share no field, no endpoint accepts both a participant
token and a device pseudonym, and deleting device data cannot touch the
registry because there is no link to follow.

Completion eligibility is client-reported (a bare met/unmet flag): the
backend cannot check questionnaire adherence itself without the linkage
this design forbids. A dishonest client can self-certify; that trust
boundary is inherent, not an oversight.
"""

from __future__ import annotations

import json
import random
import re
import secrets
import time
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Callable

from .events import (
    EventRecord,
    MalformedEventError,
    decode_lines,
    encode_validated,
    validate_event,
)
from .questionnaire import QuestionnaireDef
from .store import DailyAggregate, aggregate_day
from .sync import batch_checksum

# Crockford base32: no I, L, O, U, so codes survive hand transcription.
CROCKFORD_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
PARTICIPATION_CODE_LENGTH = 10
_EMAIL_RE = re.compile(r"[^@\s]+@[^@\s]+\.[^@\s]+")


class ChecksumMismatchError(ValueError):
    """Batch body does not match its declared checksum (retryable)."""


class SchemaRejectionError(ValueError):
    """Batch content is invalid; retrying the same bytes cannot help."""


class InvalidEmailError(ValueError):
    pass


class DuplicateEnrollmentError(ValueError):
    pass


class UnknownTokenError(KeyError):
    pass


class AlreadyReportedError(RuntimeError):
    """Completion was already reported; carries any previously issued code."""

    def __init__(self, participation_code: str | None):
        super().__init__("completion already reported")
        self.participation_code = participation_code


class InsufficientCompletersError(ValueError):
    pass


class NonePublishedError(LookupError):
    pass


@dataclass
class ParticipantRecord:
    """Email-linked enrollment. Structurally unlinkable from event data:
    no field here is, or derives from, a device pseudonym."""

    email: str
    participant_token: str
    enrolled_at: int
    completion_reported: bool = False
    participation_code: str | None = None

    def as_dict(self) -> dict:
        return {
            "email": self.email,
            "participant_token": self.participant_token,
            "enrolled_at": self.enrolled_at,
            "completion_reported": self.completion_reported,
            "participation_code": self.participation_code,
        }


class ParticipantRegistry:
    """Event-sourced registry persisted as JSON lines, one op per line."""

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._by_email: dict[str, ParticipantRecord] = {}
        self._by_token: dict[str, ParticipantRecord] = {}
        self._codes: set[str] = set()
        if self.path is not None and self.path.exists():
            self._replay()

    def _replay(self) -> None:
        for line in self.path.read_text(encoding="utf-8").splitlines():
            op = json.loads(line)
            if op["op"] == "signup":
                record = ParticipantRecord(
                    email=op["email"],
                    participant_token=op["participant_token"],
                    enrolled_at=op["enrolled_at"],
                )
                self._by_email[record.email] = record
                self._by_token[record.participant_token] = record
            elif op["op"] == "completion":
                record = self._by_token[op["participant_token"]]
                record.completion_reported = True
                record.participation_code = op.get("participation_code")
                if record.participation_code:
                    self._codes.add(record.participation_code)

    def _persist(self, op: dict) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(op, sort_keys=True) + "\n")

    def add(self, record: ParticipantRecord) -> None:
        self._by_email[record.email] = record
        self._by_token[record.participant_token] = record
        self._persist({"op": "signup", **record.as_dict()})

    def record_completion(self, record: ParticipantRecord, code: str | None) -> None:
        record.completion_reported = True
        record.participation_code = code
        if code is not None:
            self._codes.add(code)
        self._persist(
            {
                "op": "completion",
                "participant_token": record.participant_token,
                "participation_code": code,
            }
        )

    def by_email(self, email: str) -> ParticipantRecord | None:
        return self._by_email.get(email)

    def by_token(self, token: str) -> ParticipantRecord | None:
        return self._by_token.get(token)

    def has_code(self, code: str) -> bool:
        return code in self._codes

    def completer_emails(self) -> list[str]:
        return sorted(
            r.email
            for r in self._by_email.values()
            if r.completion_reported and r.participation_code is not None
        )

    def __len__(self) -> int:
        return len(self._by_email)

    def dump_text(self) -> str:
        return "\n".join(
            json.dumps(r.as_dict(), sort_keys=True) for r in self._by_email.values()
        )


class DeviceEventStore:
    """Per-pseudonym event sets with a dedup index on (pseudonym, seq).

    Holds no email and no participant token, by schema.
    """

    def __init__(self, directory: Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._events: dict[str, dict[int, EventRecord]] = {}
        if self.directory is not None and self.directory.exists():
            for log_path in sorted(self.directory.glob("*.log")):
                pseudonym = log_path.stem
                per_device = self._events.setdefault(pseudonym, {})
                for record in decode_lines(log_path.read_bytes()):
                    per_device[record.seq] = record

    def _device_path(self, pseudonym: str) -> Path | None:
        if self.directory is None:
            return None
        return self.directory / f"{pseudonym}.log"

    def insert(self, pseudonym: str, records: list[EventRecord]) -> int:
        """Insert with dedup; returns how many were new."""
        per_device = self._events.setdefault(pseudonym, {})
        fresh = [r for r in records if r.seq not in per_device]
        for record in fresh:
            per_device[record.seq] = record
        if fresh and self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            with open(self._device_path(pseudonym), "ab") as fh:
                for record in fresh:
                    fh.write(encode_validated(record))
        return len(fresh)

    def acked_through(self, pseudonym: str) -> int:
        per_device = self._events.get(pseudonym, {})
        seq = 0
        while seq + 1 in per_device:
            seq += 1
        return seq

    def events_for(self, pseudonym: str) -> list[EventRecord]:
        per_device = self._events.get(pseudonym, {})
        return [per_device[seq] for seq in sorted(per_device)]

    def delete_device(self, pseudonym: str) -> int:
        removed = len(self._events.pop(pseudonym, {}))
        path = self._device_path(pseudonym)
        if path is not None and path.exists():
            path.unlink()
        return removed

    def pseudonyms(self) -> list[str]:
        return sorted(self._events)

    def total_events(self) -> int:
        return sum(len(v) for v in self._events.values())

    def dump_text(self) -> str:
        chunks = []
        for pseudonym in self.pseudonyms():
            for record in self.events_for(pseudonym):
                chunks.append(encode_validated(record).decode("ascii"))
        return "".join(chunks)


class StudyService:
    """The backend facade the wire endpoints (and the simulator) drive."""

    def __init__(
        self,
        data_dir: Path | None = None,
        rng: random.Random | None = None,
        clock_ms: Callable[[], int] | None = None,
        admin_key: str = "change-me",
    ):
        registry_path = None
        events_dir = None
        if data_dir is not None:
            data_dir = Path(data_dir)
            data_dir.mkdir(parents=True, exist_ok=True)
            registry_path = data_dir / "participants.jsonl"
            events_dir = data_dir / "events"
        self.registry = ParticipantRegistry(registry_path)
        self.device_events = DeviceEventStore(events_dir)
        self._rng = rng
        self.clock_ms = clock_ms or (lambda: int(time.time() * 1000))
        self.admin_key = admin_key
        self._questionnaires: dict[int, QuestionnaireDef] = {}
        self._tokens_issued: set[str] = set()

    # -- ingestion ---------------------------------------------------------

    def ingest_batch(
        self, pseudonym: str, first_seq: int, last_seq: int, checksum: str, body: bytes
    ) -> int:
        """Validate, dedup-insert, and return the highest contiguous seq."""
        if batch_checksum(body) != checksum:
            raise ChecksumMismatchError("batch checksum mismatch")
        try:
            records = decode_lines(body)
        except MalformedEventError as exc:
            raise SchemaRejectionError(str(exc)) from None
        if len(records) != last_seq - first_seq + 1:
            raise SchemaRejectionError("event count does not match declared seq range")
        prev = None
        for i, record in enumerate(records):
            if record.pseudonym != pseudonym:
                raise SchemaRejectionError("pseudonym mismatch inside batch")
            if record.seq != first_seq + i:
                raise SchemaRejectionError("seq range not contiguous")
            reason = validate_event(record, prev)
            if reason is not None:
                raise SchemaRejectionError(reason)
            prev = record.seq
        self.device_events.insert(pseudonym, records)
        return self.device_events.acked_through(pseudonym)

    # -- participants --------------------------------------------------------

    def _random_token(self) -> str:
        if self._rng is not None:
            return f"{self._rng.getrandbits(128):032x}"
        return secrets.token_hex(16)

    def signup(self, email: str) -> str:
        if not isinstance(email, str) or not _EMAIL_RE.fullmatch(email.strip()):
            raise InvalidEmailError(f"not a usable email address: {email!r}")
        email = email.strip()
        if self.registry.by_email(email) is not None:
            raise DuplicateEnrollmentError(f"already enrolled: {email}")
        token = self._random_token()
        while token in self._tokens_issued:
            token = self._random_token()
        self._tokens_issued.add(token)
        self.registry.add(
            ParticipantRecord(email=email, participant_token=token, enrolled_at=self.clock_ms())
        )
        return token

    def _fresh_code(self) -> str:
        while True:
            if self._rng is not None:
                code = "".join(
                    self._rng.choice(CROCKFORD_ALPHABET) for _ in range(PARTICIPATION_CODE_LENGTH)
                )
            else:
                code = "".join(
                    secrets.choice(CROCKFORD_ALPHABET) for _ in range(PARTICIPATION_CODE_LENGTH)
                )
            if not self.registry.has_code(code):
                return code

    def report_completion(self, participant_token: str, met_threshold: bool) -> str | None:
        """Returns the participation code, or None when ineligible.

        The request schema carries no pseudonym: the backend learns only
        that this participant reports having met the required rate.
        """
        record = self.registry.by_token(participant_token)
        if record is None:
            raise UnknownTokenError(participant_token)
        if record.completion_reported:
            raise AlreadyReportedError(record.participation_code)
        if not met_threshold:
            self.registry.record_completion(record, None)
            return None
        code = self._fresh_code()
        self.registry.record_completion(record, code)
        return code

    def draw_raffle(self, n: int, seed: int) -> list[str]:
        """Uniform sample (without replacement) of completer emails."""
        completers = self.registry.completer_emails()
        if n > len(completers):
            raise InsufficientCompletersError(
                f"requested {n} winners from {len(completers)} completers"
            )
        return random.Random(seed).sample(completers, n)

    # -- questionnaires ------------------------------------------------------

    def publish_questionnaire(self, qdef: QuestionnaireDef) -> None:
        if qdef.version in self._questionnaires:
            raise ValueError(f"version {qdef.version} already published (immutable)")
        self._questionnaires[qdef.version] = qdef

    def latest_questionnaire(self, if_version: int | None = None) -> QuestionnaireDef | None:
        """Highest published version; None means the caller's copy is current."""
        if not self._questionnaires:
            raise NonePublishedError("no questionnaire published")
        latest = max(self._questionnaires)
        if if_version is not None and if_version == latest:
            return None
        return self._questionnaires[latest]

    # -- device data ---------------------------------------------------------

    def delete_device_data(self, pseudonym: str) -> int:
        """Remove all events for one pseudonym. The registry is untouched:
        no link exists to follow."""
        return self.device_events.delete_device(pseudonym)

    def aggregates(self, pseudonym: str, start: date, end: date) -> list[DailyAggregate]:
        events = self.device_events.events_for(pseudonym)
        days = []
        day = start
        while day <= end:
            days.append(aggregate_day(events, day))
            day = date.fromordinal(day.toordinal() + 1)
        return days
