"""Versioned questionnaires, resumable sessions, scoring, and compliance.

Definitions are immutable once published and are fetched from the study
service so they can change without shipping a new client. A session
answers one item at a time and can be serialized at any cursor; reloading
restores exactly where the participant left off. Sessions stay local:
they are persisted next to the event log but never synced.

The shipped instrument is a placeholder (five scales, ten likert items);
real psychometric instruments are licensed content and out of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping

LIKERT_MIN = 1
LIKERT_MAX = 5
DEFAULT_COMPLIANCE_THRESHOLD = 0.8


class VersionMismatchError(ValueError):
    """Session and definition versions differ; refetch the definition."""


class IncompleteSessionError(RuntimeError):
    """Scoring requires a completed session."""


class NonScorableItemError(ValueError):
    """A scale references an item that is not likert5."""


class InvalidResponseError(ValueError):
    """Response does not fit the item kind."""


class StudyStillRunningError(RuntimeError):
    """Compliance is only defined once the study window has elapsed."""


@dataclass(frozen=True)
class Item:
    id: str
    prompt: str
    kind: str  # likert5 | single_choice | free_text
    reverse_keyed: bool = False
    options: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("likert5", "single_choice", "free_text"):
            raise ValueError(f"unknown item kind: {self.kind}")
        if self.reverse_keyed and self.kind != "likert5":
            raise ValueError("reverse_keyed only applies to likert5 items")
        if self.kind == "single_choice" and not self.options:
            raise ValueError("single_choice items need options")
        if self.kind != "single_choice" and self.options:
            raise ValueError("options only apply to single_choice items")


@dataclass(frozen=True)
class QuestionnaireDef:
    version: int
    items: tuple[Item, ...]
    scales: Mapping[str, tuple[int, ...]]

    def __post_init__(self):
        if self.version < 1:
            raise ValueError("version must be >= 1")
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item ids")
        for name, indices in self.scales.items():
            for idx in indices:
                if not (0 <= idx < len(self.items)):
                    raise ValueError(f"scale {name!r} references item index {idx}")

    def to_json_text(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "items": [
                    {
                        "id": it.id,
                        "prompt": it.prompt,
                        "kind": it.kind,
                        "reverse_keyed": it.reverse_keyed,
                        "options": list(it.options),
                    }
                    for it in self.items
                ],
                "scales": {name: list(idx) for name, idx in self.scales.items()},
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json_text(cls, text: str) -> "QuestionnaireDef":
        raw = json.loads(text)
        items = tuple(
            Item(
                id=it["id"],
                prompt=it["prompt"],
                kind=it["kind"],
                reverse_keyed=it.get("reverse_keyed", False),
                options=tuple(it.get("options", ())),
            )
            for it in raw["items"]
        )
        scales = {name: tuple(idx) for name, idx in raw["scales"].items()}
        return cls(version=raw["version"], items=items, scales=scales)


@dataclass
class Session:
    """One participant's pass through one questionnaire version.

    ``answers`` is ordered by definition order; the cursor is always the
    count of answered items.
    """

    version: int
    started_at: int
    answers: dict[str, object] = field(default_factory=dict)
    completed_at: int | None = None

    @property
    def cursor(self) -> int:
        return len(self.answers)

    def is_completed(self) -> bool:
        return self.completed_at is not None

    def to_json_text(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "started_at": self.started_at,
                "answers": self.answers,
                "completed_at": self.completed_at,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json_text(cls, text: str) -> "Session":
        raw = json.loads(text)
        return cls(
            version=raw["version"],
            started_at=raw["started_at"],
            answers=dict(raw["answers"]),
            completed_at=raw.get("completed_at"),
        )


def _check_versions(session: Session, qdef: QuestionnaireDef) -> None:
    if session.version != qdef.version:
        raise VersionMismatchError(
            f"session is for version {session.version}, definition is {qdef.version}"
        )


def next_question(session: Session, qdef: QuestionnaireDef) -> Item | None:
    """The next unanswered item in definition order, or None when done."""
    _check_versions(session, qdef)
    if session.cursor >= len(qdef.items):
        return None
    return qdef.items[session.cursor]


def answer(session: Session, qdef: QuestionnaireDef, response, answered_at: int) -> None:
    """Record the response for the current item and advance the cursor."""
    item = next_question(session, qdef)
    if item is None:
        raise InvalidResponseError("session already completed")
    if item.kind == "likert5":
        if not isinstance(response, int) or isinstance(response, bool) or not (
            LIKERT_MIN <= response <= LIKERT_MAX
        ):
            raise InvalidResponseError(f"likert5 response must be an int in [1, 5]: {response!r}")
    elif item.kind == "single_choice":
        if response not in item.options:
            raise InvalidResponseError(f"response {response!r} not among options")
    else:
        if not isinstance(response, str):
            raise InvalidResponseError("free_text response must be a string")
    session.answers[item.id] = response
    if session.cursor == len(qdef.items):
        session.completed_at = answered_at


def progress(session: Session, qdef: QuestionnaireDef) -> float:
    """Fraction answered, for the progress bar."""
    _check_versions(session, qdef)
    if not qdef.items:
        return 1.0
    return session.cursor / len(qdef.items)


def score_scales(session: Session, qdef: QuestionnaireDef) -> dict[str, float]:
    """Mean per scale, reverse-keyed items counted as 6 - response."""
    _check_versions(session, qdef)
    if not session.is_completed():
        raise IncompleteSessionError("cannot score an incomplete session")
    scores = {}
    for name, indices in qdef.scales.items():
        total = 0.0
        for idx in indices:
            item = qdef.items[idx]
            if item.kind != "likert5":
                raise NonScorableItemError(f"scale {name!r} includes non-likert item {item.id!r}")
            response = session.answers[item.id]
            total += (LIKERT_MAX + 1 - response) if item.reverse_keyed else response
        scores[name] = total / len(indices)
    return scores


@dataclass(frozen=True)
class ComplianceRecord:
    """What the client knows locally about daily-questionnaire adherence."""

    start_date: date
    length_days: int
    completed_dates: frozenset[date]
    threshold: float = DEFAULT_COMPLIANCE_THRESHOLD

    def __post_init__(self):
        if self.length_days < 1:
            raise ValueError("study length must be >= 1 day")
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError("threshold must be in (0, 1]")
        end = self.start_date + timedelta(days=self.length_days - 1)
        for d in self.completed_dates:
            if not (self.start_date <= d <= end):
                raise ValueError(f"completed date {d} outside the study window")


@dataclass(frozen=True)
class ComplianceResult:
    rate: float
    met: bool


def compliance(record: ComplianceRecord, today: date) -> ComplianceResult:
    """Completed-day rate vs. the required threshold (>= rule).

    Only defined after the study window has fully elapsed.
    """
    window_end = record.start_date + timedelta(days=record.length_days)
    if today < window_end:
        raise StudyStillRunningError(f"study runs until {window_end.isoformat()}")
    rate = len(record.completed_dates) / record.length_days
    return ComplianceResult(rate=rate, met=rate >= record.threshold)


def sample_questionnaire(version: int = 1) -> QuestionnaireDef:
    """Placeholder five-scale, ten-item likert instrument shipped as content."""
    scales = ("calm", "focus", "energy", "social", "mood")
    items = []
    for i, scale in enumerate(scales):
        items.append(
            Item(
                id=f"q{2 * i + 1:02d}",
                prompt=f"Today I felt a strong sense of {scale}.",
                kind="likert5",
            )
        )
        items.append(
            Item(
                id=f"q{2 * i + 2:02d}",
                prompt=f"Today it was hard to find any {scale} at all.",
                kind="likert5",
                reverse_keyed=True,
            )
        )
    scale_map = {scale: (2 * i, 2 * i + 1) for i, scale in enumerate(scales)}
    return QuestionnaireDef(version=version, items=tuple(items), scales=scale_map)


def completed_session_dates(sessions, tz_offset_ms: int = 0) -> frozenset[date]:
    """Dates (device timezone) that have at least one completed session."""
    from .store import day_of_timestamp

    days = set()
    for session in sessions:
        if session.is_completed():
            days.add(day_of_timestamp(session.completed_at + tz_offset_ms))
    return frozenset(days)


# Session files live next to the event log but are never synced; answers
# stay on the device.


def save_session(session: Session, path) -> None:
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(session.to_json_text(), encoding="utf-8")


def load_session(path) -> Session:
    from pathlib import Path

    return Session.from_json_text(Path(path).read_text(encoding="utf-8"))
