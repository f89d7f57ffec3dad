"""Append-only local event log and the derived daily/weekly aggregates.

The log file is one canonical event line per row, newline-delimited.
On reload a torn final line (a crash mid-append) is dropped; anything
malformed before the end is treated as corruption. Sequence numbers are
contiguous from 1. The sync cursor (highest acked seq) lives in a small
sidecar file next to the log.

Aggregation is pure: :func:`aggregate_day` works on any event sequence,
so the study service reuses it server-side for the dashboard endpoint.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .diagnostics import Diagnostics
from .events import (
    EventRecord,
    MalformedEventError,
    SourceKind,
    canonical_decode,
    encode_validated,
    require_valid,
)

MS_PER_DAY = 86_400_000
LOCATION_CELL_DECIMALS = 3  # ~111 m grid


class SeqMismatchError(RuntimeError):
    """Append with a seq other than the next expected one."""


class LogCorruptError(RuntimeError):
    """A malformed line before the end of the log file."""


@dataclass
class DailyAggregate:
    """Per-day summary feeding the dashboard tiles and the notification."""

    day: date
    usage_seconds: int = 0
    unlock_count: int = 0
    distinct_location_cells: int = 0
    steps_total: int = 0
    notifications_per_app: dict[str, int] = field(default_factory=dict)
    photos_count: int = 0
    music_play_count: int = 0

    def as_dict(self) -> dict:
        return {
            "day": self.day.isoformat(),
            "usage_seconds": self.usage_seconds,
            "unlock_count": self.unlock_count,
            "distinct_location_cells": self.distinct_location_cells,
            "steps_total": self.steps_total,
            "notifications_per_app": dict(sorted(self.notifications_per_app.items())),
            "photos_count": self.photos_count,
            "music_play_count": self.music_play_count,
        }


class EventLog:
    """File-backed append-only event log for one device.

    Single writer; appends are durable before return (fsync can be turned
    off for bulk simulation replays where durability is not under test).
    """

    def __init__(self, path: Path, fsync: bool = True, diagnostics: Diagnostics | None = None):
        self.path = Path(path)
        self.fsync = fsync
        self.diagnostics = diagnostics or Diagnostics()
        self._events: list[EventRecord] = []
        self._lines: list[bytes] = []  # canonical encodings, parallel to _events
        self._fh = None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._recover()
        self._fh = open(self.path, "ab")
        self._sync_cursor = self._load_cursor()

    # -- recovery ---------------------------------------------------------

    def _recover(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return
        data = self.path.read_bytes()
        lines = data.splitlines(keepends=True)
        events: list[EventRecord] = []
        kept: list[bytes] = []
        kept_bytes = 0
        for i, raw in enumerate(lines):
            try:
                event = canonical_decode(raw)
            except MalformedEventError as exc:
                if i == len(lines) - 1:
                    # torn tail from a crash mid-append: drop it
                    self.diagnostics.increment("store_torn_tail_dropped")
                    break
                raise LogCorruptError(
                    f"{self.path}: line {i + 1}: {exc.problem}"
                ) from None
            expected = len(events) + 1
            if event.seq != expected:
                raise LogCorruptError(
                    f"{self.path}: line {i + 1}: seq {event.seq}, expected {expected}"
                )
            events.append(event)
            kept.append(raw)
            kept_bytes += len(raw)
        if kept_bytes != len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(kept_bytes)
        self._events = events
        self._lines = kept

    @property
    def _cursor_path(self) -> Path:
        return self.path.with_name(self.path.name + ".cursor")

    def _load_cursor(self) -> int:
        if not self._cursor_path.exists():
            return 0
        try:
            cursor = int(self._cursor_path.read_text().strip() or "0")
        except ValueError:
            return 0
        return min(max(cursor, 0), self.max_seq)

    def _save_cursor(self) -> None:
        tmp = self._cursor_path.with_name(self._cursor_path.name + ".tmp")
        tmp.write_text(str(self._sync_cursor))
        os.replace(tmp, self._cursor_path)

    # -- core API ---------------------------------------------------------

    @property
    def next_seq(self) -> int:
        return len(self._events) + 1

    @property
    def max_seq(self) -> int:
        return len(self._events)

    @property
    def sync_cursor(self) -> int:
        return self._sync_cursor

    def advance_sync_cursor(self, seq: int) -> None:
        if seq > self.max_seq:
            raise ValueError(f"sync cursor {seq} beyond max seq {self.max_seq}")
        if seq > self._sync_cursor:  # never decreases
            self._sync_cursor = seq
            self._save_cursor()

    def append(self, event: EventRecord) -> None:
        prev_seq = self.max_seq if self._events else None
        require_valid(event, prev_seq)
        if event.seq != self.next_seq:
            raise SeqMismatchError(f"append seq {event.seq}, expected {self.next_seq}")
        line = encode_validated(event)
        try:
            self._fh.write(line)
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise RuntimeError(f"storage failure appending to {self.path}: {exc}") from exc
        self._events.append(event)
        self._lines.append(line)

    def events(self) -> Sequence[EventRecord]:
        return self._events

    def encoded_lines(self, first_seq: int, last_seq: int) -> bytes:
        return b"".join(self._lines[first_seq - 1 : last_seq])

    def byte_size(self) -> int:
        self._fh.flush()
        return self.path.stat().st_size

    def purge_all(self, timestamp_ms: int | None = None) -> int:
        """Delete every event. Audits the count (no content) and resets seq."""
        count = len(self._events)
        self._fh.close()
        with open(self.path, "wb"):
            pass
        self._fh = open(self.path, "ab")
        self._events = []
        self._lines = []
        self._sync_cursor = 0
        self._save_cursor()
        self.diagnostics.increment("store_purges")
        self.diagnostics.audit(f"purged {count} events from local log", timestamp_ms)
        return count

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    # -- aggregates -------------------------------------------------------

    def daily_aggregate(self, day: date) -> DailyAggregate:
        return aggregate_day(self._events, day)

    def weekly_view(self, end_day: date) -> list[DailyAggregate]:
        return weekly_view(self._events, end_day)


# -- pure aggregation over event sequences --------------------------------


def day_of_timestamp(timestamp_ms: int) -> date:
    return datetime.fromtimestamp(timestamp_ms / 1000, timezone.utc).date()


def day_bounds_ms(day: date) -> tuple[int, int]:
    start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    start_ms = int(start.timestamp() * 1000)
    return start_ms, start_ms + MS_PER_DAY


def unlock_intervals(events: Iterable[EventRecord]) -> list[tuple[int, int | None]]:
    """Paired unlock->lock intervals over the whole stream, in ms.

    A trailing unlock with no later lock yields an open interval
    (end None); the per-day clip bounds it at day end.
    """
    intervals: list[tuple[int, int | None]] = []
    open_start: int | None = None
    for event in events:
        if event.source is not SourceKind.PHONE_LOCK:
            continue
        state = event.payload.get("state")
        if state == "unlocked":
            if open_start is None:
                open_start = event.timestamp
        elif state == "locked":
            if open_start is not None:
                intervals.append((open_start, event.timestamp))
                open_start = None
    if open_start is not None:
        intervals.append((open_start, None))
    return intervals


def aggregate_day(events: Sequence[EventRecord], day: date) -> DailyAggregate:
    """Recompute one day's summary purely from event content."""
    start_ms, end_ms = day_bounds_ms(day)
    agg = DailyAggregate(day=day)
    cells: set[tuple[float, float]] = set()

    usage_ms = 0
    for begin, finish in unlock_intervals(events):
        finish_eff = end_ms if finish is None else min(finish, end_ms)
        clipped = min(finish_eff, end_ms) - max(begin, start_ms)
        if clipped > 0:
            usage_ms += clipped
    agg.usage_seconds = min(usage_ms // 1000, 86_400)

    for event in events:
        if not (start_ms <= event.timestamp < end_ms):
            continue
        src = event.source
        if src is SourceKind.PHONE_LOCK and event.payload.get("state") == "unlocked":
            agg.unlock_count += 1
        elif src is SourceKind.LOCATION:
            cells.add(
                (
                    round(event.payload["lat"], LOCATION_CELL_DECIMALS),
                    round(event.payload["lon"], LOCATION_CELL_DECIMALS),
                )
            )
        elif src is SourceKind.STEPS:
            agg.steps_total += event.payload["count"]
        elif src is SourceKind.NOTIFICATION_META:
            digest = event.payload["app_digest"]
            agg.notifications_per_app[digest] = agg.notifications_per_app.get(digest, 0) + 1
        elif src is SourceKind.PHOTO_META:
            agg.photos_count += event.payload["count"]
        elif src is SourceKind.MUSIC_META:
            agg.music_play_count += 1
    agg.distinct_location_cells = len(cells)
    return agg


def weekly_view(events: Sequence[EventRecord], end_day: date) -> list[DailyAggregate]:
    """Aggregates for end_day-6 .. end_day, oldest first."""
    return [aggregate_day(events, end_day - timedelta(days=6 - i)) for i in range(7)]
