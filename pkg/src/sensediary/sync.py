"""Batched, at-least-once delivery of log events to the ingestion endpoint.

The client slices the unacked log suffix into batches (max 500 events by
default), uploads them one at a time, and retries retryable failures with
capped exponential backoff (1 s, x2 per retry, 5 min cap). Duplicate
delivery is harmless because the server dedups on (pseudonym, seq); a
permanent rejection halts sync for operator attention.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from .acquisition import ConsentState, consent_gate
from .diagnostics import Diagnostics
from .store import EventLog


class TransportError(Exception):
    """Retryable delivery failure (network fault, server busy, bad ack)."""


class BatchRejectedError(Exception):
    """Permanent failure: the server refused the batch content."""


@dataclass(frozen=True)
class Batch:
    pseudonym: str
    first_seq: int
    last_seq: int
    body: bytes  # newline-delimited canonical event lines
    checksum: str

    @property
    def event_count(self) -> int:
        return self.last_seq - self.first_seq + 1


def batch_checksum(body: bytes) -> str:
    return hashlib.sha256(body).hexdigest()


@dataclass
class AckState:
    """Highest contiguous acked seq; never decreases."""

    highest: int = 0

    def advance(self, seq: int) -> None:
        if seq > self.highest:
            self.highest = seq


def next_batch(log: EventLog, acked_seq: int, max_events: int = 500) -> Batch | None:
    """The next unacked batch starting at acked_seq + 1, or None when done."""
    if max_events < 1:
        raise ValueError("max_events must be >= 1")
    first = acked_seq + 1
    if first > log.max_seq:
        return None
    last = min(first + max_events - 1, log.max_seq)
    body = log.encoded_lines(first, last)
    return Batch(
        pseudonym=log.events()[0].pseudonym,
        first_seq=first,
        last_seq=last,
        body=body,
        checksum=batch_checksum(body),
    )


def make_batches(log: EventLog, acked_seq: int, max_events: int = 500) -> list[Batch]:
    """Slice the unacked suffix (acked_seq, max_seq] into in-order batches."""
    batches = []
    cursor = acked_seq
    while True:
        batch = next_batch(log, cursor, max_events)
        if batch is None:
            return batches
        batches.append(batch)
        cursor = batch.last_seq


class Transport(Protocol):
    def __call__(self, batch: Batch) -> int:
        """Deliver one batch; returns the server's acked_through seq."""


@dataclass
class SyncResult:
    acked_through: int = 0
    uploads_attempted: int = 0
    batches_delivered: int = 0
    bytes_sent: int = 0
    halted: bool = False
    skipped_no_consent: bool = False


class SyncClient:
    """Serialized sender: one in-flight upload, in seq order."""

    def __init__(
        self,
        log: EventLog,
        transport: Transport,
        consent: ConsentState,
        max_batch_events: int = 500,
        base_backoff_s: float = 1.0,
        max_backoff_s: float = 300.0,
        max_attempts: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
        diagnostics: Diagnostics | None = None,
    ):
        self.log = log
        self.transport = transport
        self.consent = consent
        self.max_batch_events = max_batch_events
        self.base_backoff_s = base_backoff_s
        self.max_backoff_s = max_backoff_s
        self.max_attempts = max_attempts
        self.sleep = sleep
        self.diagnostics = diagnostics or Diagnostics()
        self.ack = AckState(log.sync_cursor)
        self.halted = False

    def sync(self) -> SyncResult:
        """Push everything unacked; returns when converged, halted, or out
        of attempts. Transmits nothing before consent."""
        result = SyncResult(acked_through=self.ack.highest)
        if not consent_gate(self.consent, "transmit"):
            self.diagnostics.increment("sync_skipped_no_consent")
            result.skipped_no_consent = True
            return result
        if self.halted:
            result.halted = True
            return result

        while True:
            batch = next_batch(self.log, self.ack.highest, self.max_batch_events)
            if batch is None:
                break
            before = self.ack.highest
            delivered = self._deliver(batch, result)
            if result.halted or not delivered:
                break
            if self.ack.highest <= before:
                # acked but no forward progress: avoid spinning
                self.diagnostics.increment("sync_stalled_acks")
                break
        result.acked_through = self.ack.highest
        return result

    def _deliver(self, batch: Batch, result: SyncResult) -> bool:
        backoff = self.base_backoff_s
        attempts = 0
        while True:
            attempts += 1
            result.uploads_attempted += 1
            try:
                acked = self.transport(batch)
            except BatchRejectedError as exc:
                self.halted = True
                result.halted = True
                self.diagnostics.increment("sync_permanent_failures")
                self.diagnostics.audit(
                    f"sync halted: batch {batch.first_seq}-{batch.last_seq} rejected: {exc}"
                )
                return False
            except TransportError:
                self.diagnostics.increment("sync_retryable_failures")
                if self.max_attempts is not None and attempts >= self.max_attempts:
                    return False
                self.sleep(backoff)
                backoff = min(backoff * 2.0, self.max_backoff_s)
                continue
            result.bytes_sent += len(batch.body)
            result.batches_delivered += 1
            self.ack.advance(acked)
            self.log.advance_sync_cursor(min(acked, self.log.max_seq))
            if acked < batch.last_seq:
                # server did not reach the end of this batch: treat as
                # retryable so the remainder is re-cut from the new cursor
                self.diagnostics.increment("sync_partial_acks")
            return True
