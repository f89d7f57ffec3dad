"""Turns raw source samples into stored EventRecords.

Listener-style sources (locks, calls, music, ...) forward directly;
light runs through the hysteresis quantizer so only segment changes are
stored; accelerometer samples pass only while the step gate is open;
app usage, app traffic and weather are polled on a schedule and bucketed.
Everything is gated behind consent: until the user accepts, nothing is
persisted anywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .anonymize import pseudonymize, scrub
from .config import PipelineConfig
from .diagnostics import Diagnostics
from .events import ContextSnapshot, EventRecord, Observation, SourceKind
from .store import EventLog

HOUR_MS = 3_600_000


class DuplicateFenceError(ValueError):
    """A fence identifier was registered twice."""


@dataclass
class HysteresisQuantizer:
    """Maps a raw lux stream to segment-change emissions.

    ``boundaries`` are the ascending segment limits B[0..k-1]; the
    current segment is in [0, k]. A sample moves the segment up past
    boundary s only once it reaches B[s]*(1+margin), and down below
    boundary s only once it drops to B[s-1]*(1-margin), so jitter around
    a boundary goes quiet. margin=0 degenerates to plain crossing.
    """

    boundaries: tuple[float, ...]
    margin: float
    segment: int = 0

    def __post_init__(self):
        if not self.boundaries or any(b <= 0 for b in self.boundaries):
            raise ValueError("boundaries must be positive")
        if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly ascending")
        if not (0.0 <= self.margin < 1.0):
            raise ValueError("margin must be in [0, 1)")
        if not (0 <= self.segment <= len(self.boundaries)):
            raise ValueError("segment out of range")
        self._up = [b * (1.0 + self.margin) for b in self.boundaries]
        self._down = [b * (1.0 - self.margin) for b in self.boundaries]

    def feed(self, lux: float) -> tuple[int, int] | None:
        """Advance on one sample; returns (from, to) iff the segment changed.

        Negative lux is a broken sample: rejected, no state change.
        """
        if lux < 0:
            raise ValueError("negative lux sample")
        s = self.segment
        up, down = self._up, self._down
        k = len(up)
        if (s == k or lux < up[s]) and (s == 0 or lux > down[s - 1]):
            return None
        while s < k and lux >= up[s]:
            s += 1
        while s > 0 and lux <= down[s - 1]:
            s -= 1
        if s == self.segment:
            return None
        old, self.segment = self.segment, s
        return (old, s)


@dataclass
class StepGate:
    """Open iff at least one step event landed within ``window_ms`` of now."""

    window_ms: int
    _recent: deque = field(default_factory=deque)

    def record_step(self, timestamp_ms: int) -> None:
        self._recent.append(timestamp_ms)

    def is_open(self, now_ms: int) -> bool:
        recent = self._recent
        while recent and recent[0] < now_ms - self.window_ms:
            recent.popleft()
        # samples arrive in time order, so anything left is <= now
        return bool(recent)


@dataclass
class PollSchedule:
    """Tracks when each polled source last ran; polls are >= period apart."""

    periods_ms: dict[SourceKind, int]
    last_poll_ms: dict[SourceKind, int] = field(default_factory=dict)

    def due(self, source: SourceKind, now_ms: int) -> bool:
        last = self.last_poll_ms.get(source)
        return last is None or now_ms - last >= self.periods_ms[source]

    def mark(self, source: SourceKind, now_ms: int) -> None:
        self.last_poll_ms[source] = now_ms


@dataclass
class Fence:
    """Named predicate over the context snapshot; fires on edges only."""

    identifier: str
    predicate: Callable[[ContextSnapshot], bool]
    last_result: bool | None = None


@dataclass
class ConsentState:
    """Transitions only absent -> accepted; there is no silent reset."""

    accepted: bool = False
    accepted_at: int | None = None

    def accept(self, timestamp_ms: int) -> None:
        if not self.accepted:
            self.accepted = True
            self.accepted_at = timestamp_ms


def consent_gate(state: ConsentState, action: str) -> bool:
    """True (allow) iff consent was accepted; denies both collect and transmit."""
    if action not in ("collect", "transmit"):
        raise ValueError(f"unknown action: {action}")
    return state.accepted


class Pipeline:
    """Wires the trackers to one device's event log.

    The pipeline is the log's single writer. Raw samples come in via
    :meth:`handle_raw` with a monotonically advancing virtual or real
    clock; polled sources run from :meth:`advance`.
    """

    def __init__(
        self,
        config: PipelineConfig,
        store: EventLog,
        salt: bytes,
        device_id: str,
        diagnostics: Diagnostics | None = None,
        consent: ConsentState | None = None,
    ):
        self.config = config
        self.store = store
        self.salt = salt
        self.pseudonym = pseudonymize(device_id, salt)
        self.diagnostics = diagnostics or Diagnostics()
        self.consent = consent or ConsentState()
        self.quantizer = HysteresisQuantizer(config.light_boundaries, config.hysteresis_margin)
        self.step_gate = StepGate(config.step_window_ms)
        self.polls = PollSchedule(
            {
                SourceKind.APP_USAGE: config.app_usage_poll_ms,
                SourceKind.APP_TRAFFIC: config.app_traffic_poll_ms,
                SourceKind.WEATHER: config.weather_poll_ms,
            }
        )
        self.poll_wakeups = 0
        self._observations: dict[SourceKind, Observation] = {}
        self._fences: dict[str, tuple[Fence, Callable]] = {}
        self._unavailable: set[SourceKind] = set()
        # poll buffers
        self._weather_latest: dict | None = None
        self._usage_buckets: dict[tuple[str, int], int] = {}  # (app, hour_start) -> ms
        self._traffic_buckets: dict[tuple[str, int], list[int]] = {}  # -> [rx, tx]

    # -- consent / availability -------------------------------------------

    def accept_consent(self, timestamp_ms: int) -> None:
        self.consent.accept(timestamp_ms)

    def set_source_available(self, source: SourceKind, available: bool) -> None:
        if available:
            self._unavailable.discard(source)
        else:
            self._unavailable.add(source)

    # -- snapshot / fences --------------------------------------------------

    def snapshot(self) -> ContextSnapshot:
        return ContextSnapshot(dict(self._observations))

    def register_fence(self, fence: Fence, callback: Callable[[str, bool], None]):
        if fence.identifier in self._fences:
            raise DuplicateFenceError(f"fence {fence.identifier!r} already registered")
        fence.last_result = bool(fence.predicate(self.snapshot()))
        self._fences[fence.identifier] = (fence, callback)

    def _evaluate_fences(self) -> None:
        snapshot = self.snapshot()
        for fence, callback in self._fences.values():
            result = bool(fence.predicate(snapshot))
            if result != fence.last_result:
                fence.last_result = result
                callback(fence.identifier, result)

    # -- ingestion ----------------------------------------------------------

    def handle_raw(self, timestamp_ms: int, source: SourceKind, values: dict) -> list[EventRecord]:
        """Feed one raw sample; returns the events it caused (possibly none)."""
        emitted = self.advance(timestamp_ms)
        if not consent_gate(self.consent, "collect"):
            self.diagnostics.increment("samples_dropped_no_consent")
            return emitted
        if not self.config.permitted(source):
            self.diagnostics.increment(f"samples_dropped_permission.{source.value}")
            return emitted

        if source is SourceKind.LIGHT:
            emitted.extend(self._handle_light(timestamp_ms, values))
        elif source is SourceKind.ACCELEROMETER:
            emitted.extend(self._handle_accel(timestamp_ms, values))
        elif source is SourceKind.STEPS:
            self.step_gate.record_step(timestamp_ms)
            emitted.append(self._emit(timestamp_ms, source, {"count": values["count"]}))
        elif source is SourceKind.WEATHER:
            self._weather_latest = dict(values)
        elif source is SourceKind.APP_USAGE:
            self._buffer_usage(values)
        elif source is SourceKind.APP_TRAFFIC:
            self._buffer_traffic(timestamp_ms, values)
        elif source in (
            SourceKind.WIFI,
            SourceKind.BLUETOOTH,
            SourceKind.CALL_META,
            SourceKind.MUSIC_META,
            SourceKind.NOTIFICATION_META,
        ):
            emitted.append(self._emit(timestamp_ms, source, scrub(source, values, self.salt)))
        else:
            # location, activity, phone_lock, headphone, battery: direct listeners
            emitted.append(self._emit(timestamp_ms, source, self._round_reals(source, values)))
        return emitted

    def _handle_light(self, timestamp_ms: int, values: dict) -> list[EventRecord]:
        try:
            change = self.quantizer.feed(values["lux"])
        except ValueError:
            self.diagnostics.increment("light_samples_rejected")
            return []
        if change is None:
            return []
        return [
            self._emit(
                timestamp_ms,
                SourceKind.LIGHT,
                {"segment_from": change[0], "segment_to": change[1]},
            )
        ]

    def _handle_accel(self, timestamp_ms: int, values: dict) -> list[EventRecord]:
        if not self.step_gate.is_open(timestamp_ms):
            self.diagnostics.increment("accel_samples_gated")
            return []
        payload = {axis: round(float(values[axis]), 6) for axis in ("x", "y", "z")}
        return [self._emit(timestamp_ms, SourceKind.ACCELEROMETER, payload)]

    @staticmethod
    def _round_reals(source: SourceKind, values: dict) -> dict:
        out = {}
        for key, value in values.items():
            if isinstance(value, float) and not isinstance(value, bool):
                out[key] = round(value, 6)
            else:
                out[key] = value
        return out

    def _emit(self, timestamp_ms: int, source: SourceKind, payload: dict) -> EventRecord:
        event = EventRecord(
            pseudonym=self.pseudonym,
            seq=self.store.next_seq,
            timestamp=timestamp_ms,
            source=source,
            payload=payload,
        )
        self.store.append(event)
        self._observations[source] = Observation(payload, timestamp_ms)
        self._evaluate_fences()
        return event

    # -- polled sources -----------------------------------------------------

    def advance(self, now_ms: int) -> list[EventRecord]:
        """Run any polls that have come due at ``now_ms``."""
        if not consent_gate(self.consent, "collect"):
            return []
        emitted: list[EventRecord] = []
        for source in (SourceKind.APP_USAGE, SourceKind.APP_TRAFFIC, SourceKind.WEATHER):
            if not self.config.permitted(source):
                continue
            if self.polls.due(source, now_ms):
                self.polls.mark(source, now_ms)
                self.poll_wakeups += 1
                emitted.extend(self._poll(source, now_ms, force=False))
        return emitted

    def flush(self, now_ms: int) -> list[EventRecord]:
        """Final poll pass: drain every buffered bucket regardless of period."""
        if not consent_gate(self.consent, "collect"):
            return []
        emitted: list[EventRecord] = []
        for source in (SourceKind.APP_USAGE, SourceKind.APP_TRAFFIC, SourceKind.WEATHER):
            if self.config.permitted(source):
                emitted.extend(self._poll(source, now_ms, force=True))
        return emitted

    def _poll(self, source: SourceKind, now_ms: int, force: bool) -> list[EventRecord]:
        if source in self._unavailable:
            self.diagnostics.increment(f"poll_unavailable.{source.value}")
            return []
        if source is SourceKind.WEATHER:
            return self._poll_weather(now_ms)
        if source is SourceKind.APP_USAGE:
            return self._poll_usage(now_ms, force)
        return self._poll_traffic(now_ms, force)

    def _poll_weather(self, now_ms: int) -> list[EventRecord]:
        if self._weather_latest is None:
            return []
        values = self._round_reals(SourceKind.WEATHER, self._weather_latest)
        self._weather_latest = None
        return [self._emit(now_ms, SourceKind.WEATHER, values)]

    def _buffer_usage(self, values: dict) -> None:
        app, start, end = values["app"], values["start_ms"], values["end_ms"]
        hour = (start // HOUR_MS) * HOUR_MS
        while hour < end:
            overlap = min(end, hour + HOUR_MS) - max(start, hour)
            if overlap > 0:
                key = (app, hour)
                self._usage_buckets[key] = self._usage_buckets.get(key, 0) + overlap
            hour += HOUR_MS

    def _poll_usage(self, now_ms: int, force: bool) -> list[EventRecord]:
        ready = [
            key
            for key in self._usage_buckets
            if force or key[1] + HOUR_MS <= now_ms
        ]
        events = []
        for app, hour in sorted(ready, key=lambda k: (k[1], pseudonymize(k[0], self.salt))):
            ms_used = self._usage_buckets.pop((app, hour))
            events.append(
                self._emit(
                    now_ms,
                    SourceKind.APP_USAGE,
                    {
                        "app_digest": pseudonymize(app, self.salt),
                        "seconds_used": ms_used // 1000,
                        "hour_start": hour,
                    },
                )
            )
        return events

    def _buffer_traffic(self, timestamp_ms: int, values: dict) -> None:
        hour = (timestamp_ms // HOUR_MS) * HOUR_MS
        key = (values["app"], hour)
        bucket = self._traffic_buckets.setdefault(key, [0, 0])
        bucket[0] += values["rx_bytes"]
        bucket[1] += values["tx_bytes"]

    def _poll_traffic(self, now_ms: int, force: bool) -> list[EventRecord]:
        ready = [
            key
            for key in self._traffic_buckets
            if force or key[1] + HOUR_MS <= now_ms
        ]
        events = []
        for app, hour in sorted(ready, key=lambda k: (k[1], pseudonymize(k[0], self.salt))):
            rx, tx = self._traffic_buckets.pop((app, hour))
            events.append(
                self._emit(
                    now_ms,
                    SourceKind.APP_TRAFFIC,
                    {
                        "app_digest": pseudonymize(app, self.salt),
                        "rx_bytes": rx,
                        "tx_bytes": tx,
                        "hour_start": hour,
                    },
                )
            )
        return events
