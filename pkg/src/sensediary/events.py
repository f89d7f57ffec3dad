"""Event vocabulary, canonical line encoding, and payload validation.

Everything that flows through the pipeline, the local log, and the sync
wire is an :class:`EventRecord`. Records serialize to one ASCII line each
(see ``docs/formats.md``), which doubles as the log file format and the
ingestion wire body. Encoding is deterministic: fixed field order, fixed
per-source payload key order, integers as-is, reals with exactly six
decimal places.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

PayloadValue = Union[int, float, str, bool]

_WIRE_MAGIC = "ev1"
_PSEUDONYM_RE = re.compile(r"[0-9a-f]{64}")
_KEY_RE = re.compile(r"[a-z][a-z0-9_]*")
_INT_RE = re.compile(r"-?(0|[1-9][0-9]*)")
_REAL_RE = re.compile(r"-?[0-9]+\.[0-9]{6}")


class SourceKind(str, Enum):
    """The tracked data sources. Exactly these seventeen exist."""

    LOCATION = "location"
    WEATHER = "weather"
    LIGHT = "light"
    ACCELEROMETER = "accelerometer"
    ACTIVITY = "activity"
    STEPS = "steps"
    PHONE_LOCK = "phone_lock"
    HEADPHONE = "headphone"
    BATTERY = "battery"
    WIFI = "wifi"
    BLUETOOTH = "bluetooth"
    CALL_META = "call_meta"
    MUSIC_META = "music_meta"
    PHOTO_META = "photo_meta"
    NOTIFICATION_META = "notification_meta"
    APP_USAGE = "app_usage"
    APP_TRAFFIC = "app_traffic"


@dataclass(frozen=True)
class FieldSpec:
    """One payload key: wire name, value type, whether it must be present."""

    name: str
    kind: type
    required: bool = True
    choices: tuple[str, ...] = ()


# Per-source payload schemas, in canonical (wire) key order. These are the
# *scrubbed* shapes: identifying values appear only as 64-hex digests. The
# field choices for call/music/photo/notification metadata are this
# project's own (documented in docs/formats.md).
PAYLOAD_SCHEMAS: dict[SourceKind, tuple[FieldSpec, ...]] = {
    SourceKind.LOCATION: (
        FieldSpec("lat", float),
        FieldSpec("lon", float),
        FieldSpec("accuracy_m", float, required=False),
    ),
    SourceKind.WEATHER: (
        FieldSpec("temp_c", float),
        FieldSpec("condition", str, choices=("clear", "clouds", "rain", "snow", "fog")),
    ),
    SourceKind.LIGHT: (
        FieldSpec("segment_from", int),
        FieldSpec("segment_to", int),
    ),
    SourceKind.ACCELEROMETER: (
        FieldSpec("x", float),
        FieldSpec("y", float),
        FieldSpec("z", float),
    ),
    SourceKind.ACTIVITY: (
        FieldSpec("kind", str, choices=("still", "walking", "running", "cycling", "in_vehicle")),
        FieldSpec("confidence", float, required=False),
    ),
    SourceKind.STEPS: (
        FieldSpec("count", int),
    ),
    SourceKind.PHONE_LOCK: (
        FieldSpec("state", str, choices=("locked", "unlocked")),
    ),
    SourceKind.HEADPHONE: (
        FieldSpec("state", str, choices=("plugged", "unplugged")),
    ),
    SourceKind.BATTERY: (
        FieldSpec("level", float),
        FieldSpec("charging", bool),
    ),
    SourceKind.WIFI: (
        FieldSpec("ssid_digest", str),
        FieldSpec("bssid_digest", str, required=False),
        FieldSpec("connected", bool),
    ),
    SourceKind.BLUETOOTH: (
        FieldSpec("address_digest", str),
        FieldSpec("name_digest", str, required=False),
    ),
    SourceKind.CALL_META: (
        FieldSpec("peer_digest", str),
        FieldSpec("direction", str, choices=("incoming", "outgoing", "missed")),
        FieldSpec("duration_s", int),
    ),
    SourceKind.MUSIC_META: (
        FieldSpec("track_digest", str),
        FieldSpec("artist_digest", str),
    ),
    SourceKind.PHOTO_META: (
        FieldSpec("count", int),
    ),
    SourceKind.NOTIFICATION_META: (
        FieldSpec("app_digest", str),
    ),
    SourceKind.APP_USAGE: (
        FieldSpec("app_digest", str),
        FieldSpec("seconds_used", int),
        FieldSpec("hour_start", int),
    ),
    SourceKind.APP_TRAFFIC: (
        FieldSpec("app_digest", str),
        FieldSpec("rx_bytes", int),
        FieldSpec("tx_bytes", int),
        FieldSpec("hour_start", int),
    ),
}

# Raw identifying keys per source, and the digest key each one maps to
# after scrubbing. A payload carrying any of the raw names is rejected.
RAW_IDENTIFIER_KEYS: dict[SourceKind, dict[str, str]] = {
    SourceKind.WIFI: {"ssid": "ssid_digest", "bssid": "bssid_digest"},
    SourceKind.BLUETOOTH: {"address": "address_digest", "name": "name_digest"},
    SourceKind.CALL_META: {"peer": "peer_digest"},
    SourceKind.MUSIC_META: {"track": "track_digest", "artist": "artist_digest"},
    SourceKind.NOTIFICATION_META: {"app": "app_digest"},
    SourceKind.APP_USAGE: {"app": "app_digest"},
    SourceKind.APP_TRAFFIC: {"app": "app_digest"},
}


class EventValidationError(ValueError):
    """Raised where an invalid event cannot be tolerated (e.g. on append)."""


class MalformedEventError(ValueError):
    """A byte sequence that does not parse as a canonical event line."""

    def __init__(self, offset: int, problem: str):
        super().__init__(f"malformed event line at byte {offset}: {problem}")
        self.offset = offset
        self.problem = problem


@dataclass(frozen=True)
class EventRecord:
    """One pseudonymous, timestamped observation from one source kind.

    ``payload`` must be treated as immutable; keys and value types are
    fixed per source by :data:`PAYLOAD_SCHEMAS`.
    """

    pseudonym: str
    seq: int
    timestamp: int  # UTC milliseconds
    source: SourceKind
    payload: Mapping[str, PayloadValue]


@dataclass(frozen=True)
class Observation:
    """Latest payload seen for one source, with its observation time."""

    payload: Mapping[str, PayloadValue]
    timestamp: int


@dataclass(frozen=True)
class ContextSnapshot:
    """Point-in-time view: the latest observation (or none) per source."""

    observations: Mapping[SourceKind, Observation] = field(default_factory=dict)

    def get(self, source: SourceKind) -> Observation | None:
        return self.observations.get(source)

    def value(self, source: SourceKind, key: str, default=None):
        obs = self.observations.get(source)
        if obs is None:
            return default
        return obs.payload.get(key, default)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _real_is_canonical(value: float) -> bool:
    # Encoding carries exactly 6 decimals; the value must survive that.
    return math.isfinite(value) and float(f"{value:.6f}") == value


# pseudonyms repeat millions of times per device stream; remember the
# ones that already passed the regex
_KNOWN_PSEUDONYMS: set[str] = set()


def validate_event(event: EventRecord, prev_seq: int | None = None) -> str | None:
    """Check every EventRecord invariant. Returns None if ok, else the
    violated rule. Total: never raises on bad input.

    ``prev_seq`` is the previous seq in the same device stream, when the
    caller knows it; monotonicity can only be checked with that context.
    """
    if not isinstance(event.pseudonym, str):
        return "malformed pseudonym (need 64 lowercase hex chars)"
    if event.pseudonym not in _KNOWN_PSEUDONYMS:
        if not _PSEUDONYM_RE.fullmatch(event.pseudonym):
            return "malformed pseudonym (need 64 lowercase hex chars)"
        if len(_KNOWN_PSEUDONYMS) > 4096:
            _KNOWN_PSEUDONYMS.clear()
        _KNOWN_PSEUDONYMS.add(event.pseudonym)
    if not _is_int(event.seq) or event.seq < 1:
        return "invalid seq (need integer >= 1)"
    if prev_seq is not None and event.seq <= prev_seq:
        return f"non-increasing seq ({event.seq} after {prev_seq})"
    if not _is_int(event.timestamp) or event.timestamp < 0:
        return "invalid timestamp (need non-negative integer milliseconds)"
    if not isinstance(event.source, SourceKind):
        return "unknown source kind"
    if not isinstance(event.payload, Mapping):
        return "payload is not a mapping"

    schema = PAYLOAD_SCHEMAS[event.source]
    specs = {spec.name: spec for spec in schema}
    raw_keys = RAW_IDENTIFIER_KEYS.get(event.source, {})
    for key in event.payload:
        if key in specs:
            continue
        if key in raw_keys or (isinstance(key, str) and key.endswith("_raw")):
            return f"raw identifier field: {key}"
        return f"unknown payload key: {key}"
    for spec in schema:
        if spec.required and spec.name not in event.payload:
            return f"missing payload key: {spec.name}"
    for spec in schema:
        if spec.name not in event.payload:
            continue
        value = event.payload[spec.name]
        if spec.kind is bool:
            if not isinstance(value, bool):
                return f"wrong type for {spec.name}: expected bool"
        elif spec.kind is int:
            if not _is_int(value):
                return f"wrong type for {spec.name}: expected int"
        elif spec.kind is float:
            if not isinstance(value, float) or isinstance(value, bool):
                return f"wrong type for {spec.name}: expected float"
            if not _real_is_canonical(value):
                return f"unrepresentable real for {spec.name}: needs exactly 6 decimals"
        else:
            if not isinstance(value, str):
                return f"wrong type for {spec.name}: expected str"
            if spec.choices and value not in spec.choices:
                return f"invalid value for {spec.name}: {value!r}"
    return None


def require_valid(event: EventRecord, prev_seq: int | None = None) -> None:
    reason = validate_event(event, prev_seq)
    if reason is not None:
        raise EventValidationError(reason)


def encode_value(value: PayloadValue, kind: type) -> str:
    """Canonical token for one payload value."""
    if kind is bool:
        return "true" if value else "false"
    if kind is int:
        return str(value)
    if kind is float:
        return f"{value:.6f}"
    # json.dumps with ensure_ascii keeps the whole line ASCII, which makes
    # character offsets equal byte offsets in decode errors.
    return json.dumps(value)


def encode_raw_value(value: PayloadValue) -> str:
    """Token for a value whose schema type is implied by its Python type.

    Used for trace files, where payloads are free-form raw samples.
    """
    if isinstance(value, bool):
        return encode_value(value, bool)
    if isinstance(value, int):
        return encode_value(value, int)
    if isinstance(value, float):
        return encode_value(value, float)
    return encode_value(value, str)


def encode_validated(event: EventRecord) -> bytes:
    """Encode without re-validating; the caller guarantees validity."""
    parts = [
        _WIRE_MAGIC,
        event.pseudonym,
        str(event.seq),
        str(event.timestamp),
        event.source.value,
    ]
    for spec in PAYLOAD_SCHEMAS[event.source]:
        if spec.name in event.payload:
            parts.append(f"{spec.name}={encode_value(event.payload[spec.name], spec.kind)}")
    return (" ".join(parts) + "\n").encode("ascii")


def canonical_encode(event: EventRecord) -> bytes:
    """Serialize a valid event to its canonical line (ASCII, ends with \\n)."""
    require_valid(event)
    return encode_validated(event)


def _take_token(text: str, pos: int, what: str) -> tuple[str, int]:
    end = text.find(" ", pos)
    if end == -1 or end == pos:
        raise MalformedEventError(pos, f"expected {what}")
    return text[pos:end], end + 1


def parse_value_token(text: str, pos: int) -> tuple[PayloadValue, int]:
    """Parse one value token starting at ``pos``; returns (value, next_pos)."""
    if pos >= len(text):
        raise MalformedEventError(pos, "expected a value")
    if text[pos] == '"':
        i = pos + 1
        while i < len(text):
            if text[i] == "\\":
                i += 2
                continue
            if text[i] == '"':
                try:
                    return json.loads(text[pos : i + 1]), i + 1
                except json.JSONDecodeError:
                    raise MalformedEventError(pos, "bad string escape") from None
            i += 1
        raise MalformedEventError(pos, "unterminated string")
    end = text.find(" ", pos)
    if end == -1:
        end = len(text)
    token = text[pos:end]
    if token == "true":
        return True, end
    if token == "false":
        return False, end
    if _INT_RE.fullmatch(token):
        return int(token), end
    if _REAL_RE.fullmatch(token):
        return float(token), end
    raise MalformedEventError(pos, f"bad value token: {token!r}")


def parse_pairs(text: str, pos: int) -> dict[str, PayloadValue]:
    """Parse space-separated ``key=value`` pairs from ``pos`` to end of text."""
    payload: dict[str, PayloadValue] = {}
    while pos < len(text):
        eq = text.find("=", pos)
        if eq == -1:
            raise MalformedEventError(pos, "expected key=value pair")
        key = text[pos:eq]
        if not _KEY_RE.fullmatch(key):
            raise MalformedEventError(pos, f"bad payload key: {key!r}")
        if key in payload:
            raise MalformedEventError(pos, f"duplicate payload key: {key}")
        value, pos = parse_value_token(text, eq + 1)
        payload[key] = value
        if pos < len(text):
            if text[pos] != " ":
                raise MalformedEventError(pos, "expected space between pairs")
            pos += 1
            if pos == len(text):
                raise MalformedEventError(pos, "trailing space")
    return payload


def canonical_decode(data: bytes) -> EventRecord:
    """Parse one canonical event line. Raises MalformedEventError (with the
    byte offset of the problem) on anything that is not a complete line."""
    if not isinstance(data, bytes):
        raise MalformedEventError(0, "expected bytes")
    if not data.endswith(b"\n"):
        raise MalformedEventError(len(data), "truncated line (missing trailing newline)")
    body = data[:-1]
    nl = body.find(b"\n")
    if nl != -1:
        raise MalformedEventError(nl, "embedded newline")
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedEventError(exc.start, "non-ASCII byte") from None

    magic, pos = _take_token(text, 0, "magic")
    if magic != _WIRE_MAGIC:
        raise MalformedEventError(0, f"bad magic: {magic!r}")
    pseudonym, pos = _take_token(text, pos, "pseudonym")
    if not _PSEUDONYM_RE.fullmatch(pseudonym):
        raise MalformedEventError(4, "bad pseudonym")
    seq_tok = pos
    seq_str, pos = _take_token(text, pos, "seq")
    if not _INT_RE.fullmatch(seq_str) or seq_str.startswith("-"):
        raise MalformedEventError(seq_tok, f"bad seq: {seq_str!r}")
    ts_tok = pos
    ts_str, pos = _take_token(text, pos, "timestamp")
    if not _INT_RE.fullmatch(ts_str) or ts_str.startswith("-"):
        raise MalformedEventError(ts_tok, f"bad timestamp: {ts_str!r}")
    src_tok = pos
    source_str, pos = _take_token(text, pos, "source")
    try:
        source = SourceKind(source_str)
    except ValueError:
        raise MalformedEventError(src_tok, f"unknown source: {source_str!r}") from None
    payload = parse_pairs(text, pos)
    return EventRecord(
        pseudonym=pseudonym,
        seq=int(seq_str),
        timestamp=int(ts_str),
        source=source,
        payload=payload,
    )


def decode_lines(data: bytes) -> list[EventRecord]:
    """Decode a newline-delimited body of canonical lines (the wire format)."""
    events = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        try:
            events.append(canonical_decode(raw))
        except MalformedEventError as exc:
            raise MalformedEventError(offset + exc.offset, exc.problem) from None
        offset += len(raw)
    return events
