"""Deterministic synthetic traces and end-to-end study simulation.

Everything derives from one integer seed: the same SimConfig always
yields byte-identical traces, replay reports, and study reports. The
virtual clock starts at 2024-01-01T00:00Z and 28 simulated days run in
seconds. Battery cost has no hardware here, so the trade-off is measured
through its proxies: stored bytes and poll wakeups.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

from .acquisition import Pipeline
from .anonymize import generate_salt
from .config import PipelineConfig
from .events import (
    MalformedEventError,
    SourceKind,
    encode_raw_value,
    parse_pairs,
)
from .questionnaire import (
    ComplianceRecord,
    Session,
    answer,
    compliance,
    next_question,
)
from .store import EventLog, day_of_timestamp
from .sync import SyncClient

EPOCH_MS = 1_704_067_200_000  # 2024-01-01T00:00:00Z
DAY_MS = 86_400_000
HOUR_MS = 3_600_000
MINUTE_MS = 60_000


class InvalidConfigError(ValueError):
    pass


def derive_seed(seed: int, *parts) -> int:
    """Stable sub-seed for an isolated RNG stream."""
    text = f"{seed}:" + ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int
    source: SourceKind
    values: dict


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    days: int = 7
    users: int = 1
    # light
    lux_sample_period_ms: int = 1000
    lux_peak: float = 20000.0
    lux_floor: float = 4.0
    lux_noise: float = 0.04  # relative
    # phone usage
    sessions_per_day: float = 24.0
    session_minutes_mean: float = 8.0
    # movement
    step_bursts_per_day: float = 8.0
    step_period_ms: int = 5000
    step_burst_min_s: int = 60
    step_burst_max_s: int = 600
    accel_period_ms: int = 2000
    accel_idle_per_day: float = 40.0
    # always-on ambient sampling
    battery_period_ms: int = 20 * MINUTE_MS
    weather_period_ms: int = 10 * MINUTE_MS
    # apps and metadata event rates (per day)
    app_sessions_per_day: float = 20.0
    calls_per_day: float = 4.0
    music_plays_per_day: float = 6.0
    photos_per_day: float = 3.0
    notifications_per_day: float = 30.0
    # identifier pools
    wifi_pool: int = 4
    bluetooth_pool: int = 5
    app_pool: int = 8
    call_peer_pool: int = 6
    location_centers: int = 3
    # study behavior
    consent: bool = True
    completion_probabilities: tuple[float, ...] = (1.0,)
    compliance_threshold: float = 0.8
    raffle_winners: int = 3

    def __post_init__(self):
        if self.days < 0 or self.users < 1 or self.seed < 0:
            raise InvalidConfigError("days must be >= 0, users >= 1, seed >= 0")
        if min(self.lux_sample_period_ms, self.accel_period_ms, self.step_period_ms,
               self.battery_period_ms, self.weather_period_ms) < 1:
            raise InvalidConfigError("sample periods must be positive")
        if not (0 < self.step_burst_min_s < self.step_burst_max_s):
            raise InvalidConfigError("need 0 < step_burst_min_s < step_burst_max_s")
        if not (0 < self.lux_floor < self.lux_peak):
            raise InvalidConfigError("need 0 < lux_floor < lux_peak")
        if not (0 <= self.lux_noise < 1):
            raise InvalidConfigError("lux_noise must be in [0, 1)")
        if not self.completion_probabilities or any(
            not (0.0 <= p <= 1.0) for p in self.completion_probabilities
        ):
            raise InvalidConfigError("completion probabilities must be in [0, 1]")
        if not (0 < self.compliance_threshold <= 1):
            raise InvalidConfigError("threshold must be in (0, 1]")
        for name in (
            "sessions_per_day", "session_minutes_mean", "step_bursts_per_day",
            "accel_idle_per_day", "app_sessions_per_day", "calls_per_day",
            "music_plays_per_day", "photos_per_day", "notifications_per_day",
        ):
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name} must be >= 0")

    @classmethod
    def for_study(cls, seed: int, users: int, days: int, threshold: float,
                  completion_probabilities: tuple[float, ...] = (1.0,),
                  consent: bool = True) -> "SimConfig":
        """Sparse telemetry profile so multi-user month-long studies run in
        seconds: lux every 5 min, fewer metadata events."""
        return cls(
            seed=seed,
            users=users,
            days=days,
            compliance_threshold=threshold,
            completion_probabilities=completion_probabilities,
            consent=consent,
            lux_sample_period_ms=5 * MINUTE_MS,
            sessions_per_day=10.0,
            session_minutes_mean=6.0,
            step_bursts_per_day=2.0,
            step_period_ms=20_000,
            step_burst_max_s=240,
            accel_period_ms=30_000,
            accel_idle_per_day=6.0,
            battery_period_ms=HOUR_MS,
            weather_period_ms=30 * MINUTE_MS,
            app_sessions_per_day=6.0,
            calls_per_day=1.0,
            music_plays_per_day=1.0,
            photos_per_day=1.0,
            notifications_per_day=6.0,
        )

    def completion_probability(self, user: int) -> float:
        return self.completion_probabilities[user % len(self.completion_probabilities)]


# -- planted identifier pools (the canary values privacy tests scan for) ---


def wifi_pool_for(user: int, size: int) -> list[dict]:
    names = ("HomeNet", "OfficeLan", "CafeSpot", "GymFloor", "TransitFree", "NeighborAp")
    pool = []
    for i in range(size):
        mac = hashlib.sha256(f"wifi:{user}:{i}".encode()).digest()[:5]
        pool.append(
            {
                "ssid": f"{names[i % len(names)]}-{user:03d}-{i:02d}",
                "bssid": "02:" + ":".join(f"{b:02x}" for b in mac),
            }
        )
    return pool


def bluetooth_pool_for(user: int, size: int) -> list[dict]:
    pool = []
    for i in range(size):
        mac = hashlib.sha256(f"bt:{user}:{i}".encode()).digest()[:5]
        pool.append(
            {
                "address": "0a:" + ":".join(f"{b:02x}" for b in mac),
                "name": f"bt-gadget-{user:03d}-{i:02d}",
            }
        )
    return pool


def call_peer_pool_for(user: int, size: int) -> list[str]:
    return [f"+4915{user:03d}{i:04d}" for i in range(size)]


def app_pool_for(user: int, size: int) -> list[str]:
    kinds = ("mail", "chat", "maps", "news", "photo", "music", "game", "bank")
    return [f"com.example.{kinds[i % len(kinds)]}{user:03d}n{i:02d}" for i in range(size)]


def planted_canaries(config: SimConfig, user: int) -> list[str]:
    """Every raw identifier this user's trace can contain."""
    canaries: list[str] = []
    for ap in wifi_pool_for(user, config.wifi_pool):
        canaries.extend([ap["ssid"], ap["bssid"]])
    for dev in bluetooth_pool_for(user, config.bluetooth_pool):
        canaries.extend([dev["address"], dev["name"]])
    canaries.extend(call_peer_pool_for(user, config.call_peer_pool))
    canaries.extend(app_pool_for(user, config.app_pool))
    return canaries


# -- trace generation -------------------------------------------------------


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def _daylight_lux(config: SimConfig, t_ms: int) -> float:
    hour = (t_ms % DAY_MS) / HOUR_MS
    if 6.0 < hour < 20.0:
        frac = math.sin(math.pi * (hour - 6.0) / 14.0)
    else:
        frac = 0.0
    return config.lux_floor * (config.lux_peak / config.lux_floor) ** frac


def generate_trace(config: SimConfig, user: int = 0) -> list[TraceEvent]:
    """One user's multi-day raw sample stream, sorted by timestamp."""
    rng = random.Random(derive_seed(config.seed, "trace", user))
    wifi_pool = wifi_pool_for(user, config.wifi_pool)
    bt_pool = bluetooth_pool_for(user, config.bluetooth_pool)
    peers = call_peer_pool_for(user, config.call_peer_pool)
    apps = app_pool_for(user, config.app_pool)
    base_lat = round(48.0 + (user % 40) * 0.02, 6)
    base_lon = round(11.0 + (user % 40) * 0.02, 6)
    centers = [
        (round(base_lat + i * 0.004, 6), round(base_lon + i * 0.004, 6))
        for i in range(config.location_centers)
    ]

    events: list[TraceEvent] = []
    add = events.append

    for day in range(config.days):
        day_start = EPOCH_MS + day * DAY_MS
        wake_ms = day_start + 6 * HOUR_MS + rng.randrange(0, 2 * HOUR_MS, 1000)
        sleep_ms = day_start + 22 * HOUR_MS + rng.randrange(0, HOUR_MS, 1000)
        awake_span = sleep_ms - wake_ms

        # phone sessions: strict unlock/lock alternation via a cursor walk
        sessions: list[tuple[int, int]] = []
        mean_gap_s = max(60.0, awake_span / 1000 / max(config.sessions_per_day, 0.1))
        cursor = wake_ms
        while True:
            gap_s = max(30, int(rng.expovariate(1.0 / mean_gap_s)))
            start = cursor + gap_s * 1000
            dur_s = min(7200, max(20, int(rng.expovariate(1.0 / (config.session_minutes_mean * 60)))))
            end = start + dur_s * 1000
            if end >= sleep_ms:
                break
            sessions.append((start, end))
            cursor = end
        for start, end in sessions:
            add(TraceEvent(start, SourceKind.PHONE_LOCK, {"state": "unlocked"}))
            add(TraceEvent(end, SourceKind.PHONE_LOCK, {"state": "locked"}))
            # the light sensor only yields data while unlocked
            t = start
            while t < end:
                lux = _daylight_lux(config, t) * (1.0 + config.lux_noise * (2 * rng.random() - 1))
                add(TraceEvent(t, SourceKind.LIGHT, {"lux": round(max(lux, 0.0), 6)}))
                t += config.lux_sample_period_ms

        # movement bursts: steps plus high-rate accelerometer
        for _ in range(_poisson(rng, config.step_bursts_per_day)):
            burst_start = wake_ms + rng.randrange(0, max(awake_span - 10 * MINUTE_MS, 1), 1000)
            burst_len = rng.randrange(config.step_burst_min_s, config.step_burst_max_s, 10) * 1000
            burst_end = burst_start + burst_len
            t = burst_start
            while t < burst_end:
                add(TraceEvent(t, SourceKind.STEPS, {"count": rng.randint(6, 18)}))
                accel_t = t
                while accel_t < min(t + config.step_period_ms, burst_end):
                    add(
                        TraceEvent(
                            accel_t,
                            SourceKind.ACCELEROMETER,
                            {
                                "x": round(rng.gauss(0.0, 1.2), 6),
                                "y": round(rng.gauss(0.0, 1.2), 6),
                                "z": round(9.81 + rng.gauss(0.0, 0.8), 6),
                            },
                        )
                    )
                    accel_t += config.accel_period_ms
                t += config.step_period_ms
            add(TraceEvent(burst_start, SourceKind.ACTIVITY, {"kind": "walking"}))
            add(TraceEvent(burst_end, SourceKind.ACTIVITY, {"kind": "still"}))

        # idle accelerometer samples: land outside bursts, the gate drops them
        for _ in range(_poisson(rng, config.accel_idle_per_day)):
            t = day_start + rng.randrange(0, DAY_MS, 1000)
            add(
                TraceEvent(
                    t,
                    SourceKind.ACCELEROMETER,
                    {
                        "x": round(rng.gauss(0.0, 0.05), 6),
                        "y": round(rng.gauss(0.0, 0.05), 6),
                        "z": round(9.81 + rng.gauss(0.0, 0.02), 6),
                    },
                )
            )

        # foreground app sessions: sequential, integer seconds
        app_cursor = wake_ms
        for _ in range(_poisson(rng, config.app_sessions_per_day)):
            gap_s = max(10, int(rng.expovariate(1.0 / 900.0)))
            start = app_cursor + gap_s * 1000
            dur_s = min(3600, max(5, int(rng.expovariate(1.0 / 420.0))))
            end = start + dur_s * 1000
            if end >= sleep_ms:
                break
            app = apps[rng.randrange(len(apps))]
            add(TraceEvent(end, SourceKind.APP_USAGE, {"app": app, "start_ms": start, "end_ms": end}))
            add(
                TraceEvent(
                    end,
                    SourceKind.APP_TRAFFIC,
                    {
                        "app": app,
                        "rx_bytes": rng.randrange(2_000, 2_000_000),
                        "tx_bytes": rng.randrange(500, 300_000),
                    },
                )
            )
            app_cursor = end

        # weather: raw readings every 10 minutes, stored only via polls
        t = day_start
        condition = rng.choice(("clear", "clouds", "rain"))
        while t < day_start + DAY_MS:
            if rng.random() < 0.05:
                condition = rng.choice(("clear", "clouds", "rain", "fog"))
            temp = 9.0 + 7.0 * math.sin(math.pi * ((t % DAY_MS) / HOUR_MS - 7.0) / 12.0)
            add(
                TraceEvent(
                    t,
                    SourceKind.WEATHER,
                    {"temp_c": round(temp + rng.uniform(-0.4, 0.4), 6), "condition": condition},
                )
            )
            t += config.weather_period_ms

        # battery sawtooth: overnight charge, daytime drain
        t = day_start
        while t < day_start + DAY_MS:
            hour = (t % DAY_MS) / HOUR_MS
            if hour < 6.0:
                level = min(1.0, 0.55 + hour * 0.075)
                charging = True
            else:
                level = max(0.05, 1.0 - (hour - 6.0) * 0.045)
                charging = False
            add(
                TraceEvent(
                    t,
                    SourceKind.BATTERY,
                    {"level": round(level, 6), "charging": charging},
                )
            )
            t += config.battery_period_ms

        # location fixes while awake
        t = wake_ms
        while t < sleep_ms:
            lat, lon = centers[rng.randrange(len(centers))]
            add(
                TraceEvent(
                    t,
                    SourceKind.LOCATION,
                    {
                        "lat": round(lat + rng.uniform(-0.0004, 0.0004), 6),
                        "lon": round(lon + rng.uniform(-0.0004, 0.0004), 6),
                    },
                )
            )
            t += rng.randrange(10 * MINUTE_MS, 25 * MINUTE_MS, MINUTE_MS)

        # wifi / bluetooth sightings
        t = wake_ms
        while t < sleep_ms:
            ap = wifi_pool[rng.randrange(len(wifi_pool))]
            add(
                TraceEvent(
                    t,
                    SourceKind.WIFI,
                    {"ssid": ap["ssid"], "bssid": ap["bssid"], "connected": rng.random() < 0.7},
                )
            )
            if rng.random() < 0.6:
                dev = bt_pool[rng.randrange(len(bt_pool))]
                add(TraceEvent(t + 5000, SourceKind.BLUETOOTH, dict(dev)))
            t += rng.randrange(20 * MINUTE_MS, 45 * MINUTE_MS, MINUTE_MS)

        # headphone plug/unplug pairs
        for _ in range(rng.randint(0, 2)):
            t = wake_ms + rng.randrange(0, max(awake_span - HOUR_MS, 1), 1000)
            add(TraceEvent(t, SourceKind.HEADPHONE, {"state": "plugged"}))
            add(
                TraceEvent(
                    t + rng.randrange(5 * MINUTE_MS, HOUR_MS, 1000),
                    SourceKind.HEADPHONE,
                    {"state": "unplugged"},
                )
            )

        # call / music / photo / notification metadata
        for _ in range(_poisson(rng, config.calls_per_day)):
            add(
                TraceEvent(
                    wake_ms + rng.randrange(0, awake_span, 1000),
                    SourceKind.CALL_META,
                    {
                        "peer": peers[rng.randrange(len(peers))],
                        "direction": rng.choice(("incoming", "outgoing", "missed")),
                        "duration_s": rng.randint(5, 1800),
                    },
                )
            )
        for _ in range(_poisson(rng, config.music_plays_per_day)):
            i = rng.randrange(40)
            add(
                TraceEvent(
                    wake_ms + rng.randrange(0, awake_span, 1000),
                    SourceKind.MUSIC_META,
                    {"track": f"Track {i} u{user:03d}", "artist": f"Artist {i % 7} u{user:03d}"},
                )
            )
        for _ in range(_poisson(rng, config.photos_per_day)):
            add(
                TraceEvent(
                    wake_ms + rng.randrange(0, awake_span, 1000),
                    SourceKind.PHOTO_META,
                    {"count": 1},
                )
            )
        for _ in range(_poisson(rng, config.notifications_per_day)):
            add(
                TraceEvent(
                    wake_ms + rng.randrange(0, awake_span, 1000),
                    SourceKind.NOTIFICATION_META,
                    {"app": apps[rng.randrange(len(apps))]},
                )
            )

    events.sort(key=lambda e: e.timestamp)
    return events


# -- trace files ------------------------------------------------------------


def write_trace(path: Path, trace: Sequence[TraceEvent]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for event in trace:
            pairs = " ".join(f"{k}={encode_raw_value(v)}" for k, v in event.values.items())
            fh.write(f"{event.timestamp} {event.source.value} {pairs}\n")


def read_trace(path: Path) -> list[TraceEvent]:
    trace = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        try:
            ts_str, source_str, rest = line.split(" ", 2)
            values = parse_pairs(rest, 0)
            trace.append(TraceEvent(int(ts_str), SourceKind(source_str), values))
        except (ValueError, MalformedEventError) as exc:
            raise ValueError(f"{path}:{lineno}: bad trace line: {exc}") from None
    return trace


# -- replay -----------------------------------------------------------------


@dataclass
class ReplayReport:
    days: int
    consent: bool
    raw_counts: dict[str, int]
    stored_counts: dict[str, int]
    stored_bytes: int
    poll_wakeups: int
    hysteresis_margin: float

    @property
    def raw_total(self) -> int:
        return sum(self.raw_counts.values())

    @property
    def stored_total(self) -> int:
        return sum(self.stored_counts.values())

    def reduction_ratios(self) -> dict[str, float]:
        ratios = {}
        for source, raw in sorted(self.raw_counts.items()):
            if raw:
                ratios[source] = self.stored_counts.get(source, 0) / raw
        return ratios

    def to_json_text(self) -> str:
        return json.dumps(
            {
                "days": self.days,
                "consent": self.consent,
                "hysteresis_margin": self.hysteresis_margin,
                "raw_counts": dict(sorted(self.raw_counts.items())),
                "stored_counts": dict(sorted(self.stored_counts.items())),
                "raw_total": self.raw_total,
                "stored_total": self.stored_total,
                "stored_bytes": self.stored_bytes,
                "poll_wakeups": self.poll_wakeups,
                "reduction_ratios": self.reduction_ratios(),
            },
            indent=2,
            sort_keys=True,
        )

    def to_table(self) -> str:
        lines = [
            f"{'source':<18} {'raw':>9} {'stored':>9} {'ratio':>8}",
            "-" * 47,
        ]
        for source in sorted(set(self.raw_counts) | set(self.stored_counts)):
            raw = self.raw_counts.get(source, 0)
            stored = self.stored_counts.get(source, 0)
            ratio = f"{stored / raw:.4f}" if raw else "-"
            lines.append(f"{source:<18} {raw:>9} {stored:>9} {ratio:>8}")
        lines.append("-" * 47)
        lines.append(
            f"{'total':<18} {self.raw_total:>9} {self.stored_total:>9} "
            f"{(self.stored_total / self.raw_total):>8.4f}"
            if self.raw_total
            else f"{'total':<18} {0:>9} {self.stored_total:>9}"
        )
        lines.append(f"stored bytes: {self.stored_bytes}")
        lines.append(f"poll wakeups (battery proxy): {self.poll_wakeups}")
        return "\n".join(lines)


def replay(trace: Sequence[TraceEvent], pipeline: Pipeline) -> ReplayReport:
    """Drive the pipeline over a trace on the virtual clock."""
    raw_counts: Counter = Counter()
    for event in trace:
        raw_counts[event.source.value] += 1
        pipeline.handle_raw(event.timestamp, event.source, dict(event.values))
    if trace:
        pipeline.flush(trace[-1].timestamp)
    stored_counts = Counter(e.source.value for e in pipeline.store.events())
    days = 0
    if trace:
        days = (trace[-1].timestamp - trace[0].timestamp) // DAY_MS + 1
    return ReplayReport(
        days=days,
        consent=pipeline.consent.accepted,
        raw_counts=dict(raw_counts),
        stored_counts=dict(stored_counts),
        stored_bytes=pipeline.store.byte_size(),
        poll_wakeups=pipeline.poll_wakeups,
        hysteresis_margin=pipeline.quantizer.margin,
    )


# -- full study -------------------------------------------------------------


@dataclass
class UserOutcome:
    email: str
    completed_days: tuple[str, ...]  # ISO dates
    compliance_rate: float
    met_threshold: bool
    participation_code: str | None

    def as_dict(self) -> dict:
        return {
            "email": self.email,
            "completed_days": list(self.completed_days),
            "compliance_rate": self.compliance_rate,
            "met_threshold": self.met_threshold,
            "participation_code": self.participation_code,
        }


@dataclass
class DeviceStats:
    pseudonym: str
    raw_samples: int
    stored_events: int
    acked_through: int
    bytes_sent: int

    def as_dict(self) -> dict:
        return {
            "pseudonym": self.pseudonym,
            "raw_samples": self.raw_samples,
            "stored_events": self.stored_events,
            "acked_through": self.acked_through,
            "bytes_sent": self.bytes_sent,
        }


@dataclass
class StudyReport:
    seed: int
    users: int
    days: int
    threshold: float
    outcomes: list[UserOutcome]
    devices: list[DeviceStats]
    raffle_winners: list[str]

    @property
    def issued_codes(self) -> list[str]:
        return [o.participation_code for o in self.outcomes if o.participation_code]

    def to_json_text(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "users": self.users,
                "days": self.days,
                "threshold": self.threshold,
                "participants": [o.as_dict() for o in self.outcomes],
                "devices": [d.as_dict() for d in self.devices],
                "raffle_winners": self.raffle_winners,
                "issued_codes": sorted(self.issued_codes),
            },
            indent=2,
            sort_keys=True,
        )

    def to_table(self) -> str:
        lines = [
            f"{'participant':<28} {'rate':>7} {'met':>5} {'code':>12}",
            "-" * 56,
        ]
        for o in self.outcomes:
            lines.append(
                f"{o.email:<28} {o.compliance_rate:>7.4f} {str(o.met_threshold):>5} "
                f"{o.participation_code or '-':>12}"
            )
        lines.append("-" * 56)
        lines.append(f"codes issued: {len(self.issued_codes)} / {self.users}")
        lines.append(f"raffle winners: {', '.join(self.raffle_winners) or '-'}")
        return "\n".join(lines)


def study_email(user: int) -> str:
    return f"participant{user:03d}@study-mail.example"


def run_study(config: SimConfig, client, workdir: Path) -> StudyReport:
    """Full protocol for every virtual user: sign-up, telemetry + sync,
    daily questionnaire sessions, compliance, completion report; then a
    seeded raffle across the completers."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    start_day = day_of_timestamp(EPOCH_MS)
    after_study = start_day + timedelta(days=config.days)

    qdef = client.latest_questionnaire()
    outcomes: list[UserOutcome] = []
    devices: list[DeviceStats] = []

    for user in range(config.users):
        token = client.signup(study_email(user))

        user_rng = random.Random(derive_seed(config.seed, "user", user))
        salt = generate_salt(user_rng.randbytes)
        device_id = f"install-{user_rng.getrandbits(64):016x}"
        log = EventLog(workdir / f"user{user:03d}" / "events.log", fsync=False)
        pipeline = Pipeline(PipelineConfig(), log, salt, device_id)
        if config.consent:
            pipeline.accept_consent(EPOCH_MS)

        trace = generate_trace(config, user)
        raw_total = len(trace)
        replay(trace, pipeline)
        sync = SyncClient(log, client.upload, pipeline.consent, sleep=lambda _s: None)
        sync_result = sync.sync()

        completed: set[date] = set()
        probability = config.completion_probability(user)
        for day in range(config.days):
            if user_rng.random() < probability:
                day_ms = EPOCH_MS + day * DAY_MS + 20 * HOUR_MS
                session = Session(version=qdef.version, started_at=day_ms)
                while next_question(session, qdef) is not None:
                    answer(session, qdef, user_rng.randint(1, 5), day_ms)
                completed.add(start_day + timedelta(days=day))

        record = ComplianceRecord(
            start_date=start_day,
            length_days=config.days,
            completed_dates=frozenset(completed),
            threshold=config.compliance_threshold,
        )
        result = compliance(record, today=after_study)
        code = client.report_completion(token, result.met)
        outcomes.append(
            UserOutcome(
                email=study_email(user),
                completed_days=tuple(sorted(d.isoformat() for d in completed)),
                compliance_rate=result.rate,
                met_threshold=result.met,
                participation_code=code,
            )
        )
        devices.append(
            DeviceStats(
                pseudonym=pipeline.pseudonym,
                raw_samples=raw_total,
                stored_events=log.max_seq,
                acked_through=sync_result.acked_through,
                bytes_sent=sync_result.bytes_sent,
            )
        )
        log.close()

    completer_count = sum(1 for o in outcomes if o.participation_code)
    winners: list[str] = []
    if completer_count:
        winners = client.draw_raffle(
            min(config.raffle_winners, completer_count),
            derive_seed(config.seed, "raffle") % (2**32),
        )

    devices.sort(key=lambda d: d.pseudonym)
    return StudyReport(
        seed=config.seed,
        users=config.users,
        days=config.days,
        threshold=config.compliance_threshold,
        outcomes=outcomes,
        devices=devices,
        raffle_winners=winners,
    )


def make_study_service(config: SimConfig, data_dir: Path | None = None):
    """In-process service + client pair wired for deterministic studies."""
    from .client import InProcessServiceClient
    from .questionnaire import sample_questionnaire
    from .service import StudyService

    service = StudyService(
        data_dir=data_dir,
        rng=random.Random(derive_seed(config.seed, "service")),
        clock_ms=lambda: EPOCH_MS,
    )
    service.publish_questionnaire(sample_questionnaire())
    return service, InProcessServiceClient(service)
