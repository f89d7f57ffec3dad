"""Release criteria, one test per criterion, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <criterion>: PASS|FAIL`` line (visible
with ``pytest -s`` or in the captured output of a failure). Shared
expensive artifacts (the 100 seeded replays, the 50-user study) are
module-scoped fixtures so the whole gate stays fast.

Run just this gate with:  pytest tests/test_acceptance.py -s
"""

from __future__ import annotations

import random
import re
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import make_event
from oracles import eligibility_oracle, hour_bucket_oracle, hysteresis_oracle_emissions
from sensediary.acquisition import Pipeline
from sensediary.anonymize import pseudonymize
from sensediary.config import PipelineConfig
from sensediary.events import SourceKind
from sensediary.service import StudyService
from sensediary.simulate import (
    EPOCH_MS,
    SimConfig,
    generate_trace,
    make_study_service,
    planted_canaries,
    replay,
    run_study,
    study_email,
)
from sensediary.store import EventLog
from sensediary.sync import Batch, SyncClient, TransportError
from sensediary.acquisition import ConsentState

SALT = bytes(range(16))
BOUNDS = (10.0, 100.0, 1000.0, 10000.0)


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


def build_pipeline(directory, name="events.log", config=None, consent=True):
    log = EventLog(directory / name, fsync=False)
    pipeline = Pipeline(config or PipelineConfig(), log, SALT, "acceptance-device")
    if consent:
        pipeline.accept_consent(EPOCH_MS)
    return pipeline


# -- shared fixtures -----------------------------------------------------------


@pytest.fixture(scope="module")
def hundred_replays(tmp_path_factory):
    """100 seeded one-day traces, each replayed through a fresh pipeline."""
    base = tmp_path_factory.mktemp("replays")
    runs = []
    for seed in range(100):
        config = SimConfig(seed=seed, days=1)
        trace = generate_trace(config, 0)
        pipeline = build_pipeline(base, name=f"seed{seed:03d}.log")
        replay(trace, pipeline)
        runs.append((config, trace, list(pipeline.store.events()), pipeline.salt))
        pipeline.store.close()
    return runs


STUDY_PROBS = (1.0, 0.95, 0.9, 0.85, 0.82, 0.8, 0.75, 0.7, 0.5, 0.0)


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    """Full simulated study: 50 users, 28 days, mixed completion rates."""
    config = SimConfig.for_study(
        seed=42, users=50, days=28, threshold=0.8, completion_probabilities=STUDY_PROBS
    )
    service, client = make_study_service(config)
    report = run_study(config, client, tmp_path_factory.mktemp("study"))
    return config, service, client, report


# -- criteria -------------------------------------------------------------------


def test_c01_quantizer_oracle_equivalence():
    with criterion("quantizer oracle equivalence (1000 traces x 10000 samples, <60 s)"):
        started = time.monotonic()
        rng = np.random.default_rng(20240101)
        from sensediary.acquisition import HysteresisQuantizer

        for _ in range(1000):
            samples = np.exp(
                rng.uniform(np.log(0.5), np.log(60000.0), size=10000)
            ).tolist()
            quantizer = HysteresisQuantizer(BOUNDS, 0.1)
            feed = quantizer.feed
            impl = [change for change in map(feed, samples) if change is not None]
            oracle = hysteresis_oracle_emissions(BOUNDS, 0.1, samples)
            assert impl == oracle
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"took {elapsed:.1f} s"


def test_c02_data_volume_reduction(tmp_path):
    with criterion("data-volume reduction (reference ratio <= 0.05; on <= off on 100 traces, <120 s)"):
        started = time.monotonic()
        # reference trace: seed 42, 7 days, 1 Hz lux
        reference = SimConfig(seed=42, days=7)
        assert reference.lux_sample_period_ms == 1000
        pipeline = build_pipeline(tmp_path)
        report = replay(generate_trace(reference, 0), pipeline)
        ratio = report.stored_counts["light"] / report.raw_counts["light"]
        assert ratio <= 0.05, f"stored/raw = {ratio:.4f}"
        # hysteresis on vs off over 100 seeded multi-day light streams
        for seed in range(100):
            samples = [
                e.values["lux"]
                for e in generate_trace(SimConfig(seed=seed, days=3), 0)
                if e.source is SourceKind.LIGHT
            ]
            on = len(hysteresis_oracle_emissions(BOUNDS, 0.1, samples))
            off = len(hysteresis_oracle_emissions(BOUNDS, 0.0, samples))
            assert on <= off, f"seed {seed}: on={on} off={off}"
        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"took {elapsed:.1f} s"


def test_c03_step_gating(hundred_replays):
    with criterion("step gating (zero stored accelerometer events outside step windows)"):
        window = PipelineConfig().step_window_ms
        for _config, trace, stored, _salt in hundred_replays:
            step_times = [e.timestamp for e in trace if e.source is SourceKind.STEPS]
            for event in stored:
                if event.source is SourceKind.ACCELEROMETER:
                    assert any(
                        t <= event.timestamp <= t + window for t in step_times
                    ), f"accel event at {event.timestamp} outside every step window"


def test_c04_hour_bucket_conservation(hundred_replays):
    with criterion("hour-bucket conservation (bucket sums equal session totals exactly)"):
        for _config, trace, stored, salt in hundred_replays:
            sessions = [
                (e.values["app"], e.values["start_ms"], e.values["end_ms"])
                for e in trace
                if e.source is SourceKind.APP_USAGE
            ]
            expected: dict = {}
            for (app, _hour), seconds in hour_bucket_oracle(sessions).items():
                digest = pseudonymize(app, salt)
                expected[digest] = expected.get(digest, 0) + seconds
            got: dict = {}
            for event in stored:
                if event.source is SourceKind.APP_USAGE:
                    digest = event.payload["app_digest"]
                    got[digest] = got.get(digest, 0) + event.payload["seconds_used"]
            assert got == expected


def test_c05_anonymization_canary_scan(tmp_path):
    with criterion("anonymization canary scan (zero raw canaries in log, wire, store)"):
        config = SimConfig(seed=77, days=2)
        service, client = make_study_service(config)
        email = "canary.human@example.org"
        client.signup(email)
        pipeline = build_pipeline(tmp_path)
        replay(generate_trace(config, 0), pipeline)
        sync = SyncClient(
            pipeline.store, client.upload, pipeline.consent, sleep=lambda s: None
        )
        result = sync.sync()
        assert result.acked_through == pipeline.store.max_seq > 0

        canaries = planted_canaries(config, 0) + [email]
        log_bytes = (tmp_path / "events.log").read_text(encoding="ascii")
        wire = "\n".join(
            r.flatten() for r in client.capture.records if r.path == "/v1/events"
        )
        store_dump = service.device_events.dump_text()
        assert wire and store_dump
        for canary in canaries:
            assert canary not in log_bytes, f"canary {canary!r} in local log"
            assert canary not in wire, f"canary {canary!r} on the wire"
            assert canary not in store_dump, f"canary {canary!r} in device store"
        pipeline.store.close()


def test_c06_unlinkability(study):
    with criterion("unlinkability (no shared values; no request carries token and pseudonym)"):
        _config, service, client, report = study
        registry_dump = service.registry.dump_text()
        event_dump = service.device_events.dump_text()

        tokens = [
            record.participant_token
            for record in (service.registry.by_email(study_email(u)) for u in range(50))
        ]
        pseudonyms = [device.pseudonym for device in report.devices]
        codes = report.issued_codes
        assert tokens and pseudonyms and codes

        for user in range(50):
            assert study_email(user) not in event_dump
        for token in tokens:
            assert token not in event_dump
        for code in codes:
            assert code not in event_dump
        for pseudonym in pseudonyms:
            assert pseudonym not in registry_dump

        # full cross-scan: no identifier-shaped value lives in both stores
        word = re.compile(r"[A-Za-z0-9@.\-_]{6,}")
        letters = re.compile(r"[A-Za-z@]")
        registry_values = {
            w for w in word.findall(registry_dump) if letters.search(w)
        }
        event_values = {w for w in word.findall(event_dump) if letters.search(w)}
        shared = registry_values & event_values
        assert shared == set(), f"values in both stores: {sorted(shared)[:5]}"

        # no captured request carries both identifier kinds
        for record in client.capture.records:
            flat = record.flatten()
            has_token = any(token in flat for token in tokens)
            has_pseudonym = any(p in flat for p in pseudonyms)
            assert not (has_token and has_pseudonym), f"{record.path} links both"


class FaultySends:
    """Deterministic per-schedule fault injector around a delivery callable."""

    def __init__(self, deliver, rng: random.Random):
        self.deliver = deliver
        self.rng = rng
        self.held: list[Batch] = []

    def __call__(self, batch: Batch) -> int:
        rng = self.rng
        if self.held and rng.random() < 0.5:
            self.deliver(self.held.pop(0))  # stale duplicate arrives late
        if rng.random() < 0.25:
            raise TransportError("request lost")
        acked = self.deliver(batch)
        roll = rng.random()
        if roll < 0.2:
            acked = self.deliver(batch)  # immediate duplicate
        elif roll < 0.4:
            self.held.append(batch)  # delayed duplicate (reorders later)
        if rng.random() < 0.25:
            raise TransportError("ack lost")
        return acked

    def drain(self):
        while self.held:
            self.deliver(self.held.pop(0))


def test_c07_sync_exactly_once(tmp_path):
    with criterion("sync exactly-once effect (1000 randomized fault schedules, <120 s)"):
        started = time.monotonic()
        log = EventLog(tmp_path / "events.log", fsync=False)
        pseudonym = pseudonymize("acceptance-device", SALT)
        for seq in range(1, 138):
            log.append(
                make_event(
                    seq=seq, timestamp=EPOCH_MS + seq, pseudonym=pseudonym
                )
            )
        consent = ConsentState()
        consent.accept(EPOCH_MS)

        from sensediary.client import InProcessServiceClient

        for schedule in range(1000):
            service = StudyService()
            client = InProcessServiceClient(service)
            transport = FaultySends(client.upload, random.Random(schedule))
            sync = SyncClient(
                log,
                transport,
                consent,
                max_batch_events=16,
                sleep=lambda s: None,
            )
            sync.ack.highest = 0  # fresh server, fresh delivery state
            result = sync.sync()
            transport.drain()
            assert result.acked_through == log.max_seq
            stored = service.device_events.events_for(pseudonym)
            assert stored == list(log.events())  # each once, ordered by seq
        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"took {elapsed:.1f} s"
        log.close()


def test_c08_study_protocol_end_to_end(study):
    with criterion("study protocol (codes match oracle; unique; raffle reproducible)"):
        config, service, client, report = study
        assert report.users == 50 and report.days == 28

        eligible_by_oracle = {
            outcome.email
            for outcome in report.outcomes
            if eligibility_oracle(len(outcome.completed_days), config.days, config.compliance_threshold)
        }
        coded = {o.email for o in report.outcomes if o.participation_code}
        assert coded == eligible_by_oracle
        assert 0 < len(coded) < 50  # mixed probabilities produced both outcomes

        codes = report.issued_codes
        assert len(set(codes)) == len(codes)
        assert all(len(code) == 10 for code in codes)

        assert report.raffle_winners
        assert set(report.raffle_winners) <= coded
        from sensediary.simulate import derive_seed

        again = client.draw_raffle(
            len(report.raffle_winners), derive_seed(config.seed, "raffle") % (2**32)
        )
        assert again == report.raffle_winners


def test_c09_consent_gate(tmp_path):
    with criterion("consent gate (withheld consent stores and transmits zero events)"):
        config = SimConfig(seed=55, days=1, consent=False)
        service, client = make_study_service(config)
        pipeline = build_pipeline(tmp_path, consent=False)
        report = replay(generate_trace(config, 0), pipeline)
        assert report.stored_total == 0
        assert all(count == 0 for count in report.stored_counts.values())
        assert pipeline.store.max_seq == 0

        sync = SyncClient(pipeline.store, client.upload, pipeline.consent)
        result = sync.sync()
        assert result.skipped_no_consent is True
        assert [r for r in client.capture.records if r.path == "/v1/events"] == []
        assert service.device_events.total_events() == 0
        pipeline.store.close()


def test_c10_crash_durability(tmp_path):
    with criterion("crash durability (reload at every append boundary of a 1000-event log)"):
        source = tmp_path / "events.log"
        log = EventLog(source, fsync=True)
        pseudonym = pseudonymize("acceptance-device", SALT)
        for seq in range(1, 1001):
            log.append(
                make_event(
                    seq=seq, timestamp=EPOCH_MS + seq, pseudonym=pseudonym
                )
            )
        log.close()
        data = source.read_bytes()
        offsets = [0]
        for line in data.splitlines(keepends=True):
            offsets.append(offsets[-1] + len(line))
        assert len(offsets) == 1001

        crash_path = tmp_path / "crash.log"
        cursor_path = tmp_path / "crash.log.cursor"
        for count, offset in enumerate(offsets):
            crash_path.write_bytes(data[:offset])
            if cursor_path.exists():
                cursor_path.unlink()
            reloaded = EventLog(crash_path)
            assert reloaded.max_seq == count
            assert [e.seq for e in reloaded.events()] == list(range(1, count + 1))
            reloaded.close()
        # torn mid-line writes recover to the preceding boundary
        for cut in (3, 17, 40):
            crash_path.write_bytes(data[: offsets[500] + cut])
            if cursor_path.exists():
                cursor_path.unlink()
            reloaded = EventLog(crash_path)
            assert reloaded.max_seq == 500
            reloaded.close()
