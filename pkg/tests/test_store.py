from __future__ import annotations

from datetime import date

import pytest

from conftest import make_event
from sensediary.diagnostics import Diagnostics
from sensediary.events import SourceKind
from sensediary.store import (
    EventLog,
    LogCorruptError,
    SeqMismatchError,
    aggregate_day,
    weekly_view,
)

DAY = date(2024, 1, 1)
T0 = 1_704_067_200_000  # start of DAY, UTC


def ts(hours: float) -> int:
    return int(T0 + hours * 3_600_000)


def lock_event(seq, hours, state):
    return make_event(
        seq=seq, timestamp=ts(hours), source=SourceKind.PHONE_LOCK, payload={"state": state}
    )


# -- append ------------------------------------------------------------------


def test_append_advances_seq(event_log):
    event_log.append(make_event(seq=1))
    event_log.append(make_event(seq=2))
    assert event_log.max_seq == 2
    assert event_log.next_seq == 3
    assert len(event_log.events()) == 2


def test_append_rejects_seq_gap(event_log):
    event_log.append(make_event(seq=1))
    event_log.append(make_event(seq=2))
    with pytest.raises(SeqMismatchError):
        event_log.append(make_event(seq=5))


def test_append_rejects_invalid_event(event_log):
    from sensediary.events import EventValidationError

    with pytest.raises(EventValidationError):
        event_log.append(make_event(seq=1, payload={"level": 0.5}))  # missing charging


def test_reload_restores_identical_state(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    for seq in range(1, 51):
        log.append(make_event(seq=seq))
    events_before = list(log.events())
    log.close()
    reloaded = EventLog(path)
    assert list(reloaded.events()) == events_before
    assert reloaded.next_seq == 51
    reloaded.close()


def test_reload_drops_torn_tail(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    for seq in range(1, 4):
        log.append(make_event(seq=seq))
    log.close()
    whole = path.read_bytes()
    path.write_bytes(whole[:-7])  # tear the last line
    reloaded = EventLog(path)
    assert reloaded.max_seq == 2
    assert reloaded.diagnostics.counters["store_torn_tail_dropped"] == 1
    # the torn bytes are gone from disk too, so appends stay clean
    reloaded.append(make_event(seq=3))
    assert reloaded.max_seq == 3
    reloaded.close()


def test_reload_rejects_corruption_before_end(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    for seq in range(1, 4):
        log.append(make_event(seq=seq))
    log.close()
    lines = path.read_bytes().splitlines(keepends=True)
    lines[1] = b"garbage here\n"
    path.write_bytes(b"".join(lines))
    with pytest.raises(LogCorruptError):
        EventLog(path)


def test_crash_at_every_append_boundary_small(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    for seq in range(1, 21):
        log.append(make_event(seq=seq))
    log.close()
    data = path.read_bytes()
    lines = data.splitlines(keepends=True)
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line))
    for i, offset in enumerate(offsets):
        trunc = tmp_path / f"crash{i}.log"
        trunc.write_bytes(data[:offset])
        reloaded = EventLog(trunc)
        assert reloaded.max_seq == i
        reloaded.close()


def test_sync_cursor_persists_and_never_decreases(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    for seq in range(1, 11):
        log.append(make_event(seq=seq))
    log.advance_sync_cursor(7)
    log.advance_sync_cursor(3)  # ignored
    assert log.sync_cursor == 7
    with pytest.raises(ValueError):
        log.advance_sync_cursor(99)
    log.close()
    reloaded = EventLog(path)
    assert reloaded.sync_cursor == 7
    reloaded.close()


# -- purge ---------------------------------------------------------------------


def test_purge_empties_log_and_resets_seq(tmp_path):
    diagnostics = Diagnostics(tmp_path / "state")
    log = EventLog(tmp_path / "events.log", diagnostics=diagnostics)
    for seq in range(1, 101):
        log.append(make_event(seq=seq))
    removed = log.purge_all(timestamp_ms=T0)
    assert removed == 100
    assert log.max_seq == 0 and log.next_seq == 1
    assert (tmp_path / "events.log").stat().st_size == 0
    audit = diagnostics.audit_path.read_text()
    assert "purged 100 events" in audit
    assert "battery" not in audit  # no content in the audit line
    log.close()


def test_purge_of_empty_log_is_idempotent(event_log):
    assert event_log.purge_all() == 0
    assert event_log.purge_all() == 0
    assert event_log.max_seq == 0


def test_post_purge_scan_finds_no_canary(tmp_path):
    canary = "secret-ssid-digestable"
    from sensediary.anonymize import pseudonymize, scrub

    salt = bytes(range(16))
    payload = scrub(SourceKind.WIFI, {"ssid": canary, "connected": True}, salt)
    log = EventLog(tmp_path / "events.log")
    log.append(make_event(seq=1, source=SourceKind.WIFI, payload=payload))
    log.purge_all()
    log.close()
    residue = (tmp_path / "events.log").read_bytes()
    assert residue == b""
    assert canary.encode() not in residue
    assert pseudonymize(canary, salt).encode() not in residue


# -- daily aggregates ------------------------------------------------------------


def test_usage_seconds_from_paired_intervals():
    events = [
        lock_event(1, 9.0, "unlocked"),
        lock_event(2, 9.0 + 5 / 60, "locked"),
        lock_event(3, 10.0, "unlocked"),
        lock_event(4, 10.5, "locked"),
    ]
    agg = aggregate_day(events, DAY)
    assert agg.usage_seconds == 2100
    assert agg.unlock_count == 2


def test_unpaired_trailing_unlock_clips_at_day_end():
    events = [lock_event(1, 23.0, "unlocked")]
    agg = aggregate_day(events, DAY)
    assert agg.usage_seconds == 3600
    assert agg.usage_seconds <= 86_400


def test_interval_spanning_midnight_clips_to_both_days():
    events = [
        lock_event(1, 23.0, "unlocked"),
        lock_event(2, 25.0, "locked"),  # 01:00 next day
    ]
    assert aggregate_day(events, DAY).usage_seconds == 3600
    assert aggregate_day(events, date(2024, 1, 2)).usage_seconds == 3600


def test_usage_never_exceeds_a_day():
    events = [lock_event(1, -30.0, "unlocked")]  # unlocked days ago, never locked
    agg = aggregate_day(events, DAY)
    assert agg.usage_seconds == 86_400


def test_location_cells_rounded_to_three_decimals():
    events = [
        make_event(seq=1, timestamp=ts(1), source=SourceKind.LOCATION,
                   payload={"lat": 52.5123, "lon": 13.3267}),
        make_event(seq=2, timestamp=ts(2), source=SourceKind.LOCATION,
                   payload={"lat": 52.51231, "lon": 13.32672}),
    ]
    assert aggregate_day(events, DAY).distinct_location_cells == 1
    events.append(
        make_event(seq=3, timestamp=ts(3), source=SourceKind.LOCATION,
                   payload={"lat": 52.514, "lon": 13.3267})
    )
    assert aggregate_day(events, DAY).distinct_location_cells == 2


def test_empty_day_aggregates_to_zeros():
    agg = aggregate_day([], DAY)
    assert agg.usage_seconds == 0
    assert agg.unlock_count == 0
    assert agg.distinct_location_cells == 0
    assert agg.steps_total == 0
    assert agg.notifications_per_app == {}
    assert agg.photos_count == 0
    assert agg.music_play_count == 0


def test_counting_fields():
    digest_a, digest_b = "a" * 64, "b" * 64
    events = [
        make_event(seq=1, timestamp=ts(1), source=SourceKind.STEPS, payload={"count": 100}),
        make_event(seq=2, timestamp=ts(2), source=SourceKind.STEPS, payload={"count": 50}),
        make_event(seq=3, timestamp=ts(3), source=SourceKind.NOTIFICATION_META,
                   payload={"app_digest": digest_a}),
        make_event(seq=4, timestamp=ts(4), source=SourceKind.NOTIFICATION_META,
                   payload={"app_digest": digest_a}),
        make_event(seq=5, timestamp=ts(5), source=SourceKind.NOTIFICATION_META,
                   payload={"app_digest": digest_b}),
        make_event(seq=6, timestamp=ts(6), source=SourceKind.PHOTO_META, payload={"count": 1}),
        make_event(seq=7, timestamp=ts(7), source=SourceKind.MUSIC_META,
                   payload={"track_digest": digest_a, "artist_digest": digest_b}),
    ]
    agg = aggregate_day(events, DAY)
    assert agg.steps_total == 150
    assert agg.notifications_per_app == {digest_a: 2, digest_b: 1}
    assert agg.photos_count == 1
    assert agg.music_play_count == 1


def test_aggregate_ignores_other_days():
    events = [
        make_event(seq=1, timestamp=ts(30), source=SourceKind.STEPS, payload={"count": 9}),
    ]
    assert aggregate_day(events, DAY).steps_total == 0


def test_weekly_view_is_seven_independent_dailies():
    end = date(2024, 1, 7)
    events = []
    seq = 1
    for day_index in (0, 3, 6):
        events.append(
            make_event(
                seq=seq,
                timestamp=T0 + day_index * 86_400_000 + 1000,
                source=SourceKind.STEPS,
                payload={"count": 10 * (day_index + 1)},
            )
        )
        seq += 1
    week = weekly_view(events, end)
    assert len(week) == 7
    assert [agg.day for agg in week] == [date(2024, 1, d) for d in range(1, 8)]
    # cross-check against independently computed dailies
    for agg in week:
        assert agg.steps_total == aggregate_day(events, agg.day).steps_total
    assert sum(agg.steps_total for agg in week) == 10 + 40 + 70


def test_weekly_view_on_empty_log_is_all_zero():
    week = weekly_view([], date(2024, 1, 7))
    assert all(agg.steps_total == 0 and agg.usage_seconds == 0 for agg in week)


def test_aggregates_deterministic_across_reload(tmp_path):
    path = tmp_path / "events.log"
    log = EventLog(path)
    state = "unlocked"
    for seq in range(1, 200):
        hours = seq * 0.2
        log.append(lock_event(seq, hours, state))
        state = "locked" if state == "unlocked" else "unlocked"
    before = [aggregate_day(log.events(), date(2024, 1, d)) for d in (1, 2)]
    log.close()
    reloaded = EventLog(path)
    after = [aggregate_day(reloaded.events(), date(2024, 1, d)) for d in (1, 2)]
    assert before == after
    reloaded.close()
