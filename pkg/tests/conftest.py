from __future__ import annotations

import pytest

from sensediary.events import EventRecord, SourceKind

PSEUDONYM_A = "a" * 64
PSEUDONYM_B = "b1" * 32


def make_event(seq=1, source=SourceKind.BATTERY, payload=None, pseudonym=PSEUDONYM_A,
               timestamp=1_704_067_200_000):
    if payload is None:
        payload = {"level": 0.43, "charging": False}
    return EventRecord(
        pseudonym=pseudonym, seq=seq, timestamp=timestamp, source=source, payload=payload
    )


@pytest.fixture
def event_log(tmp_path):
    from sensediary.store import EventLog

    log = EventLog(tmp_path / "events.log")
    yield log
    log.close()
