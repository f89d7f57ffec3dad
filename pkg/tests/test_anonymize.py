from __future__ import annotations

import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensediary.anonymize import (
    SALT_LENGTH,
    EmptyValueError,
    UnknownFieldError,
    generate_salt,
    load_or_create_salt,
    pseudonymize,
    scrub,
)
from sensediary.events import SourceKind

SALT = bytes(range(16))


def test_digest_is_64_lowercase_hex():
    digest = pseudonymize("device-A", SALT)
    assert re.fullmatch(r"[0-9a-f]{64}", digest)


def test_same_value_same_salt_same_digest():
    assert pseudonymize("device-A", SALT) == pseudonymize("device-A", SALT)


def test_digest_does_not_contain_the_value():
    value = "MyHomeNetwork2024"
    digest = pseudonymize(value, SALT)
    assert value not in digest
    assert value.lower() not in digest


def test_different_salts_give_different_digests_1000_pairs():
    rng = random.Random(99)
    for _ in range(1000):
        s1 = rng.randbytes(SALT_LENGTH)
        s2 = rng.randbytes(SALT_LENGTH)
        if s1 == s2:
            continue
        assert pseudonymize("device-A", s1) != pseudonymize("device-A", s2)


def test_empty_value_rejected():
    with pytest.raises(EmptyValueError):
        pseudonymize("", SALT)


def test_bad_salt_length_rejected():
    with pytest.raises(ValueError):
        pseudonymize("device-A", b"short")


def test_salt_file_created_once_and_persists(tmp_path):
    path = tmp_path / "salt.bin"
    salt1 = load_or_create_salt(path)
    salt2 = load_or_create_salt(path)
    assert salt1 == salt2
    assert len(salt1) == SALT_LENGTH
    # digest stability across "restarts"
    assert pseudonymize("device-A", salt1) == pseudonymize("device-A", salt2)


def test_salt_file_is_owner_only(tmp_path):
    path = tmp_path / "salt.bin"
    load_or_create_salt(path)
    assert path.stat().st_mode & 0o777 == 0o600


def test_generate_salt_rejects_wrong_width_source():
    with pytest.raises(ValueError):
        generate_salt(lambda n: b"\x00")


# -- scrub --------------------------------------------------------------------


def test_scrub_wifi_replaces_identifiers_and_keeps_metadata():
    out = scrub(SourceKind.WIFI, {"ssid": "HomeNet", "connected": True}, SALT)
    assert set(out) == {"ssid_digest", "connected"}
    assert re.fullmatch(r"[0-9a-f]{64}", out["ssid_digest"])
    assert out["connected"] is True
    assert "HomeNet" not in str(out)


def test_scrub_battery_passes_through_unchanged():
    payload = {"level": 0.43, "charging": False}
    assert scrub(SourceKind.BATTERY, payload, SALT) == payload


def test_scrub_same_ssid_on_different_days_gives_same_digest():
    monday = scrub(SourceKind.WIFI, {"ssid": "HomeNet", "connected": True}, SALT)
    friday = scrub(SourceKind.WIFI, {"ssid": "HomeNet", "connected": False}, SALT)
    assert monday["ssid_digest"] == friday["ssid_digest"]


def test_scrub_unknown_field_rejected():
    with pytest.raises(UnknownFieldError):
        scrub(SourceKind.WIFI, {"ssid": "HomeNet", "password": "hunter2"}, SALT)


def test_scrub_covers_every_identifying_source():
    cases = {
        SourceKind.BLUETOOTH: ({"address": "0a:1b:2c:3d:4e:5f", "name": "buds"},
                               {"address_digest", "name_digest"}),
        SourceKind.CALL_META: ({"peer": "+491511234", "direction": "incoming", "duration_s": 60},
                               {"peer_digest", "direction", "duration_s"}),
        SourceKind.MUSIC_META: ({"track": "Track 1", "artist": "Artist 1"},
                                {"track_digest", "artist_digest"}),
        SourceKind.NOTIFICATION_META: ({"app": "com.example.chat"}, {"app_digest"}),
        SourceKind.APP_USAGE: ({"app": "com.example.chat", "seconds_used": 10, "hour_start": 0},
                               {"app_digest", "seconds_used", "hour_start"}),
        SourceKind.APP_TRAFFIC: ({"app": "x.y", "rx_bytes": 1, "tx_bytes": 2, "hour_start": 0},
                                 {"app_digest", "rx_bytes", "tx_bytes", "hour_start"}),
    }
    for source, (raw, expected_keys) in cases.items():
        out = scrub(source, raw, SALT)
        assert set(out) == expected_keys, source


_raw_wifi = st.fixed_dictionaries(
    {
        "ssid": st.text(min_size=1, max_size=30),
        "bssid": st.text(min_size=1, max_size=17),
        "connected": st.booleans(),
    }
)

# distinctive canary identifiers: long enough that a substring hit in a
# digest or in dict syntax cannot happen by accident
_canary_wifi = st.fixed_dictionaries(
    {
        "ssid": st.text(alphabet="GHJKMNPQRSTUVWXYZ-", min_size=8, max_size=30),
        "bssid": st.text(alphabet="GHJKMNPQRSTUVWXYZ:", min_size=8, max_size=17),
        "connected": st.booleans(),
    }
)


@settings(max_examples=100, deadline=None)
@given(_raw_wifi)
def test_scrub_is_idempotent(raw):
    once = scrub(SourceKind.WIFI, raw, SALT)
    twice = scrub(SourceKind.WIFI, once, SALT)
    assert once == twice


@settings(max_examples=100, deadline=None)
@given(_canary_wifi)
def test_scrubbed_payload_never_retains_raw_values(raw):
    out = scrub(SourceKind.WIFI, raw, SALT)
    rendered = repr(out)
    assert raw["ssid"] not in rendered
    assert raw["bssid"] not in rendered
