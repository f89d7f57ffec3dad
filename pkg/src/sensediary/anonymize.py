"""Salted one-way digests for everything that could identify someone.

A single 16-byte salt is generated at first launch, persisted locally,
and never transmitted. Every identifying value (the installation id,
wifi SSIDs, bluetooth addresses, call peers, track/artist names, app
packages) is replaced by sha256(salt || value) before it reaches the
local log or the wire. Equal values under the same salt map to equal
digests, so repeated sightings stay correlatable without the raw value
ever being stored.
"""

from __future__ import annotations

import hashlib
import os
import secrets
from pathlib import Path

from .events import RAW_IDENTIFIER_KEYS, PAYLOAD_SCHEMAS, SourceKind

SALT_LENGTH = 16
DIGEST_HEX_LENGTH = 64


class EmptyValueError(ValueError):
    """pseudonymize() requires a non-empty input value."""


class UnknownFieldError(ValueError):
    """scrub() met a payload key that is neither raw nor in the schema."""


def generate_salt(randbytes=None) -> bytes:
    """Fresh 16-byte salt. ``randbytes`` (e.g. random.Random().randbytes)
    overrides the CSPRNG for deterministic simulations only."""
    if randbytes is not None:
        salt = randbytes(SALT_LENGTH)
    else:
        salt = secrets.token_bytes(SALT_LENGTH)
    if len(salt) != SALT_LENGTH:
        raise ValueError(f"salt must be {SALT_LENGTH} bytes")
    return salt


def load_or_create_salt(path: Path) -> bytes:
    """Load the installation salt, creating it on first launch.

    The file is owner-only where the platform supports permission bits.
    """
    path = Path(path)
    if path.exists():
        salt = path.read_bytes()
        if len(salt) != SALT_LENGTH:
            raise ValueError(f"corrupt salt file {path}: {len(salt)} bytes")
        return salt
    salt = generate_salt()
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    try:
        os.write(fd, salt)
    finally:
        os.close(fd)
    return salt


def pseudonymize(value: str, salt: bytes) -> str:
    """Deterministic one-way digest of an identifying value.

    Returns 64 lowercase hex chars. There is deliberately no inverse
    anywhere in this codebase.
    """
    if not isinstance(value, str) or value == "":
        raise EmptyValueError("cannot pseudonymize an empty value")
    if len(salt) != SALT_LENGTH:
        raise ValueError(f"salt must be {SALT_LENGTH} bytes")
    return hashlib.sha256(salt + value.encode("utf-8")).hexdigest()


def scrub(source: SourceKind, payload: dict, salt: bytes) -> dict:
    """Replace every identifying field with its digest; pass the rest through.

    Idempotent: digest keys are schema keys, so scrubbing a scrubbed
    payload changes nothing. The raw value is not retained anywhere.
    """
    raw_map = RAW_IDENTIFIER_KEYS.get(source, {})
    allowed = {spec.name for spec in PAYLOAD_SCHEMAS[source]}
    out = {}
    for key, value in payload.items():
        if key in raw_map:
            out[raw_map[key]] = pseudonymize(str(value), salt)
        elif key in allowed:
            out[key] = value
        else:
            raise UnknownFieldError(f"unknown field {key!r} for source {source.value}")
    return out
