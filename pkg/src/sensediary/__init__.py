"""Privacy-preserving context telemetry at desk scale.

A sensing pipeline (hysteresis-quantized light, step-gated accelerometer,
hour-bucketed app usage), an append-only pseudonymous event log, batched
at-least-once sync, a study backend whose participant registry is
structurally unlinkable from the telemetry, a questionnaire engine, and a
deterministic simulator that drives all of it end to end.
"""

from .anonymize import load_or_create_salt, pseudonymize, scrub
from .events import (
    ContextSnapshot,
    EventRecord,
    SourceKind,
    canonical_decode,
    canonical_encode,
    validate_event,
)

__version__ = "0.1.0"

__all__ = [
    "ContextSnapshot",
    "EventRecord",
    "SourceKind",
    "canonical_decode",
    "canonical_encode",
    "load_or_create_salt",
    "pseudonymize",
    "scrub",
    "validate_event",
    "__version__",
]
