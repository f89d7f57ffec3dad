"""Pipeline configuration and its INI file format.

Defaults are pinned here: light segment boundaries 10/100/1000/10000 lux
(log-spaced dark/dim/indoor/bright/daylight bands), 10% hysteresis
margin, 60 s step-gate window, 15 min usage/traffic polls, 30 min
weather polls. See docs/formats.md for the file syntax.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .events import SourceKind

DEFAULT_LIGHT_BOUNDARIES = (10.0, 100.0, 1000.0, 10000.0)
DEFAULT_HYSTERESIS_MARGIN = 0.1
DEFAULT_STEP_WINDOW_MS = 60_000
DEFAULT_APP_USAGE_POLL_MS = 15 * 60_000
DEFAULT_APP_TRAFFIC_POLL_MS = 15 * 60_000
DEFAULT_WEATHER_POLL_MS = 30 * 60_000
DEFAULT_MAX_BATCH_EVENTS = 500


def _all_granted() -> dict[SourceKind, bool]:
    return {kind: True for kind in SourceKind}


@dataclass(frozen=True)
class PipelineConfig:
    light_boundaries: tuple[float, ...] = DEFAULT_LIGHT_BOUNDARIES
    hysteresis_margin: float = DEFAULT_HYSTERESIS_MARGIN
    step_window_ms: int = DEFAULT_STEP_WINDOW_MS
    app_usage_poll_ms: int = DEFAULT_APP_USAGE_POLL_MS
    app_traffic_poll_ms: int = DEFAULT_APP_TRAFFIC_POLL_MS
    weather_poll_ms: int = DEFAULT_WEATHER_POLL_MS
    max_batch_events: int = DEFAULT_MAX_BATCH_EVENTS
    permissions: Mapping[SourceKind, bool] = field(default_factory=_all_granted)

    def __post_init__(self):
        bounds = self.light_boundaries
        if not bounds or any(b <= 0 for b in bounds):
            raise ValueError("light boundaries must be positive")
        if any(a >= b for a, b in zip(bounds, bounds[1:])):
            raise ValueError("light boundaries must be strictly ascending")
        # margin 0 is the degenerate no-hysteresis mode, kept for comparisons
        if not (0.0 <= self.hysteresis_margin < 1.0):
            raise ValueError("hysteresis margin must be in [0, 1)")
        for name in ("step_window_ms", "app_usage_poll_ms", "app_traffic_poll_ms",
                     "weather_poll_ms", "max_batch_events"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def permitted(self, source: SourceKind) -> bool:
        return self.permissions.get(source, True)

    def without_hysteresis(self) -> "PipelineConfig":
        return replace(self, hysteresis_margin=0.0)


def load_config(path: Path) -> PipelineConfig:
    """Read a PipelineConfig from an INI file; missing keys keep defaults."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    kwargs = {}
    if parser.has_section("acquisition"):
        sec = parser["acquisition"]
        if "light_boundaries" in sec:
            kwargs["light_boundaries"] = tuple(float(tok) for tok in sec["light_boundaries"].split())
        if "hysteresis_margin" in sec:
            kwargs["hysteresis_margin"] = sec.getfloat("hysteresis_margin")
        if "step_window_s" in sec:
            kwargs["step_window_ms"] = int(sec.getfloat("step_window_s") * 1000)
        if "app_usage_poll_min" in sec:
            kwargs["app_usage_poll_ms"] = int(sec.getfloat("app_usage_poll_min") * 60_000)
        if "app_traffic_poll_min" in sec:
            kwargs["app_traffic_poll_ms"] = int(sec.getfloat("app_traffic_poll_min") * 60_000)
        if "weather_poll_min" in sec:
            kwargs["weather_poll_ms"] = int(sec.getfloat("weather_poll_min") * 60_000)
    if parser.has_section("sync"):
        sec = parser["sync"]
        if "max_batch_events" in sec:
            kwargs["max_batch_events"] = sec.getint("max_batch_events")
    if parser.has_section("permissions"):
        permissions = _all_granted()
        for key, raw in parser["permissions"].items():
            try:
                kind = SourceKind(key)
            except ValueError:
                raise ValueError(f"unknown source in [permissions]: {key}") from None
            permissions[kind] = raw.strip().lower() in ("1", "true", "yes", "on")
        kwargs["permissions"] = permissions
    return PipelineConfig(**kwargs)
