"""Operational counters and the plain-text audit trail.

Counters are plain name -> int, persisted as JSON so the CLI ``status``
command can show them. Audit lines (e.g. purges) go to a separate text
file and never contain event content.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path


class Diagnostics:
    def __init__(self, state_dir: Path | None = None):
        self.state_dir = Path(state_dir) if state_dir is not None else None
        self.counters: dict[str, int] = {}
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            if self._counters_path.exists():
                self.counters.update(json.loads(self._counters_path.read_text()))

    @property
    def _counters_path(self) -> Path:
        return self.state_dir / "diagnostics.json"

    @property
    def audit_path(self) -> Path | None:
        if self.state_dir is None:
            return None
        return self.state_dir / "audit.log"

    def increment(self, name: str, by: int = 1) -> None:
        self.counters[name] = self.counters.get(name, 0) + by

    def audit(self, line: str, timestamp_ms: int | None = None) -> None:
        if timestamp_ms is None:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        else:
            stamp = datetime.fromtimestamp(timestamp_ms / 1000, timezone.utc).isoformat(
                timespec="seconds"
            )
        if self.audit_path is not None:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(f"{stamp} {line}\n")

    def save(self) -> None:
        if self.state_dir is not None:
            self._counters_path.write_text(json.dumps(self.counters, indent=2, sort_keys=True))

    def as_table(self) -> str:
        if not self.counters:
            return "(no counters recorded)"
        width = max(len(k) for k in self.counters)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in sorted(self.counters.items()))
