"""Command line entry points.

    sensediary simulate trace  --seed 42 --days 7 --out trace.txt
    sensediary simulate replay --trace trace.txt --report report.json
    sensediary simulate study  --users 50 --days 28 --threshold 0.8 --seed 7
    sensediary status          --state-dir ~/.sensediary
    sensediary serve           --port 8040 --data-dir ./service-data
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

import click

from .acquisition import Pipeline
from .anonymize import load_or_create_salt
from .client import HttpServiceClient
from .config import PipelineConfig, load_config
from .diagnostics import Diagnostics
from .simulate import (
    SimConfig,
    generate_trace,
    make_study_service,
    read_trace,
    replay,
    run_study,
    write_trace,
)
from .store import EventLog


@click.group()
def main():
    """Privacy-preserving context telemetry, simulated at desk scale."""


@main.group()
def simulate():
    """Deterministic trace generation and pipeline experiments."""


@simulate.command("trace")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--days", type=int, default=7, show_default=True)
@click.option("--user", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def trace_cmd(seed: int, days: int, user: int, out: Path):
    """Generate a synthetic raw-sample trace."""
    config = SimConfig(seed=seed, days=days)
    events = generate_trace(config, user)
    write_trace(out, events)
    click.echo(f"wrote {len(events)} raw samples to {out}")


@simulate.command("replay")
@click.option("--trace", "trace_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Pipeline INI config; defaults apply when omitted.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--state-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Where the event log, salt and diagnostics live (default: temp dir).")
@click.option("--consent/--no-consent", default=True, show_default=True)
def replay_cmd(trace_path: Path, config_path, report_path, state_dir, consent: bool):
    """Drive the acquisition pipeline over a trace and measure reduction."""
    pipeline_config = load_config(config_path) if config_path else PipelineConfig()
    if state_dir is None:
        state_dir = Path(tempfile.mkdtemp(prefix="sensediary-replay-"))
    state_dir.mkdir(parents=True, exist_ok=True)
    diagnostics = Diagnostics(state_dir)
    salt = load_or_create_salt(state_dir / "salt.bin")
    log = EventLog(state_dir / "events.log", fsync=False, diagnostics=diagnostics)
    pipeline = Pipeline(pipeline_config, log, salt, device_id=f"cli-{state_dir.name}",
                        diagnostics=diagnostics)
    events = read_trace(trace_path)
    if consent and events:
        pipeline.accept_consent(events[0].timestamp)
    report = replay(events, pipeline)
    diagnostics.save()
    log.close()
    click.echo(report.to_table())
    if report_path:
        report_path.write_text(report.to_json_text())
        click.echo(f"report written to {report_path}")


@simulate.command("study")
@click.option("--users", type=int, default=50, show_default=True)
@click.option("--days", type=int, default=28, show_default=True)
@click.option("--threshold", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--completion-prob", "completion_probs", type=float, multiple=True,
              help="Completion probability; repeat to cycle mixed values across users.")
@click.option("--service-url", default=None,
              help="Drive a running service over HTTP instead of in-process.")
@click.option("--admin-key", default="change-me", show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--workdir", type=click.Path(file_okay=False, path_type=Path), default=None)
def study_cmd(users, days, threshold, seed, completion_probs, service_url, admin_key,
              report_path, workdir):
    """Run the whole study protocol for a population of virtual users."""
    config = SimConfig.for_study(
        seed=seed,
        users=users,
        days=days,
        threshold=threshold,
        completion_probabilities=tuple(completion_probs) or (1.0,),
    )
    if workdir is None:
        workdir = Path(tempfile.mkdtemp(prefix="sensediary-study-"))
    if service_url:
        client = HttpServiceClient(service_url, admin_key=admin_key)
    else:
        _service, client = make_study_service(config)
    report = run_study(config, client, workdir)
    click.echo(report.to_table())
    if report_path:
        report_path.write_text(report.to_json_text())
        click.echo(f"report written to {report_path}")


@main.command()
@click.option("--state-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
def status(state_dir: Path):
    """Show diagnostics counters and recent audit lines."""
    diagnostics = Diagnostics(state_dir)
    click.echo(diagnostics.as_table())
    audit = diagnostics.audit_path
    if audit is not None and audit.exists():
        lines = audit.read_text(encoding="utf-8").splitlines()
        if lines:
            click.echo("\nrecent audit lines:")
            for line in lines[-10:]:
                click.echo(f"  {line}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8040, show_default=True)
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--admin-key", default="change-me", show_default=True)
def serve(host: str, port: int, data_dir: Path, admin_key: str):
    """Run the study service over HTTP (for the web client or remote sims)."""
    import uvicorn

    from .httpapi import create_app
    from .questionnaire import sample_questionnaire
    from .service import NonePublishedError, StudyService

    service = StudyService(data_dir=data_dir, admin_key=admin_key)
    try:
        service.latest_questionnaire()
    except NonePublishedError:
        service.publish_questionnaire(sample_questionnaire())
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


if __name__ == "__main__":
    sys.exit(main())
