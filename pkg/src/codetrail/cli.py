"""codetrail CLI: one binary wiring agent, server, analytics, integrity, export.

Exit codes: 0 success, 1 domain error (bad store, unknown exercise, ...),
2 usage error (click's default for bad flags).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import agent as agent_mod
from . import analytics, integrity
from .agent import HttpTransport, Spool, WatchConfig, Watcher
from .events import EventKind, Timestamp
from .exporting import DirtyStore, export as export_store
from .server import DEFAULT_MAX_BODY_BYTES, load_roster, make_server
from .store import EventFilter, EventStore, StoreError


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _print_json(obj) -> None:
    click.echo(json.dumps(obj, sort_keys=True, indent=2))


def _open_store(data_dir: str) -> EventStore:
    try:
        return EventStore(data_dir)
    except Exception as exc:
        _fail(f"cannot open store at {data_dir}: {exc}")


@click.group()
def main() -> None:
    """Telemetry pipeline for programming education."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--once", is_flag=True, help="Run a single poll + flush pass and exit.")
def watch(config_path: str, once: bool) -> None:
    """Watch a workspace and deliver capture events to the server."""
    import os

    try:
        config = WatchConfig.load(config_path)
    except ValueError as exc:
        _fail(str(exc))
    token = os.environ.get("CODETRAIL_TOKEN", config.auth_token)
    spool = Spool(config.spool_dir)
    try:
        watcher = Watcher(config, spool)
    except agent_mod.WorkspaceUnreadable as exc:
        _fail(str(exc))
    transport = HttpTransport(config.server_url, token)
    if once:
        events = watcher.poll_once()
        try:
            receipt = agent_mod.flush(spool, transport)
        except agent_mod.AgentError as exc:
            _fail(str(exc))
        _print_json({"captured": len(events), "sent": receipt.sent, "acked": receipt.acked})
        return
    watcher.run(transport=transport)


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--listen", default="127.0.0.1:8876", show_default=True)
@click.option("--roster", "roster_path", required=True, type=click.Path(exists=True))
@click.option("--max-body-bytes", default=DEFAULT_MAX_BODY_BYTES, show_default=True)
def serve(data_dir: str, listen: str, roster_path: str, max_body_bytes: int) -> None:
    """Run the ingest server."""
    host, _, port = listen.partition(":")
    store = _open_store(data_dir)
    roster = load_roster(roster_path)
    server = make_server(store, roster, host=host, port=int(port or 0), max_body_bytes=max_body_bytes)
    click.echo(f"listening on {server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


def _scoped_events(store: EventStore, **kwargs) -> list:
    return list(store.scan(EventFilter(**kwargs)))


@main.group()
def report() -> None:
    """Analytics reports over a store."""


@report.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--actor", required=True)
@click.option("--exercise", required=True)
@click.option("--gap-seconds", default=analytics.DEFAULT_GAP_SECONDS, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def student(data_dir: str, actor: str, exercise: str, gap_seconds: int, as_json: bool) -> None:
    """Per-student progress metrics for one exercise."""
    store = _open_store(data_dir)
    events = _scoped_events(store, actor_id=actor, exercise_id=exercise)
    if not events:
        _fail(f"no events for actor {actor!r} on exercise {exercise!r}")
    metrics = analytics.compute_metrics(events, gap_seconds=gap_seconds)
    sessions = analytics.sessionize(events, gap_seconds=gap_seconds)
    if as_json:
        _print_json({"metrics": metrics.to_dict(), "sessions": [s.to_dict() for s in sessions]})
        return
    m = metrics.to_dict()
    click.echo(f"student report: {actor} / {exercise}")
    for key in sorted(m):
        click.echo(f"  {key:36} {m[key]}")
    click.echo(f"  {'sessions':36} {len(sessions)}")


@report.command(name="class")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--exercise", required=True)
@click.option("--top", default=10, show_default=True)
@click.option("--gap-seconds", default=analytics.DEFAULT_GAP_SECONDS, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def class_(data_dir: str, exercise: str, top: int, gap_seconds: int, as_json: bool) -> None:
    """Whole-class report for one exercise."""
    store = _open_store(data_dir)
    events = list(store.scan())
    if not any(se.event.exercise_id == exercise for se in events):
        _fail(f"no events for exercise {exercise!r}")
    rep = analytics.class_report(events, exercise, top_n=top, gap_seconds=gap_seconds)
    if as_json:
        _print_json(rep.to_dict())
        return
    click.echo(f"class report: {exercise} ({len(rep.per_actor)} students)")
    click.echo(f"  active_seconds quartiles: {rep.active_seconds_quartiles}")
    click.echo(f"  churn quartiles:          {rep.churn_quartiles}")
    click.echo("  top error messages:")
    for msg, count in rep.top_error_messages:
        click.echo(f"    {count:5d}  {msg}")


@main.command(name="integrity")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--exercise", required=True)
@click.option("--sim", default=integrity.DEFAULT_SIM_THRESHOLD, show_default=True)
@click.option("--coupling", default=integrity.DEFAULT_COUPLING_THRESHOLD, show_default=True)
@click.option("--window-seconds", default=integrity.DEFAULT_COUPLING_WINDOW_SECONDS, show_default=True)
@click.option("--profile", default="c_like", show_default=True)
@click.option("--json", "as_json", is_flag=True)
def integrity_cmd(
    data_dir: str,
    exercise: str,
    sim: float,
    coupling: float,
    window_seconds: int,
    profile: str,
    as_json: bool,
) -> None:
    """Rank student pairs by plagiarism signals (advisory, for human review)."""
    store = _open_store(data_dir)
    try:
        rep = integrity.integrity_report(
            store,
            exercise,
            sim_threshold=sim,
            coupling_threshold=coupling,
            window_seconds=window_seconds,
            profile=profile,
        )
    except integrity.IntegrityError as exc:
        _fail(str(exc))
    if as_json:
        _print_json(rep.to_dict())
        return
    click.echo(f"integrity signals: {exercise} (for human review, not a verdict)")
    for p in rep.pairs:
        flag = "FLAG" if p.flagged else "    "
        click.echo(
            f"  {flag} {p.actor_a} ~ {p.actor_b}"
            f"  sim={p.content_similarity:.3f} coupling={p.temporal_coupling:.3f}"
        )
    for note in rep.skipped:
        click.echo(f"  skipped {note}")


@main.command(name="export")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--salt", required=True)
@click.option("--actor", default=None)
@click.option("--exercise", default=None)
def export_cmd(data_dir: str, out_dir: str, salt: str, actor: str | None, exercise: str | None) -> None:
    """Write a pseudonymized dataset bundle."""
    store = _open_store(data_dir)
    flt = EventFilter(actor_id=actor, exercise_id=exercise)
    try:
        bundle = export_store(store, flt, salt)
    except DirtyStore as exc:
        _fail(str(exc))
    bundle.write(out_dir)
    _print_json(bundle.manifest)


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def verify(data_dir: str, as_json: bool) -> None:
    """Audit store integrity: footers, event ids, sequence continuity."""
    store = _open_store(data_dir)
    rep = store.verify()
    if as_json:
        _print_json(rep.to_dict())
    else:
        d = rep.to_dict()
        for key in sorted(d):
            click.echo(f"  {key:18} {d[key]}")
    if not rep.clean:
        sys.exit(1)


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--actor", required=True)
@click.option("--workspace", required=True)
@click.option("--file", "file_path", required=True)
@click.option("--at-seq", type=int, default=None, help="Replay point; defaults to the log head.")
def replay(data_dir: str, actor: str, workspace: str, file_path: str, at_seq: int | None) -> None:
    """Reconstruct a file's text at a point in the log and print it."""
    store = _open_store(data_dir)
    try:
        text = store.reconstruct_file(actor, workspace, file_path, at_seq)
    except StoreError as exc:
        _fail(str(exc))
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
