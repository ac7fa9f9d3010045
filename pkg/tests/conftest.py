from __future__ import annotations

import random
import string
from pathlib import Path

import pytest

from codetrail.events import (
    DiagnosticLevel,
    DiagnosticPayload,
    Event,
    EventKind,
    FileDiffPayload,
    FilePayload,
    FileSnapshotPayload,
    HeartbeatPayload,
    RunPayload,
    Timestamp,
    count_lines,
    make_event,
)
from codetrail.store import EventStore
from codetrail.textdiff import compute_diff

FIXTURES = Path(__file__).parent / "fixtures"

BASE_TS = Timestamp.parse("2025-03-01T10:00:00.000Z")


def ts(offset_seconds: float = 0) -> Timestamp:
    return Timestamp(BASE_TS.millis + int(offset_seconds * 1000))


def heartbeat(actor="alice", at=0.0, workspace="ws1", exercise=None) -> Event:
    return make_event(EventKind.HEARTBEAT, ts(at), actor, workspace, HeartbeatPayload(), exercise)


def snapshot(file, content, actor="alice", at=0.0, workspace="ws1", exercise=None) -> Event:
    return make_event(
        EventKind.FILE_SNAPSHOT,
        ts(at),
        actor,
        workspace,
        FileSnapshotPayload(file=file, content=content, line_count=count_lines(content)),
        exercise,
    )


def diff_event(file, base_event, old, new, actor="alice", at=0.0, workspace="ws1", exercise=None) -> Event:
    hunks = tuple(compute_diff(old, new))
    return make_event(
        EventKind.FILE_DIFF,
        ts(at),
        actor,
        workspace,
        FileDiffPayload(file=file, base_event_id=base_event.event_id, hunks=hunks),
        exercise,
    )


def save_event(file, actor="alice", at=0.0, workspace="ws1", exercise=None) -> Event:
    return make_event(EventKind.FILE_SAVE, ts(at), actor, workspace, FilePayload(file=file), exercise)


def diagnostic(
    message, level=DiagnosticLevel.ERROR, actor="alice", at=0.0, file="main.c",
    line=1, source="compiler", workspace="ws1", exercise=None,
) -> Event:
    return make_event(
        EventKind.DIAGNOSTIC,
        ts(at),
        actor,
        workspace,
        DiagnosticPayload(level=level, message=message, file=file, line=line, source=source),
        exercise,
    )


def run_event(kind, run_id, actor="alice", at=0.0, workspace="ws1", exercise=None) -> Event:
    return make_event(kind, ts(at), actor, workspace, RunPayload(run_id=run_id), exercise)


def ingest_events(store: EventStore, events, received=None):
    lines = [e.canonical_bytes() for e in events]
    return store.ingest_batch(lines, received_ts=received)


def random_text(rng: random.Random, max_lines: int = 20) -> str:
    lines = [
        "".join(rng.choices(string.ascii_lowercase + "  ", k=rng.randint(0, 12)))
        for _ in range(rng.randint(0, max_lines))
    ]
    text = "\n".join(lines)
    if lines and rng.random() < 0.7:
        text += "\n"
    return text


def random_edit(rng: random.Random, text: str) -> str:
    """One plausible edit: insert, delete, or replace a run of lines."""
    lines = text.split("\n")
    op = rng.choice(["insert", "delete", "replace"])
    pos = rng.randint(0, len(lines))
    fresh = ["".join(rng.choices(string.ascii_lowercase, k=rng.randint(0, 10)))
             for _ in range(rng.randint(1, 4))]
    if op == "insert" or not lines:
        lines[pos:pos] = fresh
    elif op == "delete":
        pos = rng.randint(0, len(lines) - 1)
        del lines[pos : pos + rng.randint(1, 3)]
    else:
        pos = rng.randint(0, len(lines) - 1)
        lines[pos : pos + rng.randint(1, 3)] = fresh
    return "\n".join(lines)


@pytest.fixture
def store(tmp_path):
    return EventStore(tmp_path / "store")
