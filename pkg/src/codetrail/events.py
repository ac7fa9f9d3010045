"""Canonical event schema: types, validation, canonical serialization, content hashing.

Every record in the system is an Event: a time-stamped, content-addressed
description of one development action (a file snapshot, an edit delta, a
diagnostic, a run, ...). The event_id is the SHA-256 of the event's canonical
JSON bytes with the event_id field itself excluded, which makes deduplication
a pure set operation and golden tests bit-exact.

Canonical form: UTF-8 JSON, keys sorted at every depth, no insignificant
whitespace, timestamps rendered RFC 3339 with exactly three fractional digits.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any

SCHEMA_VERSION = 1

_ACTOR_ID_RE = re.compile(r"^[a-z0-9_-]{1,64}$")
_EVENT_ID_RE = re.compile(r"^[0-9a-f]{64}$")
_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{3})Z$")


class EventError(Exception):
    """Base class for event-model errors."""


class NonCanonicalizable(EventError):
    """Raised when an event cannot be rendered to canonical bytes."""


class PatchMismatch(EventError):
    """A hunk's deleted lines disagree with the base text: broken event chain."""


@dataclass(frozen=True, order=True)
class Timestamp:
    """UTC wall-clock instant at millisecond precision.

    Canonical text form is RFC 3339 with exactly three fractional digits,
    e.g. ``2025-03-01T14:05:09.123Z``; parse/render round-trips byte-exactly.
    """

    millis: int

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        m = _TS_RE.match(text)
        if not m:
            raise ValueError(f"not a canonical RFC 3339 timestamp: {text!r}")
        y, mo, d, h, mi, s, ms = (int(g) for g in m.groups())
        dt = datetime(y, mo, d, h, mi, s, tzinfo=timezone.utc)
        return cls(int(dt.timestamp()) * 1000 + ms)

    @classmethod
    def now(cls) -> "Timestamp":
        return cls(int(datetime.now(timezone.utc).timestamp() * 1000))

    def render(self) -> str:
        dt = datetime.fromtimestamp(self.millis // 1000, tz=timezone.utc)
        return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{self.millis % 1000:03d}Z"

    @property
    def seconds(self) -> float:
        return self.millis / 1000.0

    def __str__(self) -> str:
        return self.render()


class EventKind(str, Enum):
    FILE_OPEN = "FileOpen"
    FILE_SNAPSHOT = "FileSnapshot"
    FILE_DIFF = "FileDiff"
    FILE_SAVE = "FileSave"
    DIAGNOSTIC = "Diagnostic"
    RUN_START = "RunStart"
    RUN_END = "RunEnd"
    SUBMISSION = "Submission"
    HEARTBEAT = "Heartbeat"


class DiagnosticLevel(str, Enum):
    ERROR = "Error"
    WARNING = "Warning"
    INFO = "Info"
    DEBUG = "Debug"

    @property
    def severity(self) -> int:
        return {"Error": 3, "Warning": 2, "Info": 1, "Debug": 0}[self.value]


@dataclass(frozen=True)
class Hunk:
    """One contiguous edit: at base line ``start_line`` remove ``deleted``, insert ``inserted``."""

    start_line: int
    deleted: tuple[str, ...]
    inserted: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "start_line": self.start_line,
            "deleted": list(self.deleted),
            "inserted": list(self.inserted),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Hunk":
        return cls(int(d["start_line"]), tuple(d["deleted"]), tuple(d["inserted"]))


@dataclass(frozen=True)
class FilePayload:
    """Payload for FileOpen / FileSave."""

    file: str

    def to_dict(self) -> dict[str, Any]:
        return {"file": self.file}


@dataclass(frozen=True)
class FileSnapshotPayload:
    file: str
    content: str
    line_count: int

    def to_dict(self) -> dict[str, Any]:
        return {"file": self.file, "content": self.content, "line_count": self.line_count}


@dataclass(frozen=True)
class FileDiffPayload:
    file: str
    base_event_id: str
    hunks: tuple[Hunk, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "file": self.file,
            "base_event_id": self.base_event_id,
            "hunks": [h.to_dict() for h in self.hunks],
        }


@dataclass(frozen=True)
class DiagnosticPayload:
    level: DiagnosticLevel
    message: str
    file: str
    source: str
    line: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "level": self.level.value,
            "message": self.message,
            "file": self.file,
            "source": self.source,
        }
        if self.line is not None:
            d["line"] = self.line
        return d


@dataclass(frozen=True)
class RunPayload:
    """Payload for RunStart / RunEnd; run_id ties the pair together."""

    run_id: str
    exit_code: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"run_id": self.run_id}
        if self.exit_code is not None:
            d["exit_code"] = self.exit_code
        return d


@dataclass(frozen=True)
class SubmissionPayload:
    file: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"file": self.file} if self.file is not None else {}


@dataclass(frozen=True)
class HeartbeatPayload:
    def to_dict(self) -> dict[str, Any]:
        return {}


Payload = (
    FilePayload
    | FileSnapshotPayload
    | FileDiffPayload
    | DiagnosticPayload
    | RunPayload
    | SubmissionPayload
    | HeartbeatPayload
)

_PAYLOAD_TYPES: dict[EventKind, type] = {
    EventKind.FILE_OPEN: FilePayload,
    EventKind.FILE_SNAPSHOT: FileSnapshotPayload,
    EventKind.FILE_DIFF: FileDiffPayload,
    EventKind.FILE_SAVE: FilePayload,
    EventKind.DIAGNOSTIC: DiagnosticPayload,
    EventKind.RUN_START: RunPayload,
    EventKind.RUN_END: RunPayload,
    EventKind.SUBMISSION: SubmissionPayload,
    EventKind.HEARTBEAT: HeartbeatPayload,
}


@dataclass(frozen=True)
class Event:
    event_id: str
    schema_version: int
    kind: EventKind
    client_ts: Timestamp
    actor_id: str
    workspace_id: str
    payload: Payload
    exercise_id: str | None = None

    def to_dict(self, include_id: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "schema_version": self.schema_version,
            "kind": self.kind.value,
            "client_ts": self.client_ts.render(),
            "actor_id": self.actor_id,
            "workspace_id": self.workspace_id,
            "payload": self.payload.to_dict(),
        }
        if self.exercise_id is not None:
            d["exercise_id"] = self.exercise_id
        if include_id:
            d["event_id"] = self.event_id
        return d

    def canonical_bytes(self) -> bytes:
        """Canonical JSON of the full event, event_id included."""
        return canonical_json(self.to_dict())


def canonical_json(obj: Any) -> bytes:
    """Render a JSON-representable object to canonical UTF-8 bytes.

    Keys sorted lexicographically at every depth, no insignificant whitespace,
    non-ASCII kept as raw UTF-8. Deterministic: same logical value, same bytes.
    """
    try:
        text = json.dumps(
            obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        )
        return text.encode("utf-8")
    except (TypeError, ValueError, UnicodeEncodeError) as exc:
        raise NonCanonicalizable(str(exc)) from exc


def canonicalize(event: Event) -> bytes:
    """Canonical bytes of an event with the event_id field excluded (the id preimage)."""
    return canonical_json(event.to_dict(include_id=False))


def compute_event_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def make_event(
    kind: EventKind,
    client_ts: Timestamp,
    actor_id: str,
    workspace_id: str,
    payload: Payload,
    exercise_id: str | None = None,
    schema_version: int = SCHEMA_VERSION,
) -> Event:
    """Construct an event with its content-addressed id filled in."""
    partial = Event(
        event_id="",
        schema_version=schema_version,
        kind=kind,
        client_ts=client_ts,
        actor_id=actor_id,
        workspace_id=workspace_id,
        payload=payload,
        exercise_id=exercise_id,
    )
    eid = compute_event_id(canonicalize(partial))
    return Event(
        event_id=eid,
        schema_version=schema_version,
        kind=kind,
        client_ts=client_ts,
        actor_id=actor_id,
        workspace_id=workspace_id,
        payload=payload,
        exercise_id=exercise_id,
    )


def _payload_from_dict(kind: EventKind, d: dict[str, Any]) -> Payload:
    if kind in (EventKind.FILE_OPEN, EventKind.FILE_SAVE):
        return FilePayload(file=d["file"])
    if kind is EventKind.FILE_SNAPSHOT:
        return FileSnapshotPayload(
            file=d["file"], content=d["content"], line_count=int(d["line_count"])
        )
    if kind is EventKind.FILE_DIFF:
        return FileDiffPayload(
            file=d["file"],
            base_event_id=d["base_event_id"],
            hunks=tuple(Hunk.from_dict(h) for h in d["hunks"]),
        )
    if kind is EventKind.DIAGNOSTIC:
        line = d.get("line")
        return DiagnosticPayload(
            level=DiagnosticLevel(d["level"]),
            message=d["message"],
            file=d["file"],
            source=d["source"],
            line=int(line) if line is not None else None,
        )
    if kind in (EventKind.RUN_START, EventKind.RUN_END):
        ec = d.get("exit_code")
        return RunPayload(run_id=d["run_id"], exit_code=int(ec) if ec is not None else None)
    if kind is EventKind.SUBMISSION:
        return SubmissionPayload(file=d.get("file"))
    return HeartbeatPayload()


def event_from_dict(d: dict[str, Any]) -> Event:
    """Parse an event from its JSON object form. Raises on structural problems."""
    try:
        kind = EventKind(d["kind"])
    except ValueError as exc:
        raise EventError(f"unknown event kind: {d.get('kind')!r}") from exc
    except KeyError as exc:
        raise EventError("missing field: kind") from exc
    try:
        return Event(
            event_id=d["event_id"],
            schema_version=int(d["schema_version"]),
            kind=kind,
            client_ts=Timestamp.parse(d["client_ts"]),
            actor_id=d["actor_id"],
            workspace_id=d["workspace_id"],
            payload=_payload_from_dict(kind, d["payload"]),
            exercise_id=d.get("exercise_id"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EventError(f"malformed event: {exc}") from exc


def event_from_json(line: str | bytes) -> Event:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventError(f"not JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise EventError("event JSON must be an object")
    return event_from_dict(d)


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


def _path_escapes(path: str) -> bool:
    return path.startswith("/") or ".." in path.split("/") or path == ""


def count_lines(text: str) -> int:
    """Number of lines in a text; a trailing newline does not open a new line."""
    return len(text.splitlines())


def validate(event: Event) -> list[Violation]:
    """Return every violated invariant; the event is valid iff the list is empty."""
    out: list[Violation] = []

    if not _EVENT_ID_RE.match(event.event_id):
        out.append(Violation("BadEventId", f"not a 64-char lowercase hex digest: {event.event_id!r}"))
    else:
        expected = compute_event_id(canonicalize(event))
        if event.event_id != expected:
            out.append(Violation("IdMismatch", f"event_id {event.event_id} != digest {expected}"))
    if event.schema_version != SCHEMA_VERSION:
        out.append(Violation("BadSchemaVersion", f"unsupported schema_version {event.schema_version}"))
    if not _ACTOR_ID_RE.match(event.actor_id):
        out.append(Violation("BadActorId", f"actor_id {event.actor_id!r} not in [a-z0-9_-]{{1,64}}"))
    if not event.workspace_id:
        out.append(Violation("EmptyWorkspaceId", "workspace_id must be non-empty"))

    expected_type = _PAYLOAD_TYPES[event.kind]
    if type(event.payload) is not expected_type:
        out.append(
            Violation(
                "KindPayloadMismatch",
                f"kind {event.kind.value} requires {expected_type.__name__}, "
                f"got {type(event.payload).__name__}",
            )
        )
        return out

    p = event.payload
    if isinstance(p, (FilePayload, FileSnapshotPayload, FileDiffPayload)):
        if _path_escapes(p.file):
            out.append(Violation("PathEscape", f"path not workspace-relative: {p.file!r}"))
    if isinstance(p, FileSnapshotPayload):
        if p.line_count != count_lines(p.content):
            out.append(
                Violation(
                    "LineCountMismatch",
                    f"line_count {p.line_count} != actual {count_lines(p.content)}",
                )
            )
    if isinstance(p, FileDiffPayload):
        if not _EVENT_ID_RE.match(p.base_event_id):
            out.append(Violation("BadBaseEventId", f"bad base_event_id {p.base_event_id!r}"))
        if not p.hunks:
            out.append(Violation("NoHunks", "FileDiff must carry at least one hunk"))
        prev_start = None
        prev_deleted = 0
        for h in p.hunks:
            if h.start_line < 1:
                out.append(Violation("BadHunkStart", f"start_line {h.start_line} < 1"))
            if not h.deleted and not h.inserted:
                out.append(Violation("EmptyHunk", "hunk deletes and inserts nothing"))
            if prev_start is not None:
                if h.start_line <= prev_start or h.start_line < prev_start + prev_deleted:
                    out.append(
                        Violation(
                            "OverlappingHunks",
                            f"hunk at {h.start_line} overlaps previous at {prev_start}",
                        )
                    )
            prev_start, prev_deleted = h.start_line, len(h.deleted)
    if isinstance(p, DiagnosticPayload):
        if not p.message:
            out.append(Violation("EmptyMessage", "diagnostic message must be non-empty"))
        if p.line is not None and p.line < 1:
            out.append(Violation("BadLine", f"line {p.line} < 1"))
        if _path_escapes(p.file):
            out.append(Violation("PathEscape", f"path not workspace-relative: {p.file!r}"))
    if isinstance(p, RunPayload) and not p.run_id:
        out.append(Violation("EmptyRunId", "run_id must be non-empty"))

    return out


@dataclass(frozen=True)
class StoredEvent:
    """Server-side record: the event plus its authoritative position in the log."""

    event: Event
    seq: int
    received_ts: Timestamp

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.event.to_dict(),
            "seq": self.seq,
            "received_ts": self.received_ts.render(),
        }

    def to_json_line(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StoredEvent":
        return cls(
            event=event_from_dict(d["event"]),
            seq=int(d["seq"]),
            received_ts=Timestamp.parse(d["received_ts"]),
        )

    @classmethod
    def from_json(cls, line: str | bytes) -> "StoredEvent":
        d = json.loads(line)
        return cls.from_dict(d)
