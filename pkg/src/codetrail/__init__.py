"""codetrail: capture, store, and analyze incremental code-development telemetry."""

from .events import (
    DiagnosticLevel,
    DiagnosticPayload,
    Event,
    EventKind,
    FileDiffPayload,
    FilePayload,
    FileSnapshotPayload,
    HeartbeatPayload,
    Hunk,
    RunPayload,
    StoredEvent,
    SubmissionPayload,
    Timestamp,
    canonicalize,
    compute_event_id,
    event_from_dict,
    event_from_json,
    make_event,
    validate,
)
from .store import EventFilter, EventStore, IngestReceipt
from .textdiff import apply_diff, compute_diff

__version__ = "0.1.0"

__all__ = [
    "DiagnosticLevel",
    "DiagnosticPayload",
    "Event",
    "EventFilter",
    "EventKind",
    "EventStore",
    "FileDiffPayload",
    "FilePayload",
    "FileSnapshotPayload",
    "HeartbeatPayload",
    "Hunk",
    "IngestReceipt",
    "RunPayload",
    "StoredEvent",
    "SubmissionPayload",
    "Timestamp",
    "apply_diff",
    "canonicalize",
    "compute_diff",
    "compute_event_id",
    "event_from_dict",
    "event_from_json",
    "make_event",
    "validate",
]
