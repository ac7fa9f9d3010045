"""Append-only, insert-only event store: segmented NDJSON with hash footers.

The store is a directory of segment files. Each segment holds contiguous
sequence numbers as NDJSON lines of StoredEvent; when a segment reaches its
size limit it is sealed by appending a footer line carrying the SHA-256 of
every prior byte in the file, and a new segment is started. Sealed segments
are immutable.

Deduplication is by event_id (content hash): re-ingesting anything already
stored is a no-op reported as a duplicate. There is deliberately no update or
delete operation at any interface.

Appends are serialized through a single writer lock so sequence assignment is
race-free; reads may run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .events import (
    Event,
    EventKind,
    FileDiffPayload,
    FileSnapshotPayload,
    StoredEvent,
    Timestamp,
    Violation,
    event_from_json,
    validate,
)
from .textdiff import apply_diff

_SEGMENT_RE = re.compile(r"^seg-(\d{10})\.ndjson$")
_FOOTER_KEY = "segment_footer"

DEFAULT_SEGMENT_MAX_EVENTS = 1000


class StoreError(Exception):
    pass


class CorruptSegment(StoreError):
    def __init__(self, segment: str, detail: str):
        super().__init__(f"{segment}: {detail}")
        self.segment = segment
        self.detail = detail


class NoSuchFile(StoreError):
    pass


class BrokenChain(StoreError):
    def __init__(self, event_id: str, detail: str):
        super().__init__(f"broken event chain at {event_id}: {detail}")
        self.event_id = event_id


@dataclass(frozen=True)
class EventFilter:
    """Conjunctive predicate over stored events; time/seq ranges are half-open."""

    actor_id: str | None = None
    workspace_id: str | None = None
    exercise_id: str | None = None
    kinds: frozenset[EventKind] | None = None
    ts_from: Timestamp | None = None
    ts_to: Timestamp | None = None
    seq_from: int | None = None
    seq_to: int | None = None

    def matches(self, se: StoredEvent) -> bool:
        e = se.event
        if self.actor_id is not None and e.actor_id != self.actor_id:
            return False
        if self.workspace_id is not None and e.workspace_id != self.workspace_id:
            return False
        if self.exercise_id is not None and e.exercise_id != self.exercise_id:
            return False
        if self.kinds is not None and e.kind not in self.kinds:
            return False
        if self.ts_from is not None and e.client_ts < self.ts_from:
            return False
        if self.ts_to is not None and not (e.client_ts < self.ts_to):
            return False
        if self.seq_from is not None and se.seq < self.seq_from:
            return False
        if self.seq_to is not None and not (se.seq < self.seq_to):
            return False
        return True


@dataclass
class IngestReceipt:
    """Partition of a submitted batch: every line lands in exactly one list."""

    accepted: list[tuple[str, int]] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (event_id or line-N, violation)

    def to_dict(self) -> dict:
        return {
            "accepted": [{"event_id": i, "seq": s} for i, s in self.accepted],
            "duplicates": list(self.duplicates),
            "rejected": [{"ref": r, "violation": v} for r, v in self.rejected],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IngestReceipt":
        return cls(
            accepted=[(a["event_id"], int(a["seq"])) for a in d.get("accepted", [])],
            duplicates=list(d.get("duplicates", [])),
            rejected=[(r["ref"], r["violation"]) for r in d.get("rejected", [])],
        )


@dataclass
class VerifyReport:
    event_count: int = 0
    segment_count: int = 0
    corrupt_segments: list[str] = field(default_factory=list)
    id_mismatches: list[str] = field(default_factory=list)  # event_ids
    seq_problems: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.corrupt_segments or self.id_mismatches or self.seq_problems)

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "event_count": self.event_count,
            "segment_count": self.segment_count,
            "corrupt_segments": self.corrupt_segments,
            "id_mismatches": self.id_mismatches,
            "seq_problems": self.seq_problems,
        }


def _segment_name(first_seq: int) -> str:
    return f"seg-{first_seq:010d}.ndjson"


class EventStore:
    """Single-node append-only store over a data directory."""

    def __init__(self, data_dir: str | Path, segment_max_events: int = DEFAULT_SEGMENT_MAX_EVENTS):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.segment_max_events = segment_max_events
        self._write_lock = threading.Lock()
        self._index: dict[str, int] = {}  # event_id -> seq
        self._last_seq = 0
        self._last_received = Timestamp(0)
        self._active_path: Path | None = None
        self._active_count = 0
        self._recover()

    # -- startup --------------------------------------------------------

    def _segment_paths(self) -> list[Path]:
        paths = [p for p in self.data_dir.iterdir() if _SEGMENT_RE.match(p.name)]
        return sorted(paths)

    def _recover(self) -> None:
        """Rebuild the in-memory id index by scanning all segments."""
        for path in self._segment_paths():
            sealed = False
            count = 0
            for line in path.read_bytes().splitlines():
                if not line.strip():
                    continue
                d = json.loads(line)
                if _FOOTER_KEY in d:
                    sealed = True
                    continue
                se = StoredEvent.from_dict(d)
                self._index[se.event.event_id] = se.seq
                self._last_seq = max(self._last_seq, se.seq)
                self._last_received = max(self._last_received, se.received_ts)
                count += 1
            if not sealed:
                self._active_path = path
                self._active_count = count
        if self._active_path is None and self._segment_paths():
            # All segments sealed: next append starts a fresh one.
            self._active_count = 0

    # -- writing --------------------------------------------------------

    def _seal_active(self) -> None:
        assert self._active_path is not None
        data = self._active_path.read_bytes()
        footer = {_FOOTER_KEY: {"sha256": hashlib.sha256(data).hexdigest()}}
        with open(self._active_path, "ab") as f:
            f.write(json.dumps(footer, sort_keys=True, separators=(",", ":")).encode() + b"\n")
            f.flush()
            os.fsync(f.fileno())
        self._active_path = None
        self._active_count = 0

    def _append_locked(self, event: Event, received_ts: Timestamp) -> StoredEvent:
        if self._active_path is None:
            self._active_path = self.data_dir / _segment_name(self._last_seq + 1)
            self._active_path.touch()
            self._active_count = 0
        seq = self._last_seq + 1
        se = StoredEvent(event=event, seq=seq, received_ts=received_ts)
        with open(self._active_path, "ab") as f:
            f.write(se.to_json_line() + b"\n")
            f.flush()
            os.fsync(f.fileno())
        self._last_seq = seq
        self._last_received = received_ts
        self._index[event.event_id] = seq
        self._active_count += 1
        if self._active_count >= self.segment_max_events:
            self._seal_active()
        return se

    def ingest_batch(
        self,
        lines: list[bytes] | list[str],
        received_ts: Timestamp | None = None,
        crash_hook: Callable[[int], None] | None = None,
    ) -> IngestReceipt:
        """Validate, dedup, and durably append a batch of event JSON lines.

        Invalid lines are rejected individually; the rest of the batch goes
        through. Previously seen event_ids are reported as duplicates and not
        re-appended. crash_hook, when given, is called with the count of
        events appended so far (fault-injection seam for durability tests).
        """
        ts = received_ts or Timestamp.now()
        if ts < self._last_received:
            ts = self._last_received  # received_ts never regresses
        receipt = IngestReceipt()
        with self._write_lock:
            appended = 0
            for i, raw in enumerate(lines, start=1):
                text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
                if not text.strip():
                    continue
                try:
                    event = event_from_json(text)
                except Exception as exc:
                    receipt.rejected.append((f"line-{i}", f"Malformed: {exc}"))
                    continue
                violations = validate(event)
                if violations:
                    receipt.rejected.append((event.event_id, violations[0].code))
                    continue
                if event.event_id in self._index:
                    receipt.duplicates.append(event.event_id)
                    continue
                se = self._append_locked(event, ts)
                appended += 1
                if crash_hook is not None:
                    crash_hook(appended)
                receipt.accepted.append((event.event_id, se.seq))
        return receipt

    # -- reading --------------------------------------------------------

    @property
    def max_seq(self) -> int:
        return self._last_seq

    def __len__(self) -> int:
        return len(self._index)

    def _read_segment(self, path: Path, verify_footer: bool) -> list[StoredEvent]:
        data = path.read_bytes()
        events: list[StoredEvent] = []
        body = bytearray()
        footer_hash: str | None = None
        for line in data.splitlines(keepends=True):
            stripped = line.strip()
            if not stripped:
                body += line
                continue
            d = json.loads(stripped)
            if _FOOTER_KEY in d:
                footer_hash = d[_FOOTER_KEY]["sha256"]
                break
            body += line
            events.append(StoredEvent.from_dict(d))
        if verify_footer and footer_hash is not None:
            actual = hashlib.sha256(bytes(body)).hexdigest()
            if actual != footer_hash:
                raise CorruptSegment(path.name, f"footer {footer_hash} != recomputed {actual}")
        return events

    def scan(
        self, flt: EventFilter | None = None, corrupt_out: list[str] | None = None
    ) -> Iterator[StoredEvent]:
        """Yield matching stored events in ascending seq order.

        Footer-corrupt segments are skipped; their names go to corrupt_out if
        given, otherwise CorruptSegment is raised after noting the segment.
        """
        flt = flt or EventFilter()
        for path in self._segment_paths():
            try:
                events = self._read_segment(path, verify_footer=True)
            except CorruptSegment:
                if corrupt_out is not None:
                    corrupt_out.append(path.name)
                    continue
                raise
            for se in events:
                if flt.matches(se):
                    yield se

    def reconstruct_file(
        self, actor_id: str, workspace_id: str, file: str, at_seq: int | None = None
    ) -> str:
        """Replay a file's snapshot/diff chain to its text at a point in the log."""
        if at_seq is None:
            at_seq = self.max_seq
        flt = EventFilter(
            actor_id=actor_id,
            workspace_id=workspace_id,
            kinds=frozenset({EventKind.FILE_SNAPSHOT, EventKind.FILE_DIFF}),
            seq_to=at_seq + 1,
        )
        chain: list[StoredEvent] = [
            se for se in self.scan(flt) if se.event.payload.file == file  # type: ignore[union-attr]
        ]
        snap_idx = None
        for i in range(len(chain) - 1, -1, -1):
            if chain[i].event.kind is EventKind.FILE_SNAPSHOT:
                snap_idx = i
                break
        if snap_idx is None:
            raise NoSuchFile(f"no snapshot for {file!r} at or before seq {at_seq}")
        payload = chain[snap_idx].event.payload
        assert isinstance(payload, FileSnapshotPayload)
        text = payload.content
        for se in chain[snap_idx + 1 :]:
            diff = se.event.payload
            assert isinstance(diff, FileDiffPayload)
            try:
                text = apply_diff(text, diff.hunks)
            except Exception as exc:
                raise BrokenChain(se.event.event_id, str(exc)) from exc
        return text

    def verify(self) -> VerifyReport:
        """Recompute every footer and event_id; check seqs are gap-free and increasing."""
        report = VerifyReport()
        seqs: list[int] = []
        for path in self._segment_paths():
            report.segment_count += 1
            try:
                events = self._read_segment(path, verify_footer=True)
            except CorruptSegment as exc:
                report.corrupt_segments.append(exc.segment)
                events = self._read_segment(path, verify_footer=False)
            for se in events:
                report.event_count += 1
                seqs.append(se.seq)
                if validate(se.event):
                    report.id_mismatches.append(se.event.event_id)
        for prev, cur in zip(seqs, seqs[1:]):
            if cur != prev + 1:
                report.seq_problems.append(f"gap: seq jumps {prev} -> {cur}")
        if seqs and seqs[0] != 1:
            report.seq_problems.append(f"gap: first seq is {seqs[0]}, expected 1")
        return report
