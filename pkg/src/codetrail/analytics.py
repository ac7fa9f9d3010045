"""Pedagogical analytics over the event log: sessions, metrics, class reports.

Everything here is a deterministic, read-only function of a seq-ordered list
of StoredEvent: same events in, byte-identical report out. Ordering always
follows seq (store time); session boundaries follow client_ts (human time),
so clock skew can move a boundary but never reorder events.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .events import (
    DiagnosticLevel,
    DiagnosticPayload,
    EventKind,
    FileDiffPayload,
    FileSnapshotPayload,
    RunPayload,
    StoredEvent,
)
from .textdiff import apply_diff

DEFAULT_GAP_SECONDS = 900
DEFAULT_ACTIVE_GAP_CAP_SECONDS = 120


class AnalyticsError(Exception):
    pass


class UnsortedInput(AnalyticsError):
    pass


class NoSuchRun(AnalyticsError):
    pass


@dataclass(frozen=True)
class Session:
    actor_id: str
    start_ts: str
    end_ts: str
    first_seq: int
    last_seq: int
    event_count: int
    files_touched: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "actor_id": self.actor_id,
            "start_ts": self.start_ts,
            "end_ts": self.end_ts,
            "first_seq": self.first_seq,
            "last_seq": self.last_seq,
            "event_count": self.event_count,
            "files_touched": sorted(self.files_touched),
        }


@dataclass
class MetricsReport:
    actor_id: str
    exercise_id: str | None
    churn_lines: int = 0
    net_lines: int = 0
    active_seconds: float = 0.0
    diagnostics_by_level: dict[str, int] = field(default_factory=dict)
    time_to_first_clean_run_seconds: float | None = None
    run_count: int = 0
    submission_count: int = 0

    def to_dict(self) -> dict:
        return {
            "actor_id": self.actor_id,
            "exercise_id": self.exercise_id,
            "churn_lines": self.churn_lines,
            "net_lines": self.net_lines,
            "active_seconds": self.active_seconds,
            "diagnostics_by_level": dict(sorted(self.diagnostics_by_level.items())),
            "time_to_first_clean_run_seconds": self.time_to_first_clean_run_seconds,
            "run_count": self.run_count,
            "submission_count": self.submission_count,
        }


@dataclass
class ClassReport:
    exercise_id: str
    per_actor: list[MetricsReport]
    top_error_messages: list[tuple[str, int]]
    active_seconds_quartiles: tuple[float, float, float] | None
    churn_quartiles: tuple[float, float, float] | None

    def to_dict(self) -> dict:
        return {
            "exercise_id": self.exercise_id,
            "per_actor": [m.to_dict() for m in self.per_actor],
            "top_error_messages": [
                {"message": m, "count": c} for m, c in self.top_error_messages
            ],
            "active_seconds_quartiles": list(self.active_seconds_quartiles)
            if self.active_seconds_quartiles
            else None,
            "churn_quartiles": list(self.churn_quartiles) if self.churn_quartiles else None,
        }


@dataclass(frozen=True)
class RunDelta:
    run_a: str
    run_b: str
    diagnostics_resolved: frozenset[str]
    diagnostics_introduced: frozenset[str]
    diagnostics_persisting: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "run_a": self.run_a,
            "run_b": self.run_b,
            "diagnostics_resolved": sorted(self.diagnostics_resolved),
            "diagnostics_introduced": sorted(self.diagnostics_introduced),
            "diagnostics_persisting": sorted(self.diagnostics_persisting),
        }


def _check_sorted(events: list[StoredEvent]) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.seq < prev.seq:
            raise UnsortedInput(f"events not seq-sorted at seq {cur.seq}")


def _touched_file(se: StoredEvent) -> str | None:
    p = se.event.payload
    return getattr(p, "file", None)


def sessionize(
    events: list[StoredEvent], gap_seconds: int = DEFAULT_GAP_SECONDS
) -> list[Session]:
    """Partition one actor's seq-ordered events into idle-gap sessions.

    A client_ts gap of exactly gap_seconds stays inside the session; only a
    strictly greater gap opens a new one.
    """
    _check_sorted(events)
    actors = {se.event.actor_id for se in events}
    if len(actors) > 1:
        raise UnsortedInput(f"events span multiple actors: {sorted(actors)}")
    sessions: list[Session] = []
    run: list[StoredEvent] = []

    def close(run: list[StoredEvent]) -> None:
        files = frozenset(f for se in run if (f := _touched_file(se)) is not None)
        sessions.append(
            Session(
                actor_id=run[0].event.actor_id,
                start_ts=run[0].event.client_ts.render(),
                end_ts=run[-1].event.client_ts.render(),
                first_seq=run[0].seq,
                last_seq=run[-1].seq,
                event_count=len(run),
                files_touched=files,
            )
        )

    for se in events:
        if run and (se.event.client_ts.seconds - run[-1].event.client_ts.seconds) > gap_seconds:
            close(run)
            run = []
        run.append(se)
    if run:
        close(run)
    return sessions


_QUOTED_RE = re.compile(r"""(['"`])(?:(?!\1).)*\1""")
_DIGITS_RE = re.compile(r"\d+")


def normalize_message(message: str) -> str:
    """Collapse instance-specific parts: quoted identifiers and digit runs."""
    msg = _QUOTED_RE.sub(lambda m: f"{m.group(1)}<id>{m.group(1)}", message)
    msg = msg.lower()
    return _DIGITS_RE.sub("#", msg)


def error_histogram(events: list[StoredEvent], top_n: int | None = None) -> list[tuple[str, int]]:
    """Error-level diagnostics bucketed by normalized message, ranked by count.

    Ties break lexicographically on the normalized message.
    """
    counts: dict[str, int] = {}
    for se in events:
        p = se.event.payload
        if se.event.kind is EventKind.DIAGNOSTIC and isinstance(p, DiagnosticPayload):
            if p.level is DiagnosticLevel.ERROR:
                key = normalize_message(p.message)
                counts[key] = counts.get(key, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_n] if top_n is not None else ranked


def _active_seconds(
    events: list[StoredEvent], gap_seconds: int, cap_seconds: int
) -> float:
    total = 0.0
    for sess_events in _session_event_groups(events, gap_seconds):
        for prev, cur in zip(sess_events, sess_events[1:]):
            gap = cur.event.client_ts.seconds - prev.event.client_ts.seconds
            total += min(gap, cap_seconds)
    return total


def _session_event_groups(
    events: list[StoredEvent], gap_seconds: int
) -> list[list[StoredEvent]]:
    groups: list[list[StoredEvent]] = []
    run: list[StoredEvent] = []
    for se in events:
        if run and (se.event.client_ts.seconds - run[-1].event.client_ts.seconds) > gap_seconds:
            groups.append(run)
            run = []
        run.append(se)
    if run:
        groups.append(run)
    return groups


def compute_metrics(
    events: list[StoredEvent],
    gap_seconds: int = DEFAULT_GAP_SECONDS,
    active_gap_cap_seconds: int = DEFAULT_ACTIVE_GAP_CAP_SECONDS,
) -> MetricsReport:
    """Progress metrics for one (actor, exercise) event slice."""
    _check_sorted(events)
    if not events:
        return MetricsReport(actor_id="", exercise_id=None)
    actor = events[0].event.actor_id
    exercise = events[0].event.exercise_id
    report = MetricsReport(actor_id=actor, exercise_id=exercise)

    first_counts: dict[str, int] = {}  # file -> line count at first snapshot
    texts: dict[str, str] = {}  # file -> replayed current text
    for se in events:
        e = se.event
        p = e.payload
        if e.kind is EventKind.FILE_SNAPSHOT and isinstance(p, FileSnapshotPayload):
            if p.file not in first_counts:
                first_counts[p.file] = p.line_count
            texts[p.file] = p.content
        elif e.kind is EventKind.FILE_DIFF and isinstance(p, FileDiffPayload):
            report.churn_lines += sum(len(h.deleted) + len(h.inserted) for h in p.hunks)
            if p.file in texts:
                texts[p.file] = apply_diff(texts[p.file], p.hunks)  # BrokenChain propagates
        elif e.kind is EventKind.DIAGNOSTIC and isinstance(p, DiagnosticPayload):
            level = p.level.value
            report.diagnostics_by_level[level] = report.diagnostics_by_level.get(level, 0) + 1
        elif e.kind is EventKind.RUN_START:
            report.run_count += 1
        elif e.kind is EventKind.SUBMISSION:
            report.submission_count += 1

    from .events import count_lines

    report.net_lines = sum(
        count_lines(texts[f]) - first_counts[f] for f in first_counts if f in texts
    )
    report.active_seconds = _active_seconds(events, gap_seconds, active_gap_cap_seconds)
    report.time_to_first_clean_run_seconds = _time_to_first_clean_run(events)
    return report


def _time_to_first_clean_run(events: list[StoredEvent]) -> float | None:
    if not events:
        return None
    start = events[0].event.client_ts.seconds
    run_open = False
    errors_in_run = 0
    for se in events:
        e = se.event
        if e.kind is EventKind.RUN_START:
            run_open = True
            errors_in_run = 0
        elif e.kind is EventKind.DIAGNOSTIC and run_open:
            p = e.payload
            if isinstance(p, DiagnosticPayload) and p.level is DiagnosticLevel.ERROR:
                errors_in_run += 1
        elif e.kind is EventKind.RUN_END and run_open:
            if errors_in_run == 0:
                return e.client_ts.seconds - start
            run_open = False
    return None


def _run_window(events: list[StoredEvent], run_id: str) -> tuple[int, int]:
    start = end = None
    for i, se in enumerate(events):
        p = se.event.payload
        if not isinstance(p, RunPayload) or p.run_id != run_id:
            continue
        if se.event.kind is EventKind.RUN_START:
            start = i
        elif se.event.kind is EventKind.RUN_END:
            end = i
    if start is None or end is None or end < start:
        raise NoSuchRun(f"no complete RunStart/RunEnd pair for run {run_id!r}")
    return start, end


def _run_diagnostics(events: list[StoredEvent], start: int, end: int) -> frozenset[str]:
    out = set()
    for se in events[start : end + 1]:
        p = se.event.payload
        if se.event.kind is EventKind.DIAGNOSTIC and isinstance(p, DiagnosticPayload):
            out.add(normalize_message(p.message))
    return frozenset(out)


def compare_runs(events: list[StoredEvent], run_a: str, run_b: str) -> RunDelta:
    """Diagnostic-set delta between two runs of the same actor.

    Diagnostics are attributed to the events between a run's RunStart and
    RunEnd (inclusive) and compared as sets of normalized messages.
    """
    _check_sorted(events)
    a_set = _run_diagnostics(events, *_run_window(events, run_a))
    b_set = _run_diagnostics(events, *_run_window(events, run_b))
    return RunDelta(
        run_a=run_a,
        run_b=run_b,
        diagnostics_resolved=a_set - b_set,
        diagnostics_introduced=b_set - a_set,
        diagnostics_persisting=a_set & b_set,
    )


def nearest_rank_quartiles(values: list[float]) -> tuple[float, float, float] | None:
    """(Q1, median, Q3) by the nearest-rank method; None for an empty list."""
    if not values:
        return None
    ordered = sorted(values)
    n = len(ordered)

    def q(p: float) -> float:
        rank = max(1, math.ceil(p * n))
        return ordered[rank - 1]

    return (q(0.25), q(0.50), q(0.75))


def class_report(
    events: list[StoredEvent],
    exercise_id: str,
    top_n: int = 10,
    gap_seconds: int = DEFAULT_GAP_SECONDS,
    active_gap_cap_seconds: int = DEFAULT_ACTIVE_GAP_CAP_SECONDS,
) -> ClassReport:
    """Whole-class view for one exercise: per-actor metrics plus aggregates."""
    _check_sorted(events)
    scoped = [se for se in events if se.event.exercise_id == exercise_id]
    by_actor: dict[str, list[StoredEvent]] = {}
    for se in scoped:
        by_actor.setdefault(se.event.actor_id, []).append(se)
    per_actor = [
        compute_metrics(by_actor[a], gap_seconds, active_gap_cap_seconds)
        for a in sorted(by_actor)
    ]
    return ClassReport(
        exercise_id=exercise_id,
        per_actor=per_actor,
        top_error_messages=error_histogram(scoped, top_n),
        active_seconds_quartiles=nearest_rank_quartiles([m.active_seconds for m in per_actor]),
        churn_quartiles=nearest_rank_quartiles([float(m.churn_lines) for m in per_actor]),
    )
