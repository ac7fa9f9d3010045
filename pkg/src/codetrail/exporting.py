"""Pseudonymized dataset export: a shareable bundle of the event log.

Actor ids are replaced by HMAC-SHA-256(salt, actor_id) truncated to 16 hex
chars: deterministic per salt (the same student maps to the same pseudonym
across exports) and infeasible to reverse without the salt. Because events
are content-addressed, every event_id is recomputed after relabeling, and
FileDiff base_event_id references are remapped through the old->new id table
so replay still works on the exported data.

The bundle is fully deterministic for a given store and salt: the manifest's
created_ts is the last exported event's received_ts, not the wall clock, so
exporting twice yields byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from pathlib import Path

from .events import (
    Event,
    EventKind,
    FileDiffPayload,
    StoredEvent,
    Timestamp,
    canonical_json,
    canonicalize,
    compute_event_id,
)
from .store import EventFilter, EventStore, StoreError


class DirtyStore(StoreError):
    """verify found problems; export refuses to ship a questionable dataset."""


def pseudonym(salt: str, actor_id: str) -> str:
    return hmac.new(salt.encode(), actor_id.encode(), hashlib.sha256).hexdigest()[:16]


@dataclass
class ExportBundle:
    manifest: dict
    events_ndjson: bytes

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_bytes(canonical_json(self.manifest) + b"\n")
        (out / "events.ndjson").write_bytes(self.events_ndjson)


def _relabel(event: Event, salt: str, id_map: dict[str, str]) -> Event:
    payload = event.payload
    if event.kind is EventKind.FILE_DIFF and isinstance(payload, FileDiffPayload):
        payload = FileDiffPayload(
            file=payload.file,
            base_event_id=id_map.get(payload.base_event_id, payload.base_event_id),
            hunks=payload.hunks,
        )
    relabeled = Event(
        event_id="",
        schema_version=event.schema_version,
        kind=event.kind,
        client_ts=event.client_ts,
        actor_id=pseudonym(salt, event.actor_id),
        workspace_id=event.workspace_id,
        payload=payload,
        exercise_id=event.exercise_id,
    )
    new_id = compute_event_id(canonicalize(relabeled))
    id_map[event.event_id] = new_id
    return Event(
        event_id=new_id,
        schema_version=relabeled.schema_version,
        kind=relabeled.kind,
        client_ts=relabeled.client_ts,
        actor_id=relabeled.actor_id,
        workspace_id=relabeled.workspace_id,
        payload=relabeled.payload,
        exercise_id=relabeled.exercise_id,
    )


def export(store: EventStore, flt: EventFilter | None, salt: str) -> ExportBundle:
    """Export matching events, seq order preserved, identities pseudonymized."""
    report = store.verify()
    if not report.clean:
        raise DirtyStore(f"store fails verification: {report.to_dict()}")
    id_map: dict[str, str] = {}
    lines: list[bytes] = []
    count = 0
    first_seq = last_seq = None
    last_received = Timestamp(0)
    for se in store.scan(flt):
        relabeled = _relabel(se.event, salt, id_map)
        out = StoredEvent(event=relabeled, seq=se.seq, received_ts=se.received_ts)
        lines.append(out.to_json_line() + b"\n")
        count += 1
        if first_seq is None:
            first_seq = se.seq
        last_seq = se.seq
        last_received = max(last_received, se.received_ts)
    manifest = {
        "schema_version": 1,
        "event_count": count,
        "seq_range": [first_seq, last_seq] if count else None,
        "created_ts": last_received.render() if count else Timestamp(0).render(),
        "pseudonym_salt_fingerprint": hashlib.sha256(salt.encode()).hexdigest()[:16],
    }
    return ExportBundle(manifest=manifest, events_ndjson=b"".join(lines))


def load_bundle(bundle_dir: str | Path) -> ExportBundle:
    out = Path(bundle_dir)
    return ExportBundle(
        manifest=json.loads((out / "manifest.json").read_text()),
        events_ndjson=(out / "events.ndjson").read_bytes(),
    )


def reingest_bundle(bundle: ExportBundle, store: EventStore):
    """Load a bundle's events into a (typically fresh) store, original order."""
    lines = [ln for ln in bundle.events_ndjson.splitlines() if ln.strip()]
    event_lines = [canonical_json(json.loads(ln)["event"]) for ln in lines]
    return store.ingest_batch(event_lines)
