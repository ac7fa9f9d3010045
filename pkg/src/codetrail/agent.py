"""Workspace capture agent: polling watcher, durable offline spool, batch delivery.

Two loops share nothing but the on-disk spool: the watcher turns filesystem
changes into events and appends them durably; the sender drains Pending spool
entries to the server in NDJSON batches and advances the ack offset only after
the server's receipt names the event_ids. Delivery is at-least-once; the
server dedups by content hash, so re-sends after a crash are harmless.

Polling every debounce window (default 2 s) doubles as the debounce itself:
all edits to a file inside one window coalesce into a single FileDiff.
"""

from __future__ import annotations

import fnmatch
import json
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import requests

from .events import (
    Event,
    EventKind,
    FileDiffPayload,
    FilePayload,
    FileSnapshotPayload,
    HeartbeatPayload,
    Timestamp,
    count_lines,
    make_event,
)
from .events import Hunk
from .store import IngestReceipt
from .textdiff import apply_diff, compute_diff

DEFAULT_DEBOUNCE_MS = 2000
SNAPSHOT_EVERY_DIFFS = 50  # periodic full snapshot bounds replay cost
MAX_CAPTURED_BYTES = 1024 * 1024
EXTENSION_MARKER = ".codetrail-extension"  # set by the editor extension; agent stands down
DEFAULT_EXCLUDE_GLOBS = (
    ".git/*", ".git", "*.pyc", "__pycache__/*", "node_modules/*",
    "build/*", "dist/*", "target/*", ".codetrail-spool/*", "*.o", "*.class",
)


class AgentError(Exception):
    pass


class WorkspaceUnreadable(AgentError):
    pass


class DiskError(AgentError):
    pass


class AuthRejected(AgentError):
    pass


class ServerUnavailable(AgentError):
    pass


@dataclass
class WatchConfig:
    workspace_root: Path
    actor_id: str
    workspace_id: str
    server_url: str
    auth_token: str
    spool_dir: Path
    exercise_id: str | None = None
    include_globs: tuple[str, ...] = ("*",)
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDE_GLOBS
    debounce_ms: int = DEFAULT_DEBOUNCE_MS

    def __post_init__(self):
        self.workspace_root = Path(self.workspace_root)
        self.spool_dir = Path(self.spool_dir)
        if self.debounce_ms < 100:
            raise ValueError("debounce_ms must be >= 100")

    @classmethod
    def load(cls, path: str | Path) -> "WatchConfig":
        """Parse a plain-text key=value config file."""
        kv: dict[str, str] = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        required = ("workspace_root", "actor_id", "workspace_id", "server_url", "auth_token", "spool_dir")
        missing = [k for k in required if k not in kv]
        if missing:
            raise ValueError(f"config missing keys: {', '.join(missing)}")
        return cls(
            workspace_root=Path(kv["workspace_root"]),
            actor_id=kv["actor_id"],
            workspace_id=kv["workspace_id"],
            server_url=kv["server_url"],
            auth_token=kv["auth_token"],
            spool_dir=Path(kv["spool_dir"]),
            exercise_id=kv.get("exercise_id"),
            include_globs=tuple(kv["include_globs"].split(",")) if "include_globs" in kv else ("*",),
            exclude_globs=tuple(kv["exclude_globs"].split(","))
            if "exclude_globs" in kv
            else DEFAULT_EXCLUDE_GLOBS,
            debounce_ms=int(kv.get("debounce_ms", DEFAULT_DEBOUNCE_MS)),
        )


# -- spool ---------------------------------------------------------------


class Spool:
    """Durable append-only NDJSON queue, one file per day, sidecar ack offset.

    The spool is deliberately dumb: it never dedups (that is the server's job)
    and acked entries never regress to Pending. Each append is fsynced before
    returning, so entries survive a process kill.
    """

    def __init__(self, spool_dir: str | Path):
        self.spool_dir = Path(spool_dir)
        try:
            self.spool_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DiskError(f"cannot create spool dir: {exc}") from exc

    def _day_file(self, ts: Timestamp) -> Path:
        day = ts.render()[:10].replace("-", "")
        return self.spool_dir / f"spool-{day}.ndjson"

    def _files(self) -> list[Path]:
        return sorted(self.spool_dir.glob("spool-*.ndjson"))

    @staticmethod
    def _ack_path(spool_file: Path) -> Path:
        return spool_file.with_suffix(".ack")

    @staticmethod
    def _ack_offset(spool_file: Path) -> int:
        ack = Spool._ack_path(spool_file)
        if not ack.exists():
            return 0
        text = ack.read_text().strip()
        return int(text) if text else 0

    def append(self, event: Event, enqueued_ts: Timestamp | None = None) -> None:
        ts = enqueued_ts or Timestamp.now()
        entry = {"event": event.to_dict(), "enqueued_ts": ts.render()}
        path = self._day_file(ts)
        try:
            with open(path, "ab") as f:
                f.write(json.dumps(entry, sort_keys=True, separators=(",", ":")).encode() + b"\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise DiskError(f"spool append failed: {exc}") from exc

    def pending(self) -> list[Event]:
        """Oldest-first events not yet acked."""
        from .events import event_from_dict

        out: list[Event] = []
        for path in self._files():
            offset = self._ack_offset(path)
            lines = [ln for ln in path.read_bytes().splitlines() if ln.strip()]
            for line in lines[offset:]:
                out.append(event_from_dict(json.loads(line)["event"]))
        return out

    def entry_count(self) -> int:
        return sum(len([ln for ln in p.read_bytes().splitlines() if ln.strip()]) for p in self._files())

    def mark_acked(self, event_ids: set[str]) -> int:
        """Advance each file's ack offset over a contiguous acked prefix."""
        advanced = 0
        for path in self._files():
            offset = self._ack_offset(path)
            lines = [ln for ln in path.read_bytes().splitlines() if ln.strip()]
            while offset < len(lines):
                eid = json.loads(lines[offset])["event"]["event_id"]
                if eid not in event_ids:
                    break
                offset += 1
                advanced += 1
            ack = self._ack_path(path)
            tmp = ack.with_suffix(".ack.tmp")
            tmp.write_text(str(offset))
            tmp.replace(ack)
        return advanced


# -- transports ----------------------------------------------------------


class HttpTransport:
    """Delivers NDJSON batches to the ingest server's POST /v1/events."""

    def __init__(self, server_url: str, auth_token: str, timeout: float = 10.0):
        self.server_url = server_url.rstrip("/")
        self.auth_token = auth_token
        self.timeout = timeout

    def send(self, lines: list[bytes]) -> IngestReceipt:
        body = b"".join(ln + b"\n" for ln in lines)
        try:
            resp = requests.post(
                f"{self.server_url}/v1/events",
                data=body,
                headers={
                    "Authorization": f"Bearer {self.auth_token}",
                    "Content-Type": "application/x-ndjson",
                },
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ServerUnavailable(str(exc)) from exc
        if resp.status_code == 401:
            raise AuthRejected("server rejected the auth token")
        if resp.status_code != 200:
            raise ServerUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return IngestReceipt.from_dict(resp.json())


@dataclass
class DeliveryReceipt:
    sent: int = 0
    acked: int = 0


def flush(spool: Spool, transport, batch_size: int = 500) -> DeliveryReceipt:
    """One delivery pass: send oldest Pending entries, ack what the server names.

    Both freshly accepted and duplicate event_ids count as acked (a duplicate
    means the server already has the event, which is all at-least-once needs).
    """
    receipt = DeliveryReceipt()
    while True:
        pending = spool.pending()
        if not pending:
            break
        batch = pending[:batch_size]
        lines = [json.dumps(e.to_dict(), sort_keys=True, separators=(",", ":")).encode() for e in batch]
        server_receipt = transport.send(lines)
        receipt.sent += len(batch)
        acked_ids = {eid for eid, _ in server_receipt.accepted} | set(server_receipt.duplicates)
        acked_ids |= {ref for ref, _ in server_receipt.rejected if len(ref) == 64}
        advanced = spool.mark_acked(acked_ids)
        receipt.acked += advanced
        if len(batch) == len(pending) or advanced == 0:
            break
    return receipt


def flush_with_retry(
    spool: Spool,
    transport,
    batch_size: int = 500,
    max_attempts: int = 5,
    base_delay: float = 0.5,
    rng: random.Random | None = None,
) -> DeliveryReceipt:
    """flush with capped exponential backoff and jitter on ServerUnavailable."""
    rng = rng or random.Random()
    delay = base_delay
    for attempt in range(max_attempts):
        try:
            return flush(spool, transport, batch_size)
        except ServerUnavailable:
            if attempt == max_attempts - 1:
                raise
            time.sleep(delay * (0.5 + rng.random()))
            delay = min(delay * 2, 30.0)
    raise AssertionError("unreachable")


# -- watcher -------------------------------------------------------------


@dataclass
class _FileState:
    content: str
    last_event_id: str
    diffs_since_snapshot: int = 0


class Watcher:
    """Polls a workspace and turns file changes into a per-file event chain.

    First sight of a file emits FileSnapshot; each later poll that finds a
    change emits one FileDiff chained to the previous event via base_event_id.
    Every SNAPSHOT_EVERY_DIFFS diffs a fresh FileSnapshot re-anchors the chain.
    """

    def __init__(self, config: WatchConfig, spool: Spool, clock=Timestamp.now):
        if not config.workspace_root.is_dir():
            raise WorkspaceUnreadable(f"workspace_root {config.workspace_root} is not a directory")
        marker = config.workspace_root / EXTENSION_MARKER
        if marker.exists():
            raise AgentError(
                f"editor extension is capturing this workspace ({marker}); "
                "running both capture clients is unsupported"
            )
        self.config = config
        self.spool = spool
        self.clock = clock
        self._state: dict[str, _FileState] = {}
        self._bootstrap_from_spool()

    def _bootstrap_from_spool(self) -> None:
        """Rebuild per-file chain state after a restart by replaying the spool."""
        for path in self.spool._files():
            for line in path.read_bytes().splitlines():
                if not line.strip():
                    continue
                d = json.loads(line)["event"]
                if d.get("actor_id") != self.config.actor_id:
                    continue
                if d.get("workspace_id") != self.config.workspace_id:
                    continue
                kind = d.get("kind")
                payload = d.get("payload", {})
                if kind == EventKind.FILE_SNAPSHOT.value:
                    self._state[payload["file"]] = _FileState(
                        content=payload["content"], last_event_id=d["event_id"]
                    )
                elif kind == EventKind.FILE_DIFF.value:
                    state = self._state.get(payload["file"])
                    if state is None or state.last_event_id != payload["base_event_id"]:
                        continue  # broken chain; next poll re-snapshots
                    hunks = [Hunk.from_dict(h) for h in payload["hunks"]]
                    state.content = apply_diff(state.content, hunks)
                    state.last_event_id = d["event_id"]
                    state.diffs_since_snapshot += 1

    def _included(self, rel: str) -> bool:
        cfg = self.config
        if any(fnmatch.fnmatch(rel, g) for g in cfg.exclude_globs):
            return False
        return any(fnmatch.fnmatch(rel, g) for g in cfg.include_globs)

    def _workspace_files(self) -> Iterator[tuple[str, Path]]:
        root = self.config.workspace_root
        for path in sorted(root.rglob("*")):
            if not path.is_file():
                continue
            rel = path.relative_to(root).as_posix()
            if not self._included(rel):
                continue
            try:
                if path.stat().st_size > MAX_CAPTURED_BYTES:
                    continue
            except OSError:
                continue
            yield rel, path

    def _make(self, kind: EventKind, payload) -> Event:
        cfg = self.config
        return make_event(
            kind=kind,
            client_ts=self.clock(),
            actor_id=cfg.actor_id,
            workspace_id=cfg.workspace_id,
            payload=payload,
            exercise_id=cfg.exercise_id,
        )

    def poll_once(self) -> list[Event]:
        """One debounce window: diff every included file against its last seen text."""
        emitted: list[Event] = []
        for rel, path in self._workspace_files():
            try:
                raw = path.read_bytes()
                text = raw.decode("utf-8")
            except (OSError, UnicodeDecodeError):
                continue  # per-file problem; the watch goes on
            text = text.replace("\r\n", "\n").replace("\r", "\n")
            state = self._state.get(rel)
            if state is None:
                event = self._make(
                    EventKind.FILE_SNAPSHOT,
                    FileSnapshotPayload(file=rel, content=text, line_count=count_lines(text)),
                )
                self._state[rel] = _FileState(content=text, last_event_id=event.event_id)
                emitted.append(event)
                continue
            if text == state.content:
                continue
            if state.diffs_since_snapshot + 1 >= SNAPSHOT_EVERY_DIFFS:
                event = self._make(
                    EventKind.FILE_SNAPSHOT,
                    FileSnapshotPayload(file=rel, content=text, line_count=count_lines(text)),
                )
                state.diffs_since_snapshot = 0
            else:
                hunks = tuple(compute_diff(state.content, text))
                event = self._make(
                    EventKind.FILE_DIFF,
                    FileDiffPayload(file=rel, base_event_id=state.last_event_id, hunks=hunks),
                )
                state.diffs_since_snapshot += 1
            state.content = text
            state.last_event_id = event.event_id
            emitted.append(event)
            # An observed content change is the polling watcher's save signal.
            emitted.append(self._make(EventKind.FILE_SAVE, FilePayload(file=rel)))
        for event in emitted:
            self.spool.append(event)
        return emitted

    def heartbeat(self) -> Event:
        event = self._make(EventKind.HEARTBEAT, HeartbeatPayload())
        self.spool.append(event)
        return event

    def run(
        self,
        transport=None,
        heartbeat_every_s: float = 60.0,
        stop=lambda: False,
    ) -> None:
        """Watch loop: poll each debounce window, flush the spool, heartbeat."""
        last_heartbeat = time.monotonic()
        while not stop():
            self.poll_once()
            if time.monotonic() - last_heartbeat >= heartbeat_every_s:
                self.heartbeat()
                last_heartbeat = time.monotonic()
            if transport is not None:
                try:
                    flush(self.spool, transport)
                except (ServerUnavailable, AuthRejected):
                    pass  # spool keeps everything; next pass retries
            time.sleep(self.config.debounce_ms / 1000.0)
