"""HTTP ingestion endpoint in front of the event store.

Wire protocol:
    POST /v1/events    NDJSON body, one canonical event JSON per line,
                       `Authorization: Bearer <token>`; response is the
                       IngestReceipt as JSON.
    GET  /v1/events    query params actor, workspace, exercise, kind, from,
                       to, seq_from, seq_to; streams NDJSON of StoredEvent.
    GET  /v1/health    status JSON.

Auth is bearer-token, one token per actor, mapped by a roster file of
`<actor_id> <token>` lines. Events in a batch whose actor_id does not match
the token's actor are rejected individually (ActorScope).
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .events import EventKind, Timestamp, event_from_json
from .store import EventFilter, EventStore, IngestReceipt

DEFAULT_MAX_BODY_BYTES = 8 * 1024 * 1024


def load_roster(path: str | Path) -> dict[str, str]:
    """Parse a roster file into a token -> actor_id map."""
    roster: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        actor, token = line.split()
        roster[token] = actor
    return roster


def _parse_filter(query: dict[str, list[str]]) -> EventFilter:
    def one(name: str) -> str | None:
        vals = query.get(name)
        return vals[0] if vals else None

    kinds = None
    if "kind" in query:
        kinds = frozenset(EventKind(k) for v in query["kind"] for k in v.split(","))
    return EventFilter(
        actor_id=one("actor"),
        workspace_id=one("workspace"),
        exercise_id=one("exercise"),
        kinds=kinds,
        ts_from=Timestamp.parse(one("from")) if one("from") else None,
        ts_to=Timestamp.parse(one("to")) if one("to") else None,
        seq_from=int(one("seq_from")) if one("seq_from") else None,
        seq_to=int(one("seq_to")) if one("seq_to") else None,
    )


class _Handler(BaseHTTPRequestHandler):
    server_version = "codetrail"
    protocol_version = "HTTP/1.1"

    # Set by make_server on the server object.
    store: EventStore
    roster: dict[str, str]
    max_body_bytes: int

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, code: int, obj: dict) -> None:
        body = json.dumps(obj, sort_keys=True).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _authed_actor(self) -> str | None:
        auth = self.headers.get("Authorization", "")
        if not auth.startswith("Bearer "):
            return None
        return self.server.roster.get(auth[len("Bearer ") :])  # type: ignore[attr-defined]

    def do_GET(self) -> None:
        url = urlparse(self.path)
        srv = self.server
        if url.path == "/v1/health":
            self._send_json(
                200, {"status": "ok", "events": len(srv.store), "max_seq": srv.store.max_seq}  # type: ignore[attr-defined]
            )
            return
        if url.path == "/v1/events":
            if self._authed_actor() is None:
                self._send_json(401, {"error": "Unauthorized"})
                return
            try:
                flt = _parse_filter(parse_qs(url.query))
            except (ValueError, KeyError) as exc:
                self._send_json(400, {"error": f"bad filter: {exc}"})
                return
            lines = [se.to_json_line() + b"\n" for se in srv.store.scan(flt)]  # type: ignore[attr-defined]
            body = b"".join(lines)
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        self._send_json(404, {"error": "not found"})

    def do_POST(self) -> None:
        url = urlparse(self.path)
        srv = self.server
        if url.path != "/v1/events":
            self._send_json(404, {"error": "not found"})
            return
        actor = self._authed_actor()
        if actor is None:
            self._send_json(401, {"error": "Unauthorized"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        if length > srv.max_body_bytes:  # type: ignore[attr-defined]
            self._send_json(413, {"error": "BodyTooLarge"})
            return
        body = self.rfile.read(length)
        lines = body.split(b"\n")
        receipt = IngestReceipt()
        in_scope: list[bytes] = []
        parsed = unparsed = 0
        for raw in lines:
            if not raw.strip():
                continue
            try:
                event = event_from_json(raw)
            except Exception:
                unparsed += 1
                in_scope.append(raw)  # store reports the malformed line individually
                continue
            parsed += 1
            if event.actor_id != actor:
                receipt.rejected.append((event.event_id, "ActorScope"))
                continue
            in_scope.append(raw)
        if parsed == 0 and unparsed > 0:
            self._send_json(400, {"error": "MalformedBody"})
            return
        store_receipt = srv.store.ingest_batch(in_scope)  # type: ignore[attr-defined]
        receipt.accepted = store_receipt.accepted
        receipt.duplicates = store_receipt.duplicates
        receipt.rejected.extend(store_receipt.rejected)
        self._send_json(200, receipt.to_dict())


class IngestServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, store: EventStore, roster: dict[str, str], max_body_bytes: int):
        super().__init__(addr, _Handler)
        self.store = store
        self.roster = roster
        self.max_body_bytes = max_body_bytes


def make_server(
    store: EventStore,
    roster: dict[str, str],
    host: str = "127.0.0.1",
    port: int = 0,
    max_body_bytes: int = DEFAULT_MAX_BODY_BYTES,
) -> IngestServer:
    return IngestServer((host, port), store, roster, max_body_bytes)


def serve_background(server: IngestServer) -> threading.Thread:
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    return t
