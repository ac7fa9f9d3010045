from __future__ import annotations

import os
import random
import signal
import subprocess
import sys
import textwrap
import time

import pytest

from codetrail.agent import (
    AuthRejected,
    DiskError,
    HttpTransport,
    ServerUnavailable,
    Spool,
    WatchConfig,
    Watcher,
    flush,
    flush_with_retry,
)
from codetrail.events import EventKind, Timestamp, validate
from codetrail.server import make_server, serve_background
from codetrail.store import EventStore
from codetrail.textdiff import apply_diff

from .conftest import heartbeat, random_edit, random_text, ts


def make_config(tmp_path, **overrides) -> WatchConfig:
    ws = tmp_path / "ws"
    ws.mkdir(exist_ok=True)
    defaults = dict(
        workspace_root=ws,
        actor_id="alice",
        workspace_id="ws1",
        server_url="http://127.0.0.1:1",
        auth_token="tok-alice",
        spool_dir=tmp_path / "spool",
        exercise_id="ex1",
    )
    defaults.update(overrides)
    return WatchConfig(**defaults)


class TestConfig:
    def test_key_value_file_round_trip(self, tmp_path):
        (tmp_path / "ws").mkdir()
        cfg_file = tmp_path / "agent.conf"
        cfg_file.write_text(
            textwrap.dedent(
                f"""\
                # capture config
                workspace_root = {tmp_path / 'ws'}
                actor_id = alice
                workspace_id = ws1
                server_url = http://localhost:9
                auth_token = tok
                spool_dir = {tmp_path / 'spool'}
                debounce_ms = 250
                include_globs = *.c,*.py
                """
            )
        )
        cfg = WatchConfig.load(cfg_file)
        assert cfg.actor_id == "alice"
        assert cfg.debounce_ms == 250
        assert cfg.include_globs == ("*.c", "*.py")

    def test_missing_keys_rejected(self, tmp_path):
        cfg_file = tmp_path / "agent.conf"
        cfg_file.write_text("actor_id = alice\n")
        with pytest.raises(ValueError, match="missing"):
            WatchConfig.load(cfg_file)

    def test_debounce_floor(self, tmp_path):
        with pytest.raises(ValueError):
            make_config(tmp_path, debounce_ms=50)


class TestSpool:
    def test_append_then_pending(self, tmp_path):
        spool = Spool(tmp_path / "spool")
        e = heartbeat()
        spool.append(e, enqueued_ts=ts(0))
        assert [p.event_id for p in spool.pending()] == [e.event_id]

    def test_duplicate_appends_kept(self, tmp_path):
        # The spool is dumb: dedup is the server's job.
        spool = Spool(tmp_path / "spool")
        e = heartbeat()
        spool.append(e, enqueued_ts=ts(0))
        spool.append(e, enqueued_ts=ts(1))
        assert len(spool.pending()) == 2

    def test_ack_offsets_never_regress(self, tmp_path):
        spool = Spool(tmp_path / "spool")
        events = [heartbeat(at=i) for i in range(5)]
        for e in events:
            spool.append(e, enqueued_ts=ts(0))
        spool.mark_acked({events[0].event_id, events[1].event_id})
        assert len(spool.pending()) == 3
        # acking an already-acked id is a no-op
        spool.mark_acked({events[0].event_id})
        assert len(spool.pending()) == 3

    def test_ack_stops_at_first_unacked(self, tmp_path):
        spool = Spool(tmp_path / "spool")
        events = [heartbeat(at=i) for i in range(3)]
        for e in events:
            spool.append(e, enqueued_ts=ts(0))
        spool.mark_acked({events[0].event_id, events[2].event_id})
        assert len(spool.pending()) == 2  # entry 1 blocks entry 2

    def test_unwritable_spool_file_raises(self, tmp_path):
        # A directory squatting on the day-file path makes the append fail
        # regardless of uid (chmod-based checks are bypassed when root).
        spool_dir = tmp_path / "spool"
        spool = Spool(spool_dir)
        day = ts(0).render()[:10].replace("-", "")
        (spool_dir / f"spool-{day}.ndjson").mkdir()
        with pytest.raises(DiskError):
            spool.append(heartbeat(), enqueued_ts=ts(0))

    def test_survives_process_kill(self, tmp_path):
        """Appends fsync before returning: kill -9 mid-run loses nothing reported."""
        spool_dir = tmp_path / "spool"
        script = textwrap.dedent(
            f"""\
            import sys, time
            from codetrail.agent import Spool
            from codetrail.events import EventKind, HeartbeatPayload, Timestamp, make_event
            spool = Spool({str(spool_dir)!r})
            for i in range(1000):
                e = make_event(EventKind.HEARTBEAT, Timestamp(i), "alice", "ws1", HeartbeatPayload())
                spool.append(e)
                print(i, flush=True)
            """
        )
        proc = subprocess.Popen(
            [sys.executable, "-c", script], stdout=subprocess.PIPE, text=True
        )
        reported = -1
        for _ in range(20):  # let a few appends land
            line = proc.stdout.readline()
            if line.strip():
                reported = int(line)
        os.kill(proc.pid, signal.SIGKILL)
        proc.wait()
        spool = Spool(spool_dir)
        pending = spool.pending()
        assert len(pending) >= reported + 1
        for p in pending:
            assert validate(p) == []


@pytest.fixture
def served(tmp_path):
    store = EventStore(tmp_path / "serverdata")
    server = make_server(store, {"tok-alice": "alice"})
    serve_background(server)
    host, port = server.server_address
    yield f"http://{host}:{port}", store
    server.shutdown()


class TestFlush:
    def test_empty_spool_noop(self, tmp_path, served):
        url, _ = served
        spool = Spool(tmp_path / "spool")
        receipt = flush(spool, HttpTransport(url, "tok-alice"))
        assert receipt.sent == 0 and receipt.acked == 0

    def test_pending_all_acked_then_nothing_resent(self, tmp_path, served):
        url, store = served
        spool = Spool(tmp_path / "spool")
        for i in range(10):
            spool.append(heartbeat(at=i), enqueued_ts=ts(0))
        transport = HttpTransport(url, "tok-alice")
        receipt = flush(spool, transport, batch_size=4)
        assert receipt.sent == 10 and receipt.acked == 10
        assert store.max_seq == 10
        again = flush(spool, transport)
        assert again.sent == 0

    def test_crash_before_mark_resends_and_server_dedups(self, tmp_path, served):
        url, store = served
        spool = Spool(tmp_path / "spool")
        for i in range(5):
            spool.append(heartbeat(at=i), enqueued_ts=ts(0))
        transport = HttpTransport(url, "tok-alice")

        class CrashAfterSend:
            def send(self, lines):
                transport.send(lines)
                raise RuntimeError("simulated crash before ack bookkeeping")

        with pytest.raises(RuntimeError):
            flush(spool, CrashAfterSend())
        assert len(spool.pending()) == 5  # nothing marked
        receipt = flush(spool, transport)  # agent restarted
        assert receipt.acked == 5
        assert store.max_seq == 5  # dedup: no duplicates stored
        assert len(list(store.scan())) == 5

    def test_auth_rejected_terminal(self, tmp_path, served):
        url, _ = served
        spool = Spool(tmp_path / "spool")
        spool.append(heartbeat(), enqueued_ts=ts(0))
        with pytest.raises(AuthRejected):
            flush(spool, HttpTransport(url, "bad-token"))

    def test_server_unavailable_then_retry_succeeds(self, tmp_path, served):
        url, store = served
        spool = Spool(tmp_path / "spool")
        spool.append(heartbeat(), enqueued_ts=ts(0))
        real = HttpTransport(url, "tok-alice")
        calls = {"n": 0}

        class FlakyTransport:
            def send(self, lines):
                calls["n"] += 1
                if calls["n"] < 3:
                    raise ServerUnavailable("down")
                return real.send(lines)

        receipt = flush_with_retry(
            spool, FlakyTransport(), base_delay=0.01, rng=random.Random(0)
        )
        assert receipt.acked == 1
        assert store.max_seq == 1


class TestWatcher:
    def test_untouched_workspace_snapshot_only(self, tmp_path):
        cfg = make_config(tmp_path)
        (cfg.workspace_root / "a.c").write_text("int x;\n")
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        first = watcher.poll_once()
        assert [e.kind for e in first] == [EventKind.FILE_SNAPSHOT]
        assert watcher.poll_once() == []
        assert watcher.poll_once() == []

    def test_two_edits_one_window_one_diff(self, tmp_path):
        cfg = make_config(tmp_path)
        f = cfg.workspace_root / "a.c"
        f.write_text("one\n")
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        watcher.poll_once()
        f.write_text("one\ntwo\n")
        f.write_text("one\ntwo\nthree\n")  # second edit inside the same window
        events = watcher.poll_once()
        diffs = [e for e in events if e.kind is EventKind.FILE_DIFF]
        assert len(diffs) == 1
        assert apply_diff("one\n", diffs[0].payload.hunks) == "one\ntwo\nthree\n"

    def test_chain_base_ids_and_validity(self, tmp_path):
        cfg = make_config(tmp_path)
        f = cfg.workspace_root / "a.c"
        f.write_text("v0\n")
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        emitted = list(watcher.poll_once())
        for i in range(1, 4):
            f.write_text(f"v{i}\n")
            emitted += watcher.poll_once()
        for e in emitted:
            assert validate(e) == []
        chain = [e for e in emitted if e.kind in (EventKind.FILE_SNAPSHOT, EventKind.FILE_DIFF)]
        for prev, cur in zip(chain, chain[1:]):
            assert cur.payload.base_event_id == prev.event_id

    def test_scripted_random_edits_replay_to_disk_state(self, tmp_path):
        cfg = make_config(tmp_path)
        rng = random.Random(11)
        files = ["a.py", "b.py", "sub/c.py"]
        (cfg.workspace_root / "sub").mkdir()
        texts = {}
        for name in files:
            texts[name] = random_text(rng)
            (cfg.workspace_root / name).write_text(texts[name])
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        emitted = list(watcher.poll_once())
        for _ in range(50):
            name = rng.choice(files)
            texts[name] = random_edit(rng, texts[name])
            (cfg.workspace_root / name).write_text(texts[name])
            emitted += watcher.poll_once()
        replayed = {}
        for e in emitted:
            if e.kind is EventKind.FILE_SNAPSHOT:
                replayed[e.payload.file] = e.payload.content
            elif e.kind is EventKind.FILE_DIFF:
                replayed[e.payload.file] = apply_diff(replayed[e.payload.file], e.payload.hunks)
        for name in files:
            on_disk = (cfg.workspace_root / name).read_text()
            assert replayed[name] == on_disk

    def test_exclude_globs(self, tmp_path):
        cfg = make_config(tmp_path)
        (cfg.workspace_root / ".git").mkdir()
        (cfg.workspace_root / ".git" / "HEAD").write_text("ref\n")
        (cfg.workspace_root / "x.pyc").write_bytes(b"\x00\x01")
        (cfg.workspace_root / "keep.py").write_text("ok\n")
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        events = watcher.poll_once()
        assert [e.payload.file for e in events] == ["keep.py"]

    def test_periodic_snapshot_reanchors_chain(self, tmp_path):
        cfg = make_config(tmp_path)
        f = cfg.workspace_root / "a.txt"
        f.write_text("0\n")
        watcher = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        emitted = list(watcher.poll_once())
        for i in range(1, 60):
            f.write_text(f"{i}\n")
            emitted += watcher.poll_once()
        snapshots = [e for e in emitted if e.kind is EventKind.FILE_SNAPSHOT]
        assert len(snapshots) >= 2

    def test_restart_continues_chain_from_spool(self, tmp_path):
        cfg = make_config(tmp_path)
        f = cfg.workspace_root / "a.c"
        f.write_text("v0\n")
        first = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(0))
        emitted = list(first.poll_once())
        f.write_text("v1\n")
        emitted += first.poll_once()
        # agent restart: a fresh watcher over the same spool
        f.write_text("v2\n")
        second = Watcher(cfg, Spool(cfg.spool_dir), clock=lambda: ts(1))
        emitted += second.poll_once()
        chain = [e for e in emitted if e.kind in (EventKind.FILE_SNAPSHOT, EventKind.FILE_DIFF)]
        assert [e.kind for e in chain] == [
            EventKind.FILE_SNAPSHOT, EventKind.FILE_DIFF, EventKind.FILE_DIFF,
        ]
        assert chain[2].payload.base_event_id == chain[1].event_id

    def test_extension_marker_excludes_agent(self, tmp_path):
        from codetrail.agent import EXTENSION_MARKER, AgentError

        cfg = make_config(tmp_path)
        (cfg.workspace_root / EXTENSION_MARKER).write_text("{}")
        with pytest.raises(AgentError, match="extension"):
            Watcher(cfg, Spool(cfg.spool_dir))

    def test_unreadable_workspace_root(self, tmp_path):
        from codetrail.agent import WorkspaceUnreadable

        cfg = make_config(tmp_path)
        cfg.workspace_root = tmp_path / "missing"
        with pytest.raises(WorkspaceUnreadable):
            Watcher(cfg, Spool(cfg.spool_dir))
