import { describe, expect, it } from "vitest";

import { resolveConfig } from "../src/config";
import { applyDiff } from "../src/diff";
import { Event, Hunk } from "../src/events";
import { CaptureTracker, SNAPSHOT_EVERY_DIFFS } from "../src/tracker";

function makeTracker(overrides: Record<string, unknown> = {}) {
  const events: Event[] = [];
  let nowMs = 1_740_000_000_000;
  const tracker = new CaptureTracker(
    resolveConfig({
      serverUrl: "http://127.0.0.1:1",
      authToken: "tok",
      actorId: "alice",
      workspaceId: "ws1",
      exerciseId: "ex1",
      debounceMs: 100,
      enabled: true,
      ...overrides,
    }),
    (e) => events.push(e),
    () => nowMs++
  );
  return { tracker, events };
}

/** Replay a file's event chain the way the server does. */
function replay(events: Event[], file: string): string {
  let text = "";
  let lastId = "";
  for (const e of events) {
    if ((e.payload as { file?: string }).file !== file) continue;
    if (e.kind === "FileSnapshot") {
      text = (e.payload as { content: string }).content;
      lastId = e.event_id;
    } else if (e.kind === "FileDiff") {
      expect((e.payload as { base_event_id: string }).base_event_id).toBe(lastId);
      text = applyDiff(text, (e.payload as { hunks: Hunk[] }).hunks);
      lastId = e.event_id;
    }
  }
  return text;
}

describe("document capture", () => {
  it("first open emits FileOpen + FileSnapshot", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "int main() {}\n");
    expect(events.map((e) => e.kind)).toEqual(["FileOpen", "FileSnapshot"]);
    expect(events[1].payload).toMatchObject({
      file: "main.c",
      content: "int main() {}\n",
      line_count: 1,
    });
  });

  it("no edits means no FileDiff events", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "a\n");
    tracker.documentChanged("main.c", "a\n"); // same text
    tracker.flushPending();
    expect(events.filter((e) => e.kind === "FileDiff")).toEqual([]);
  });

  it("debounced keystroke bursts coalesce into one FileDiff", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "a\n");
    tracker.documentChanged("main.c", "ab\n");
    tracker.documentChanged("main.c", "abc\n");
    tracker.documentChanged("main.c", "abc\nd\n");
    tracker.flushPending();
    const diffs = events.filter((e) => e.kind === "FileDiff");
    expect(diffs.length).toBe(1);
    expect(replay(events, "main.c")).toBe("abc\nd\n");
  });

  it("chains base_event_id across successive settles", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "v0\n");
    for (let i = 1; i <= 10; i++) {
      tracker.documentChanged("main.c", `v${i}\nline\n`.repeat(i));
      tracker.flushPending();
    }
    expect(events.filter((e) => e.kind === "FileDiff").length).toBe(10);
    expect(replay(events, "main.c")).toBe("v10\nline\n".repeat(10));
    expect(tracker.trackedContent("main.c")).toBe("v10\nline\n".repeat(10));
  });

  it("re-snapshots after SNAPSHOT_EVERY_DIFFS diffs", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "v0\n");
    for (let i = 1; i <= SNAPSHOT_EVERY_DIFFS + 1; i++) {
      tracker.documentChanged("main.c", `v${i}\n`);
      tracker.flushPending();
    }
    const kinds = events.map((e) => e.kind);
    expect(kinds.filter((k) => k === "FileSnapshot").length).toBe(2);
    expect(kinds.filter((k) => k === "FileDiff").length).toBe(SNAPSHOT_EVERY_DIFFS);
    expect(replay(events, "main.c")).toBe(`v${SNAPSHOT_EVERY_DIFFS + 1}\n`);
  });

  it("save settles pending edits and appends FileSave", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "a\n");
    tracker.documentChanged("main.c", "a\nb\n");
    tracker.documentSaved("main.c", "a\nb\n");
    expect(events.map((e) => e.kind)).toEqual([
      "FileOpen",
      "FileSnapshot",
      "FileDiff",
      "FileSave",
    ]);
  });

  it("normalizes CRLF line endings at capture", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "a\r\nb\r\n");
    expect((events[1].payload as { content: string }).content).toBe("a\nb\n");
  });

  it("disabled capture emits nothing", () => {
    const { tracker, events } = makeTracker({
      enabled: false,
      serverUrl: "",
      authToken: "",
      actorId: "",
      workspaceId: "",
    });
    tracker.documentOpened("main.c", "a\n");
    tracker.documentChanged("main.c", "b\n");
    tracker.documentSaved("main.c", "b\n");
    tracker.diagnosticsChanged("main.c", [
      { level: "Error", message: "boom", line: 1 },
    ]);
    tracker.flushPending();
    expect(events).toEqual([]);
  });

  it("ignores escaping and absolute paths", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("../evil.c", "a\n");
    tracker.documentOpened("/etc/passwd", "a\n");
    tracker.documentOpened("sub/../../evil.c", "a\n");
    expect(events).toEqual([]);
    tracker.documentOpened("sub/ok.c", "a\n");
    expect(events.length).toBe(2);
  });

  it("skips oversized documents", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("big.txt", "x".repeat(1024 * 1024 + 1));
    expect(events).toEqual([]);
  });

  it("stamps exercise_id and valid canonical timestamps", () => {
    const { tracker, events } = makeTracker();
    tracker.documentOpened("main.c", "a\n");
    for (const e of events) {
      expect(e.exercise_id).toBe("ex1");
      expect(e.client_ts).toMatch(/^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z$/);
    }
  });
});

describe("diagnostics capture", () => {
  it("clean file emits no events", () => {
    const { tracker, events } = makeTracker();
    tracker.diagnosticsChanged("main.c", []);
    expect(events).toEqual([]);
  });

  it("new diagnostic emits one mapped event with file and line", () => {
    const { tracker, events } = makeTracker();
    tracker.diagnosticsChanged("main.c", [
      { level: "Error", message: "expected ';'", line: 3, source: "clangd" },
    ]);
    expect(events.length).toBe(1);
    expect(events[0].kind).toBe("Diagnostic");
    expect(events[0].payload).toEqual({
      file: "main.c",
      level: "Error",
      message: "expected ';'",
      line: 3,
      source: "clangd",
    });
  });

  it("re-reported diagnostics are not re-emitted", () => {
    const { tracker, events } = makeTracker();
    const diag = { level: "Error" as const, message: "boom", line: 1 };
    tracker.diagnosticsChanged("main.c", [diag]);
    tracker.diagnosticsChanged("main.c", [diag]);
    tracker.diagnosticsChanged("main.c", [diag]);
    expect(events.length).toBe(1);
  });

  it("fixing the error emits nothing further for it", () => {
    const { tracker, events } = makeTracker();
    const diag = { level: "Error" as const, message: "boom", line: 1 };
    tracker.diagnosticsChanged("main.c", [diag]);
    tracker.diagnosticsChanged("main.c", []);
    expect(events.length).toBe(1);
    // ...but reintroducing it counts as a new occurrence.
    tracker.diagnosticsChanged("main.c", [diag]);
    expect(events.length).toBe(2);
  });
});
