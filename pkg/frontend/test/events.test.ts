import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import {
  canonicalJson,
  canonicalize,
  computeEventId,
  formatTimestamp,
  makeEvent,
  parseTimestamp,
  toNdjson,
} from "../src/events";

// Golden fixture shared with the server package: byte-for-byte conformance.
const FIXTURE = path.join(__dirname, "..", "..", "tests", "fixtures", "heartbeat.canonical.json");

const heartbeat = () =>
  makeEvent({
    kind: "Heartbeat",
    clientTsMs: parseTimestamp("2025-03-01T14:05:09.123Z"),
    actorId: "alice",
    workspaceId: "ws1",
    payload: {},
  });

describe("canonical serialization", () => {
  it("matches the shared golden fixture byte for byte", () => {
    const golden = readFileSync(FIXTURE);
    const bytes = canonicalize(heartbeat() as unknown as Record<string, unknown>);
    expect(bytes.equals(golden)).toBe(true);
  });

  it("derives the fixture's event id from those bytes", () => {
    const golden = readFileSync(FIXTURE);
    const digest = createHash("sha256").update(golden).digest("hex");
    expect(heartbeat().event_id).toBe(digest);
    expect(digest).toBe(
      "5614414782c01bed64ac2679167b64ceaa0f8c27ffc33a17aa23694ecb869959"
    );
  });

  it("hashes the empty input to the SHA-256 test vector", () => {
    expect(createHash("sha256").update(Buffer.alloc(0)).digest("hex")).toBe(
      "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
  });

  it("sorts keys at every depth and uses tight separators", () => {
    const bytes = canonicalJson({ b: { z: 1, a: [{ y: 2, x: 3 }] }, a: 0 });
    expect(bytes.toString("utf8")).toBe('{"a":0,"b":{"a":[{"x":3,"y":2}],"z":1}}');
  });

  it("keeps non-ASCII raw (UTF-8, no \\u escaping)", () => {
    const bytes = canonicalJson({ s: "héllo → 世界" });
    expect(bytes.toString("utf8")).toBe('{"s":"héllo → 世界"}');
    expect(bytes.includes("\\u")).toBe(false);
  });

  it("rejects non-integer numbers", () => {
    expect(() => canonicalJson({ x: 1.5 })).toThrow(TypeError);
  });

  it("omitting an optional field changes the hash", () => {
    const withEx = makeEvent({
      kind: "Heartbeat",
      clientTsMs: 0,
      actorId: "alice",
      workspaceId: "ws1",
      exerciseId: "ex1",
      payload: {},
    });
    const without = makeEvent({
      kind: "Heartbeat",
      clientTsMs: 0,
      actorId: "alice",
      workspaceId: "ws1",
      payload: {},
    });
    expect(withEx.event_id).not.toBe(without.event_id);
    expect("exercise_id" in without).toBe(false);
  });

  it("event_id is stable under field insertion order", () => {
    const event = heartbeat() as unknown as Record<string, unknown>;
    const shuffled: Record<string, unknown> = {};
    for (const key of Object.keys(event).reverse()) {
      shuffled[key] = event[key];
    }
    expect(computeEventId(shuffled)).toBe(event.event_id);
  });

  it("NDJSON body is one canonical line per event, each newline-terminated", () => {
    const body = toNdjson([heartbeat(), heartbeat()]).toString("utf8");
    const lines = body.split("\n");
    expect(lines.length).toBe(3);
    expect(lines[2]).toBe("");
    expect(JSON.parse(lines[0]).kind).toBe("Heartbeat");
  });
});

describe("timestamps", () => {
  it("formats with exactly three fractional digits", () => {
    expect(formatTimestamp(0)).toBe("1970-01-01T00:00:00.000Z");
    expect(formatTimestamp(1740838309123)).toMatch(/\.\d{3}Z$/);
  });

  it("round-trips epoch milliseconds", () => {
    for (const ms of [0, 1, 999, 1740838309123, 253402300799999]) {
      expect(parseTimestamp(formatTimestamp(ms))).toBe(ms);
    }
  });

  it("rejects non-canonical forms", () => {
    for (const bad of [
      "2025-03-01T14:05:09Z",
      "2025-03-01T14:05:09.1234Z",
      "2025-03-01 14:05:09.123Z",
      "2025-03-01T14:05:09.123+00:00",
      "2025-13-01T14:05:09.123Z",
    ]) {
      expect(() => parseTimestamp(bad)).toThrow(RangeError);
    }
  });
});

describe("event construction", () => {
  it("rejects malformed actor ids and empty workspaces", () => {
    const base = { kind: "Heartbeat" as const, clientTsMs: 0, payload: {} };
    expect(() =>
      makeEvent({ ...base, actorId: "Alice!", workspaceId: "ws1" })
    ).toThrow(RangeError);
    expect(() => makeEvent({ ...base, actorId: "alice", workspaceId: "" })).toThrow(
      RangeError
    );
  });
});
