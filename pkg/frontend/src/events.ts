/**
 * Canonical event serialization for the codetrail wire protocol.
 *
 * The bytes produced here must match the ingest server's canonical form
 * exactly: UTF-8, keys sorted at every depth, `,`/`:` separators, optional
 * fields omitted (never null), timestamps in RFC 3339 UTC with exactly
 * three fractional digits. The `event_id` is the SHA-256 of the canonical
 * bytes with the `event_id` field removed. See docs/protocol.md in the
 * repository root.
 */

import { createHash } from "node:crypto";

export const SCHEMA_VERSION = 1;

export type EventKind =
  | "FileOpen"
  | "FileSave"
  | "FileSnapshot"
  | "FileDiff"
  | "Diagnostic"
  | "RunStart"
  | "RunEnd"
  | "Submission"
  | "Heartbeat";

export type DiagnosticLevel = "Error" | "Warning" | "Info" | "Debug";

export interface Hunk {
  start_line: number; // 1-based position in the base text's segments
  deleted: string[];
  inserted: string[];
}

export interface EventInit {
  kind: EventKind;
  clientTsMs: number;
  actorId: string;
  workspaceId: string;
  exerciseId?: string;
  payload: Record<string, unknown>;
}

/** A fully built event, ready for the wire. */
export interface Event {
  event_id: string;
  schema_version: number;
  kind: EventKind;
  client_ts: string;
  actor_id: string;
  workspace_id: string;
  exercise_id?: string;
  payload: Record<string, unknown>;
}

const TS_RE = /^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{3})Z$/;

/** Epoch milliseconds -> canonical RFC 3339 UTC string. */
export function formatTimestamp(epochMs: number): string {
  if (!Number.isInteger(epochMs) || epochMs < 0) {
    throw new RangeError(`timestamp out of range: ${epochMs}`);
  }
  // Date#toISOString already yields exactly three fractional digits.
  return new Date(epochMs).toISOString();
}

/** Strict inverse of formatTimestamp. */
export function parseTimestamp(text: string): number {
  const m = TS_RE.exec(text);
  if (m === null) {
    throw new RangeError(`not a canonical timestamp: ${JSON.stringify(text)}`);
  }
  const ms = Date.parse(text);
  if (Number.isNaN(ms) || formatTimestamp(ms) !== text) {
    throw new RangeError(`not a canonical timestamp: ${JSON.stringify(text)}`);
  }
  return ms;
}

function sortDeep(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortDeep);
  }
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  if (typeof value === "number" && !Number.isInteger(value)) {
    throw new TypeError(`non-integer number in event: ${value}`);
  }
  return value;
}

/** Canonical JSON bytes of any event-shaped object. */
export function canonicalJson(obj: Record<string, unknown>): Buffer {
  return Buffer.from(JSON.stringify(sortDeep(obj)), "utf8");
}

/** Canonical bytes of an event with the event_id field excluded. */
export function canonicalize(event: Record<string, unknown>): Buffer {
  const { event_id: _omit, ...rest } = event;
  return canonicalJson(rest);
}

export function computeEventId(event: Record<string, unknown>): string {
  return createHash("sha256").update(canonicalize(event)).digest("hex");
}

const ACTOR_RE = /^[a-z0-9_-]{1,64}$/;

/** Build a complete event and stamp its content-address id. */
export function makeEvent(init: EventInit): Event {
  if (!ACTOR_RE.test(init.actorId)) {
    throw new RangeError(`bad actor_id: ${JSON.stringify(init.actorId)}`);
  }
  if (init.workspaceId === "") {
    throw new RangeError("workspace_id must be non-empty");
  }
  const event: Event = {
    event_id: "",
    schema_version: SCHEMA_VERSION,
    kind: init.kind,
    client_ts: formatTimestamp(init.clientTsMs),
    actor_id: init.actorId,
    workspace_id: init.workspaceId,
    payload: init.payload,
  };
  if (init.exerciseId !== undefined && init.exerciseId !== "") {
    event.exercise_id = init.exerciseId;
  }
  event.event_id = computeEventId(event as unknown as Record<string, unknown>);
  return event;
}

/** One event per line, each terminated by \n: the POST /v1/events body. */
export function toNdjson(events: Event[]): Buffer {
  const lines = events.map((e) =>
    canonicalJson(e as unknown as Record<string, unknown>)
  );
  return Buffer.concat(lines.flatMap((line) => [line, Buffer.from("\n")]));
}
