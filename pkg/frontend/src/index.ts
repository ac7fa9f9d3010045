export {
  canonicalJson,
  canonicalize,
  computeEventId,
  formatTimestamp,
  makeEvent,
  parseTimestamp,
  toNdjson,
  SCHEMA_VERSION,
} from "./events";
export type { DiagnosticLevel, Event, EventInit, EventKind, Hunk } from "./events";
export { applyDiff, computeDiff, countLines, joinLines, PatchMismatch, splitLines } from "./diff";
export { resolveConfig, DEFAULT_DEBOUNCE_MS, MIN_DEBOUNCE_MS } from "./config";
export type { ExtensionConfig } from "./config";
export { EventQueue } from "./queue";
export type { FetchLike, QueueOptions, QueueStatus, Receipt } from "./queue";
export {
  CaptureTracker,
  EXTENSION_MARKER,
  MAX_CAPTURED_BYTES,
  SNAPSHOT_EVERY_DIFFS,
} from "./tracker";
export type { EditorDiagnostic } from "./tracker";
