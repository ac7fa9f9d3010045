/**
 * Background delivery queue: batches events into NDJSON POSTs against the
 * ingest server, tolerates being offline, and retries with backoff.
 *
 * Delivery is at-least-once; the server dedups by event_id, so resending a
 * batch after an ambiguous failure is always safe.
 */

import { Event, toNdjson } from "./events";

export interface Receipt {
  accepted: Array<{ event_id: string; seq: number }>;
  duplicates: string[];
  rejected: Array<{ ref: string; violation: string }>;
}

export type QueueStatus = "idle" | "sending" | "offline" | "stopped";

export type FetchLike = (
  url: string,
  init: { method: string; headers: Record<string, string>; body: Uint8Array }
) => Promise<{ ok: boolean; status: number; text(): Promise<string> }>;

export interface QueueOptions {
  serverUrl: string;
  authToken: string;
  maxBatch?: number;
  retryBaseMs?: number;
  retryMaxMs?: number;
  fetchImpl?: FetchLike;
  /** Called when the server rejects events (surface as a notification). */
  onRejected?: (rejected: Receipt["rejected"]) => void;
  onStatusChange?: (status: QueueStatus) => void;
}

const HEX_ID = /^[0-9a-f]{64}$/;

export class EventQueue {
  private pending: Event[] = [];
  private timer: NodeJS.Timeout | null = null;
  private flushing: Promise<void> | null = null;
  private retryMs: number;
  private statusValue: QueueStatus = "idle";
  private readonly opts: Required<Pick<QueueOptions, "maxBatch" | "retryBaseMs" | "retryMaxMs">> &
    QueueOptions;

  constructor(options: QueueOptions) {
    this.opts = {
      maxBatch: 500,
      retryBaseMs: 1000,
      retryMaxMs: 60_000,
      ...options,
    };
    this.retryMs = this.opts.retryBaseMs;
  }

  get status(): QueueStatus {
    return this.statusValue;
  }

  get pendingCount(): number {
    return this.pending.length;
  }

  private setStatus(status: QueueStatus): void {
    if (status !== this.statusValue) {
      this.statusValue = status;
      this.opts.onStatusChange?.(status);
    }
  }

  /** Queue an event and schedule a background send. */
  enqueue(event: Event): void {
    this.pending.push(event);
    this.schedule(0);
  }

  private schedule(delayMs: number): void {
    if (this.timer !== null || this.statusValue === "stopped") {
      return;
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.flush().catch(() => {
        // flush never rejects; belt and braces for the event loop.
      });
    }, delayMs);
    // Don't keep the process alive just for retries.
    this.timer.unref?.();
  }

  /**
   * Send everything pending now. Resolves when the queue is drained or the
   * server is unreachable (in which case a retry stays scheduled).
   */
  flush(): Promise<void> {
    if (this.flushing === null) {
      this.flushing = this.flushLoop().finally(() => {
        this.flushing = null;
      });
    }
    return this.flushing;
  }

  private async flushLoop(): Promise<void> {
    while (this.pending.length > 0 && this.statusValue !== "stopped") {
      const batch = this.pending.slice(0, this.opts.maxBatch);
      let receipt: Receipt;
      try {
        receipt = await this.post(batch);
      } catch {
        this.setStatus("offline");
        this.schedule(this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, this.opts.retryMaxMs);
        return;
      }
      this.retryMs = this.opts.retryBaseMs;

      const settled = new Set<string>(receipt.duplicates);
      for (const entry of receipt.accepted) {
        settled.add(entry.event_id);
      }
      for (const entry of receipt.rejected) {
        // Rejections referencing a concrete event_id are final: drop them.
        if (HEX_ID.test(entry.ref)) {
          settled.add(entry.ref);
        }
      }
      const before = this.pending.length;
      this.pending = this.pending.filter((e) => !settled.has(e.event_id));
      if (receipt.rejected.length > 0) {
        this.opts.onRejected?.(receipt.rejected);
      }
      if (this.pending.length === before) {
        // Nothing advanced (e.g. rejection without a usable ref): stop
        // rather than hot-loop; the events stay queued for the next flush.
        break;
      }
    }
    if (this.statusValue !== "stopped") {
      this.setStatus(this.pending.length === 0 ? "idle" : "sending");
    }
  }

  private async post(batch: Event[]): Promise<Receipt> {
    this.setStatus("sending");
    const fetchImpl: FetchLike = this.opts.fetchImpl ?? (fetch as unknown as FetchLike);
    const response = await fetchImpl(`${this.opts.serverUrl}/v1/events`, {
      method: "POST",
      headers: {
        Authorization: `Bearer ${this.opts.authToken}`,
        "Content-Type": "application/x-ndjson",
      },
      body: toNdjson(batch),
    });
    const body = await response.text();
    if (!response.ok) {
      throw new Error(`ingest failed: HTTP ${response.status} ${body.slice(0, 200)}`);
    }
    const receipt = JSON.parse(body) as Receipt;
    return {
      accepted: receipt.accepted ?? [],
      duplicates: receipt.duplicates ?? [],
      rejected: receipt.rejected ?? [],
    };
  }

  /** Stop retrying; queued events are dropped (capture is best-effort once stopped). */
  stop(): void {
    this.setStatus("stopped");
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}
