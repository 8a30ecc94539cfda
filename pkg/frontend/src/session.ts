/**
 * DOM-free review session core.
 *
 * Owns the batch cursor, the two-step remove flow, and the offline
 * verdict buffer. Rules the rest of the UI relies on:
 *
 *  - every decision maps to exactly one POST; repeating the same verdict
 *    on the same image is a no-op, changing it is a new decision;
 *  - a verdict counts as synced only after a server ack; transport
 *    failures park the verdict in a FIFO buffer (one slot per image,
 *    newest decision wins) that is flushed, in order, before anything
 *    else talks to the server;
 *  - the cursor stays inside the current batch, and a new batch is
 *    requested only once the buffer is empty.
 */

import {
  ApiError,
  type QueueItem,
  type RemovalReason,
  type ReviewApi,
  type Stats,
  type VerdictRequest,
  type VerdictStatus,
} from "./api.js";
import { BROWSE_HINT, REASON_HINT, decodeKey, type KeyAction } from "./keyboard.js";

export type Phase = "idle" | "reviewing" | "awaiting-reason" | "done";

export interface Decision {
  status: VerdictStatus;
  reason?: RemovalReason;
  synced: boolean;
}

export interface RejectedVerdict {
  verdict: VerdictRequest;
  status: number;
  detail: string;
}

export interface SessionOptions {
  batchSize?: number;
  nonce?: string;
  onChange?: () => void;
}

export function makeNonce(): string {
  const c = (globalThis as { crypto?: Crypto }).crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return `s-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 10)}`;
}

export class ReviewSession {
  readonly reviewer: string;
  readonly nonce: string;
  readonly batchSize: number;

  batch: QueueItem[] = [];
  cursor = 0;
  phase: Phase = "idle";
  offline = false;
  zoomToFit = false;
  hint = BROWSE_HINT;
  stats: Stats | null = null;
  /** Buffered verdicts the server rejected outright during a flush. */
  rejected: RejectedVerdict[] = [];

  private readonly api: ReviewApi;
  private readonly onChange: () => void;
  private buffer: VerdictRequest[] = [];
  private decisions = new Map<string, Decision>();

  constructor(api: ReviewApi, reviewer: string, opts: SessionOptions = {}) {
    if (!reviewer) throw new Error("reviewer id must be non-empty");
    this.api = api;
    this.reviewer = reviewer;
    this.batchSize = opts.batchSize ?? 20;
    this.nonce = opts.nonce ?? makeNonce();
    this.onChange = opts.onChange ?? (() => {});
  }

  get current(): QueueItem | null {
    return this.batch[this.cursor] ?? null;
  }

  get pendingSync(): number {
    return this.buffer.length;
  }

  get decidedCount(): number {
    return this.decisions.size;
  }

  decisionFor(imageId: string): Decision | undefined {
    return this.decisions.get(imageId);
  }

  async start(): Promise<void> {
    await this.loadBatch();
  }

  /** Route one raw key value; returns the action that was taken. */
  async handleKey(key: string): Promise<KeyAction> {
    const action = decodeKey(key, this.phase === "awaiting-reason");
    switch (action.kind) {
      case "keep":
        await this.keep();
        break;
      case "begin-remove":
        this.beginRemove();
        break;
      case "reason":
        await this.removeWith(action.reason);
        break;
      case "cancel":
        this.cancelRemove();
        break;
      case "next":
        this.move(1);
        break;
      case "prev":
        this.move(-1);
        break;
      case "zoom":
        this.zoomToFit = !this.zoomToFit;
        this.changed();
        break;
      case "none":
        this.hint =
          this.phase === "awaiting-reason"
            ? `"${key}" is not a reason key · ${REASON_HINT}`
            : `"${key}" does nothing · ${BROWSE_HINT}`;
        this.changed();
        break;
    }
    return action;
  }

  async keep(): Promise<void> {
    if (this.phase !== "reviewing") return;
    await this.decide("kept");
  }

  beginRemove(): void {
    if (this.phase !== "reviewing" || !this.current) return;
    this.phase = "awaiting-reason";
    this.hint = REASON_HINT;
    this.changed();
  }

  async removeWith(reason: RemovalReason): Promise<void> {
    if (this.phase !== "awaiting-reason") return;
    this.phase = "reviewing";
    await this.decide("removed", reason);
  }

  cancelRemove(): void {
    if (this.phase !== "awaiting-reason") return;
    this.phase = "reviewing";
    this.hint = `removal cancelled · ${BROWSE_HINT}`;
    this.changed();
  }

  move(step: number): void {
    if (this.batch.length === 0) return;
    const next = Math.min(this.batch.length - 1, Math.max(0, this.cursor + step));
    if (next !== this.cursor) {
      this.cursor = next;
      this.hint = BROWSE_HINT;
    }
    this.changed();
  }

  /**
   * Fetch the next batch. The buffer is flushed first; while anything
   * remains unsynced the session refuses to take on new items, so a
   * dropped connection can never strand local verdicts.
   */
  async loadBatch(): Promise<void> {
    if (this.buffer.length > 0) {
      await this.flush();
      if (this.buffer.length > 0) {
        this.changed();
        return;
      }
    }
    try {
      const batch = await this.api.nextBatch(this.reviewer, this.batchSize);
      this.offline = false;
      if (batch.items.length === 0) {
        this.batch = [];
        this.cursor = 0;
        this.phase = "done";
        this.hint = "queue finished";
        await this.refreshStats();
      } else {
        this.batch = batch.items;
        this.cursor = 0;
        this.phase = "reviewing";
        this.hint = BROWSE_HINT;
      }
    } catch (err) {
      this.noteFailure(err);
    }
    this.changed();
  }

  /** Re-send buffered verdicts oldest-first; stop at the first transport failure. */
  async flush(): Promise<void> {
    while (this.buffer.length > 0) {
      const verdict = this.buffer[0]!;
      try {
        await this.api.submitVerdict(verdict);
        this.offline = false;
        this.buffer.shift();
        this.decisions.set(verdict.image_id, {
          status: verdict.status,
          reason: verdict.reason,
          synced: true,
        });
      } catch (err) {
        if (err instanceof ApiError) {
          // the server is reachable but said no: keep the evidence and
          // move on, otherwise one poisoned entry blocks the whole queue
          this.offline = false;
          this.buffer.shift();
          this.decisions.delete(verdict.image_id);
          this.rejected.push({ verdict, status: err.status, detail: err.message });
          this.hint = `server rejected ${verdict.image_id}: ${err.message}`;
        } else {
          this.offline = true;
          break;
        }
      }
    }
    this.changed();
  }

  /** Flush, then resume: refresh stats and pull a batch if this one is spent. */
  async reconnect(): Promise<void> {
    await this.flush();
    if (this.offline) return;
    if (this.phase === "done" || this.batchSpent()) {
      await this.loadBatch();
    } else {
      await this.refreshStats();
      this.changed();
    }
  }

  async refreshStats(): Promise<void> {
    try {
      this.stats = await this.api.stats();
      this.offline = false;
    } catch (err) {
      this.noteFailure(err);
    }
  }

  private batchSpent(): boolean {
    return (
      this.batch.length > 0 &&
      this.batch.every((item) => this.decisions.has(item.image_id))
    );
  }

  private async decide(status: VerdictStatus, reason?: RemovalReason): Promise<void> {
    const item = this.current;
    if (!item) return;

    const latest = this.decisions.get(item.image_id);
    if (latest && latest.status === status && latest.reason === reason) {
      this.hint = `${item.image_id} already ${status} · moving on`;
      await this.advance();
      return;
    }

    const verdict: VerdictRequest = {
      image_id: item.image_id,
      status,
      reviewer: this.reviewer,
      nonce: this.nonce,
    };
    if (reason !== undefined) verdict.reason = reason;

    if (this.offline) {
      this.enqueue(verdict);
      await this.advance();
      return;
    }
    try {
      await this.api.submitVerdict(verdict);
      this.decisions.set(item.image_id, { status, reason, synced: true });
      this.hint = BROWSE_HINT;
      await this.advance();
    } catch (err) {
      if (err instanceof ApiError) {
        // rejection, not an outage: leave local state untouched so the
        // screen cannot claim a verdict the server never accepted
        this.hint = `server rejected ${item.image_id}: ${err.message}`;
        this.changed();
      } else {
        this.noteFailure(err);
        this.enqueue(verdict);
        await this.advance();
      }
    }
  }

  /** One buffer slot per image: re-deciding replaces in place, keeping FIFO order. */
  private enqueue(verdict: VerdictRequest): void {
    const at = this.buffer.findIndex((v) => v.image_id === verdict.image_id);
    if (at >= 0) this.buffer[at] = verdict;
    else this.buffer.push(verdict);
    this.decisions.set(verdict.image_id, {
      status: verdict.status,
      reason: verdict.reason,
      synced: false,
    });
    this.hint = `offline · ${this.buffer.length} verdict(s) queued`;
  }

  private async advance(): Promise<void> {
    if (this.cursor < this.batch.length - 1) {
      this.cursor += 1;
      this.changed();
    } else {
      await this.loadBatch();
    }
  }

  private noteFailure(err: unknown): void {
    this.offline = true;
    const msg = err instanceof Error ? err.message : String(err);
    this.hint = `connection lost (${msg}) · verdicts are buffered locally`;
  }

  private changed(): void {
    this.onChange();
  }
}
