/** Typed client for the review service HTTP API. */

export type VerdictStatus = "kept" | "removed";

export type RemovalReason =
  | "inappropriate"
  | "text_screenshot"
  | "under_exposed"
  | "duplicate"
  | "other";

export const REMOVAL_REASONS: readonly RemovalReason[] = [
  "inappropriate",
  "text_screenshot",
  "under_exposed",
  "duplicate",
  "other",
];

export interface QueueItem {
  image_id: string;
  url: string;
}

export interface QueueBatch {
  items: QueueItem[];
  lease_seconds: number;
}

export interface VerdictRequest {
  image_id: string;
  status: VerdictStatus;
  reason?: RemovalReason;
  reviewer: string;
  /** Client session marker; the server tolerates and ignores it. */
  nonce?: string;
}

export interface VerdictAck {
  ok: boolean;
  seq: number;
  image_id: string;
}

export interface Stats {
  total: number;
  pending: number;
  leased: number;
  kept: number;
  removed: number;
  by_reason: Record<string, number>;
}

export interface FinalizeReport {
  kept: string[];
  removed: Record<string, string[]>;
  counts: {
    total: number;
    kept: number;
    removed: number;
    forced_keep: number;
  };
}

/**
 * The server answered with a rejection (4xx/5xx). Distinct from transport
 * failures, which surface as the fetch rejection itself: a rejection means
 * we are online and retrying the same payload is pointless.
 */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export interface ReviewApi {
  nextBatch(reviewer: string, n: number): Promise<QueueBatch>;
  submitVerdict(verdict: VerdictRequest): Promise<VerdictAck>;
  stats(): Promise<Stats>;
  finalize(force?: boolean): Promise<FinalizeReport>;
  imageUrl(item: QueueItem): string;
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class HttpReviewApi implements ReviewApi {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    // bind lazily so a bare global `fetch` keeps its own receiver
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const body = (await resp.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  nextBatch(reviewer: string, n: number): Promise<QueueBatch> {
    const q = `reviewer=${encodeURIComponent(reviewer)}&n=${n}`;
    return this.request<QueueBatch>(`/queue/next?${q}`);
  }

  submitVerdict(verdict: VerdictRequest): Promise<VerdictAck> {
    return this.request<VerdictAck>("/verdict", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(verdict),
    });
  }

  stats(): Promise<Stats> {
    return this.request<Stats>("/stats");
  }

  finalize(force = false): Promise<FinalizeReport> {
    return this.request<FinalizeReport>("/finalize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ force }),
    });
  }

  imageUrl(item: QueueItem): string {
    return `${this.baseUrl}${item.url}`;
  }
}
