/** Review-session state machine: queue ordering, optimistic verdicts with
 * rollback, at most one request in flight per finding, and retry of verdicts
 * lost to network failures. Pure logic — no DOM. */

import {
  ApiClient,
  ApiError,
  Finding,
  FindingFilter,
  ReviewState,
  Verdict,
} from "./api.js";

export interface PendingVerdict {
  findingId: string;
  verdict: Verdict;
  correctedClass?: string;
}

export interface VerdictOutcome {
  ok: boolean;
  /** server error surfaced verbatim (conflicts etc.); absent on success */
  error?: string;
  /** true when the verdict was kept for retry after a network failure */
  queued?: boolean;
}

const VERDICT_STATE: Record<Verdict, ReviewState> = {
  confirm: "confirmed",
  reclassify: "reclassified",
  reject: "rejected",
};

export class ReviewSession {
  private findings: Finding[] = [];
  private inFlight = new Set<string>();
  private retryQueue: PendingVerdict[] = [];
  private verdictsThisSession = 0;
  private readonly startedAt: number;

  constructor(
    private readonly api: ApiClient,
    private readonly now: () => number = () => Date.now(),
  ) {
    this.startedAt = this.now();
  }

  async load(filter: FindingFilter = {}): Promise<void> {
    this.findings = await this.api.listFindings(filter);
  }

  all(): Finding[] {
    return [...this.findings];
  }

  pending(): Finding[] {
    return this.findings.filter((f) => f.review === "pending");
  }

  get(findingId: string): Finding | undefined {
    return this.findings.find((f) => f.id === findingId);
  }

  /** The next pending finding after the given one, wrapping around. */
  nextPending(afterId?: string): Finding | undefined {
    const queue = this.pending();
    if (queue.length === 0) return undefined;
    if (afterId === undefined) return queue[0];
    const i = queue.findIndex((f) => f.id === afterId);
    return queue[(i + 1) % queue.length] ?? queue[0];
  }

  hasInFlight(findingId: string): boolean {
    return this.inFlight.has(findingId);
  }

  queuedRetries(): PendingVerdict[] {
    return [...this.retryQueue];
  }

  /** Verdicts posted per minute since the session started. */
  throughputPerMinute(): number {
    const minutes = (this.now() - this.startedAt) / 60_000;
    return minutes <= 0 ? 0 : this.verdictsThisSession / minutes;
  }

  /**
   * Post a verdict. The local card updates optimistically and is rolled back
   * if the gateway rejects it; a network failure keeps the optimistic state
   * and queues the verdict for retry.
   */
  async submit(
    findingId: string,
    verdict: Verdict,
    correctedClass?: string,
  ): Promise<VerdictOutcome> {
    const finding = this.get(findingId);
    if (finding === undefined) return { ok: false, error: `unknown finding ${findingId}` };
    if (this.inFlight.has(findingId)) {
      return { ok: false, error: "a verdict for this finding is already in flight" };
    }
    const targetState = VERDICT_STATE[verdict];
    if (finding.review === targetState &&
        (verdict !== "reclassify" || finding.corrected_class === correctedClass)) {
      // idempotent double-submit: nothing to do, nothing to send
      return { ok: true };
    }

    const before = { review: finding.review, corrected: finding.corrected_class };
    finding.review = targetState;
    finding.corrected_class = verdict === "reclassify" ? (correctedClass ?? null) : null;

    this.inFlight.add(findingId);
    try {
      const updated = await this.api.postReview(findingId, verdict, correctedClass);
      finding.review = updated.review;
      finding.corrected_class = updated.corrected_class;
      this.verdictsThisSession += 1;
      return { ok: true };
    } catch (err) {
      if (err instanceof ApiError) {
        // the gateway refused: roll the optimistic update back, surface verbatim
        finding.review = before.review;
        finding.corrected_class = before.corrected;
        return { ok: false, error: err.message };
      }
      // network failure: keep the optimistic state, retry later
      this.retryQueue.push({ findingId, verdict, correctedClass });
      return { ok: true, queued: true };
    } finally {
      this.inFlight.delete(findingId);
    }
  }

  /** Replay queued verdicts; entries that fail on the server are dropped
   * (their findings roll back), network failures stay queued. */
  async flushRetries(): Promise<number> {
    const queue = this.retryQueue;
    this.retryQueue = [];
    let delivered = 0;
    for (const item of queue) {
      try {
        const updated = await this.api.postReview(
          item.findingId,
          item.verdict,
          item.correctedClass,
        );
        const finding = this.get(item.findingId);
        if (finding !== undefined) {
          finding.review = updated.review;
          finding.corrected_class = updated.corrected_class;
        }
        this.verdictsThisSession += 1;
        delivered += 1;
      } catch (err) {
        if (err instanceof ApiError) {
          const finding = this.get(item.findingId);
          if (finding !== undefined) finding.review = "pending";
        } else {
          this.retryQueue.push(item);
        }
      }
    }
    return delivered;
  }
}
