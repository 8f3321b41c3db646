/**
 * Session state for one annotator tab.
 *
 * Optimistic UI with the server as the source of truth: decisions post
 * immediately, failures land in a retry queue, and the live mAP widget
 * refreshes from the service after every accepted decision.
 */

import { ApiClient, ApiError } from './api.js';
import type {
  DecisionInput,
  DecisionStatus,
  EvaluationSnapshot,
  ModelInfo,
  QueueEntry,
  RetrievePayload,
} from './types.js';

export const RETRY_DELAY_MS = 4000;
export const CANDIDATES_PER_QUERY = 5;

export interface SessionOptions {
  annotator: string;
  model?: string;
  k?: number;
  /** test seam: scheduling a retry tick (defaults to setTimeout) */
  schedule?: (fn: () => void, ms: number) => void;
}

function pairKey(query: string, gallery: string): string {
  return `${query}->${gallery}`;
}

export class SessionStore {
  models: ModelInfo[] = [];
  model: ModelInfo | null = null;
  queue: QueueEntry[] = [];
  currentIndex = 0;
  review: RetrievePayload | null = null;
  evaluation: EvaluationSnapshot | null = null;
  banner: string | null = null;
  reviewError: string | null = null;

  /** session-local decision log, latest per pair */
  readonly decisions = new Map<string, DecisionStatus>();
  /** decisions waiting for a retry after a network failure */
  readonly pendingRetries: DecisionInput[] = [];
  private readonly inFlight = new Set<string>();
  private readonly listeners: Array<() => void> = [];
  private readonly schedule: (fn: () => void, ms: number) => void;

  constructor(
    readonly api: ApiClient,
    readonly options: SessionOptions,
  ) {
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async init(): Promise<void> {
    try {
      this.models = await this.api.loadModels();
      this.model =
        this.models.find((m) => m.name === this.options.model) ?? this.models[0] ?? null;
    } catch (error) {
      this.banner = `service unreachable: ${message(error)}`;
      this.notify();
      this.schedule(() => void this.init(), RETRY_DELAY_MS);
      return;
    }
    await this.reloadQueue();
    await this.refreshEvaluation();
    if (this.queue.length) await this.open(0);
  }

  async reloadQueue(): Promise<void> {
    try {
      this.queue = await this.api.loadQueue(undefined, this.model?.name);
      this.banner = null;
    } catch (error) {
      // non-blocking: keep whatever queue we had and retry later
      this.banner = `queue unavailable: ${message(error)}`;
      this.schedule(() => void this.reloadQueue(), RETRY_DELAY_MS);
    }
    this.notify();
  }

  /** decided / total progress over the served queue */
  progress(): { decided: number; total: number } {
    let decided = 0;
    for (const entry of this.queue) {
      if (entry.decided || this.hasLocalDecision(entry.trajectory)) decided += 1;
    }
    return { decided, total: this.queue.length };
  }

  hasLocalDecision(queryTrajectory: string): boolean {
    for (const key of this.decisions.keys()) {
      if (key.startsWith(`${queryTrajectory}->`)) return true;
    }
    return false;
  }

  queueComplete(): boolean {
    const { decided, total } = this.progress();
    return total > 0 && decided === total;
  }

  current(): QueueEntry | null {
    return this.queue[this.currentIndex] ?? null;
  }

  async open(index: number): Promise<void> {
    if (!this.queue.length) return;
    this.currentIndex = Math.min(Math.max(index, 0), this.queue.length - 1);
    const entry = this.queue[this.currentIndex];
    this.review = null;
    this.reviewError = null;
    this.notify();
    try {
      this.review = await this.api.retrieve(
        entry.trajectory,
        this.options.k ?? CANDIDATES_PER_QUERY,
        this.model?.name,
      );
    } catch (error) {
      this.reviewError = message(error);
    }
    this.notify();
  }

  async next(): Promise<void> {
    if (this.currentIndex + 1 < this.queue.length) {
      await this.open(this.currentIndex + 1);
    }
  }

  async previous(): Promise<void> {
    if (this.currentIndex > 0) {
      await this.open(this.currentIndex - 1);
    }
  }

  /**
   * Record a decision for a candidate of the current query. One decision
   * may be in flight per pair; duplicates while it runs are dropped
   * (the server applies latest-wins on re-decisions later).
   */
  async decide(galleryTrajectory: string, status: DecisionStatus): Promise<void> {
    const entry = this.current();
    if (!entry) return;
    const key = pairKey(entry.trajectory, galleryTrajectory);
    if (this.inFlight.has(key)) return;

    const decision: DecisionInput = {
      pair: { query: entry.trajectory, gallery: galleryTrajectory },
      status,
      annotator: this.options.annotator,
    };
    this.inFlight.add(key);
    this.decisions.set(key, status);
    this.notify();
    try {
      await this.api.submitVerification(decision);
      this.banner = null;
      await this.refreshEvaluation();
    } catch (error) {
      if (error instanceof ApiError) {
        // the service rejected it: roll back the optimistic record
        this.decisions.delete(key);
        this.banner = `decision rejected: ${error.message}`;
      } else {
        this.queueRetry(decision);
      }
    } finally {
      this.inFlight.delete(key);
    }
    this.notify();
  }

  /** Decide on the current query's top candidate via keyboard shortcut. */
  async decideTop(status: DecisionStatus): Promise<void> {
    const top = this.review?.candidates[0];
    if (top) await this.decide(top.trajectory, status);
  }

  private queueRetry(decision: DecisionInput): void {
    this.pendingRetries.push(decision);
    this.banner = `offline: ${this.pendingRetries.length} decision(s) queued`;
    this.schedule(() => void this.flushRetries(), RETRY_DELAY_MS);
  }

  async flushRetries(): Promise<void> {
    while (this.pendingRetries.length) {
      const decision = this.pendingRetries[0];
      try {
        await this.api.submitVerification(decision);
        this.pendingRetries.shift();
      } catch (error) {
        if (error instanceof ApiError) {
          this.pendingRetries.shift(); // permanent rejection: do not loop
          this.decisions.delete(pairKey(decision.pair.query, decision.pair.gallery));
          this.banner = `decision rejected: ${error.message}`;
          this.notify();
          continue;
        }
        this.schedule(() => void this.flushRetries(), RETRY_DELAY_MS);
        this.notify();
        return;
      }
    }
    this.banner = null;
    await this.refreshEvaluation();
    this.notify();
  }

  async refreshEvaluation(): Promise<void> {
    try {
      this.evaluation = await this.api.fetchEvaluation(this.model?.name);
    } catch {
      // widget keeps its last value; decisions were already accepted
    }
    this.notify();
  }
}

function message(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
