/**
 * Thin client over the verification service.
 *
 * Every network call the app makes goes through this module, and the only
 * state-changing request it ever issues is POST /api/verify; everything
 * else is a GET. Tests intercept fetch to enforce exactly that.
 */

import type {
  DecisionInput,
  EvaluationSnapshot,
  ModelInfo,
  QueueEntry,
  RetrievePayload,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly base: string = '',
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) {
      throw new ApiError(await safeDetail(response), response.status);
    }
    return (await response.json()) as T;
  }

  loadModels(): Promise<ModelInfo[]> {
    return this.get('/api/models');
  }

  loadQueue(limit?: number, model?: string): Promise<QueueEntry[]> {
    const params = new URLSearchParams();
    if (limit !== undefined) params.set('limit', String(limit));
    if (model) params.set('models', model);
    const suffix = params.size ? `?${params.toString()}` : '';
    return this.get(`/api/queue${suffix}`);
  }

  retrieve(query: string, k: number, model?: string): Promise<RetrievePayload> {
    const params = new URLSearchParams({ query, k: String(k) });
    if (model) params.set('model', model);
    return this.get(`/api/retrieve?${params.toString()}`);
  }

  /** mAP over the currently confirmed pairs; null while nothing is confirmed. */
  async fetchEvaluation(model?: string): Promise<EvaluationSnapshot | null> {
    const params = new URLSearchParams({ mode: 'test' });
    if (model) params.set('model', model);
    const response = await this.fetchFn(`${this.base}/api/evaluate?${params.toString()}`);
    if (response.status === 409) return null;
    if (!response.ok) {
      throw new ApiError(await safeDetail(response), response.status);
    }
    return (await response.json()) as EvaluationSnapshot;
  }

  /** The one and only mutating call. */
  async submitVerification(decision: DecisionInput): Promise<void> {
    const response = await this.fetchFn(`${this.base}/api/verify`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(decision),
    });
    if (!response.ok) {
      throw new ApiError(await safeDetail(response), response.status);
    }
  }

  imageUrl(path: string): string {
    return this.base + path;
  }
}

async function safeDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? `HTTP ${response.status}`;
  } catch {
    return `HTTP ${response.status}`;
  }
}
