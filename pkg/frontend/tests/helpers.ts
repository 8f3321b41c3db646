import { ApiClient, type FetchLike } from '../src/api.js';
import { SessionStore, type SessionOptions } from '../src/store.js';
import type { Candidate, EvaluationSnapshot, ModelInfo, QueueEntry } from '../src/types.js';

export const MODEL: ModelInfo = {
  name: 'ensemble',
  streams: ['q1_sliced', 'q2_sliced', 'head', 'dorsal_fin'],
  lambda: 0.75,
  tau: 0.7,
  k: 20,
};

export function candidate(trajectory: string, ranks: number[], s: number[]): Candidate {
  const breakdown: Candidate['breakdown'] = {};
  MODEL.streams.forEach((stream, i) => {
    breakdown[stream] = {
      cos: 0.5 + 0.1 * i,
      rank: ranks[i],
      rr: 1 / (MODEL.k + ranks[i]),
      s: s[i],
    };
  });
  const rrSum = Object.values(breakdown).reduce((acc, v) => acc + v.rr, 0);
  const sSum = Object.values(breakdown).reduce((acc, v) => acc + v.s, 0);
  return {
    trajectory,
    sample: `${trajectory}:0`,
    score: MODEL.lambda * rrSum + (1 - MODEL.lambda) * sSum,
    breakdown,
    images: [`/api/image?sample=${trajectory}:0`],
  };
}

export interface FakeService {
  fetchFn: FetchLike;
  calls: Array<{ url: string; method: string }>;
  failNetwork: boolean;
  verifications: Array<Record<string, unknown>>;
  queue: QueueEntry[];
  evaluation: EvaluationSnapshot | null;
}

export function fakeService(): FakeService {
  const queue: QueueEntry[] = [
    { trajectory: '1:3', top_score: 1.14, proposed: '2:2', model: 'ensemble', decided: false },
    { trajectory: '1:1', top_score: 1.1, proposed: '2:5', model: 'ensemble', decided: false },
    { trajectory: '1:7', top_score: 0.9, proposed: '2:9', model: 'ensemble', decided: false },
  ];
  const service: FakeService = {
    calls: [],
    failNetwork: false,
    verifications: [],
    queue,
    evaluation: null,
    fetchFn: async (url: string, init?: RequestInit) => {
      const method = init?.method ?? 'GET';
      service.calls.push({ url, method });
      if (service.failNetwork) throw new TypeError('fetch failed');
      const path = url.split('?')[0];
      if (path === '/api/models') return json([MODEL]);
      if (path === '/api/queue') return json(service.queue);
      if (path === '/api/retrieve') {
        const query = new URL(url, 'http://x').searchParams.get('query')!;
        return json({
          query,
          model: 'ensemble',
          query_images: [`/api/image?sample=${query}:0`, `/api/image?sample=${query}:1`],
          candidates: [
            candidate('2:2', [1, 1, 2, 1], [1.0, 0.9, 0.8, 1.0]),
            candidate('2:5', [2, 3, 1, 4], [0.6, 0.5, 0.9, 0.4]),
            candidate('2:9', [7, 6, 9, 5], [0.2, 0.1, 0.05, 0.3]),
          ],
        });
      }
      if (path === '/api/evaluate') {
        if (!service.evaluation) return json({ detail: 'no confirmed pairs' }, 409);
        return json(service.evaluation);
      }
      if (path === '/api/verify' && method === 'POST') {
        const body = JSON.parse(String(init?.body)) as Record<string, unknown>;
        service.verifications.push(body);
        if ((body.status as string) === 'confirmed') {
          service.evaluation = {
            model: 'ensemble',
            map: 1.0,
            ci: [1.0, 1.0],
            n_queries: 5,
            n_trajectories: service.verifications.filter(
              (v) => (v.status as string) === 'confirmed',
            ).length,
          };
        }
        return json(body);
      }
      return json({ detail: `unexpected ${method} ${url}` }, 500);
    },
  };
  return service;
}

function json(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export interface TestSession {
  store: SessionStore;
  service: FakeService;
  /** manually fire scheduled retries instead of waiting on timers */
  pending: Array<() => void>;
}

export function makeSession(options?: Partial<SessionOptions>): TestSession {
  const service = fakeService();
  const pending: Array<() => void> = [];
  const store = new SessionStore(new ApiClient(service.fetchFn), {
    annotator: 'tester',
    schedule: (fn) => pending.push(fn),
    ...options,
  });
  return { store, service, pending };
}
