/**
 * Live round-trip against the real verification service: confirm a match,
 * watch the decision log grow, and see the evaluation endpoint reflect the
 * new pair. Requires the reid-fuse CLI on PATH (pip install -e ..).
 */

import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync, existsSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { recomputeFusedScore, SCORE_TOLERANCE } from '../src/score.js';
import { SessionStore } from '../src/store.js';

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

const SYNTH_SPEC = `[synth]
n_ids = 6
images_per_id = 4
dim = 16
streams = q1_sliced, q2_sliced, head, dorsal_fin
sigma_traj = 0.3
sigma_obs = 0.2
corruption = 0.0
seed = 21
`;

function cliAvailable(): boolean {
  try {
    execFileSync('reid-fuse', ['--help'], { stdio: 'ignore' });
    return true;
  } catch {
    return false;
  }
}

const available = cliAvailable();

describe.skipIf(!available)('live service round-trip', () => {
  let server: ChildProcess;
  let datasetDir: string;
  let logPath: string;

  beforeAll(async () => {
    const root = mkdtempSync(join(tmpdir(), 'verify-ui-'));
    const specPath = join(root, 'synth.ini');
    writeFileSync(specPath, SYNTH_SPEC);
    const raw = join(root, 'raw');
    datasetDir = join(root, 'dataset');
    execFileSync('reid-fuse', ['synth', '--spec', specPath, '--out', raw]);
    execFileSync('reid-fuse', [
      'ingest', '--detections', join(raw, 'detections.txt'),
      '--embeddings', join(raw, 'embeddings'), '--config', join(raw, 'config.ini'),
      '--out', datasetDir,
    ]);
    logPath = join(datasetDir, 'verifications.log');

    server = spawn('reid-fuse',
                   ['serve', '--dataset', datasetDir, '--port', String(PORT)],
                   { stdio: 'ignore' });
    for (let attempt = 0; attempt < 60; attempt++) {
      try {
        const response = await fetch(`${BASE}/api/models`);
        if (response.ok) return;
      } catch {
        // not up yet
      }
      await new Promise((resolve) => setTimeout(resolve, 500));
    }
    throw new Error('service did not come up');
  });

  afterAll(() => {
    server?.kill();
  });

  it('confirming a match grows the log and moves the live mAP', async () => {
    const store = new SessionStore(new ApiClient((url, init) => fetch(url, init), BASE), {
      annotator: 'roundtrip',
    });
    await store.init();

    expect(store.queue.length).toBe(6);
    expect(store.evaluation).toBeNull(); // fresh session: nothing confirmed
    expect(existsSync(logPath)).toBe(false);

    const top = store.review!.candidates[0];
    await store.decide(top.trajectory, 'confirmed');

    const log = readFileSync(logPath, 'utf-8').trim().split('\n');
    expect(log.length).toBe(1);
    expect(log[0]).toContain(`query=${store.queue[0].trajectory}`);
    expect(log[0]).toContain(`gallery=${top.trajectory}`);
    expect(log[0]).toContain('status=confirmed');

    expect(store.evaluation).not.toBeNull();
    expect(store.evaluation!.n_trajectories).toBe(1);
    expect(store.evaluation!.map).toBeGreaterThan(0);

    // a second confirmation widens the evaluated set
    await store.next();
    const second = store.review!.candidates[0];
    await store.decide(second.trajectory, 'confirmed');
    expect(readFileSync(logPath, 'utf-8').trim().split('\n').length).toBe(2);
    expect(store.evaluation!.n_trajectories).toBe(2);
  });

  it('client-side fused-score recomputation matches the wire payload', async () => {
    const api = new ApiClient((url, init) => fetch(url, init), BASE);
    const [model] = await api.loadModels();
    const queue = await api.loadQueue();
    let checked = 0;
    for (const entry of queue.slice(0, 3)) {
      const payload = await api.retrieve(entry.trajectory, 5, model.name);
      for (const candidate of payload.candidates) {
        const recomputed = recomputeFusedScore(candidate.breakdown, model.lambda);
        expect(Math.abs(recomputed - candidate.score)).toBeLessThanOrEqual(SCORE_TOLERANCE);
        expect(Object.keys(candidate.breakdown).sort()).toEqual([...model.streams].sort());
        checked += 1;
      }
    }
    expect(checked).toBe(15);
  });

  it('sample-level retrieval round-trips through the same client', async () => {
    const api = new ApiClient((url, init) => fetch(url, init), BASE);
    const payload = await api.retrieve('1:1:0', 2);
    expect(payload.candidates.length).toBe(2);
    expect(payload.candidates[0].score).toBeGreaterThanOrEqual(payload.candidates[1].score);
  });
});
