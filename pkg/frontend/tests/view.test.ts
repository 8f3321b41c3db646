// @vitest-environment jsdom
import { describe, expect, it } from 'vitest';

import { recomputeFusedScore } from '../src/score.js';
import { mountApp } from '../src/view.js';
import { makeSession, MODEL } from './helpers.js';

async function mounted() {
  const session = makeSession();
  const root = document.createElement('div');
  document.body.appendChild(root);
  mountApp(root, session.store);
  await session.store.init();
  return { ...session, root };
}

describe('mounted app', () => {
  it('renders the queue in served order with progress', async () => {
    const { root } = await mounted();
    const items = [...root.querySelectorAll('.queue-item')].map((el) => el.textContent);
    expect(items.length).toBe(3);
    expect(items[0]).toContain('1:3');
    expect(root.querySelector('#progress')!.textContent).toBe('decided 0 / 3');
  });

  it('renders five-or-fewer candidate cards sorted as served', async () => {
    const { root } = await mounted();
    const cards = [...root.querySelectorAll('.card')];
    expect(cards.length).toBe(3);
    expect(cards.map((c) => (c as HTMLElement).dataset.trajectory)).toEqual([
      '2:2', '2:5', '2:9',
    ]);
  });

  it('renders the fused score recomputed from the breakdown', async () => {
    const { root, store } = await mounted();
    const top = store.review!.candidates[0];
    const expected = recomputeFusedScore(top.breakdown, MODEL.lambda);
    const title = root.querySelector('.card h3')!.textContent!;
    expect(title).toContain(`S=${expected.toFixed(4)}`);
  });

  it('flags a candidate whose breakdown lost a stream', async () => {
    const session = await mounted();
    delete session.store.review!.candidates[1].breakdown['dorsal_fin'];
    await session.store.refreshEvaluation(); // triggers a re-render
    const cards = [...session.root.querySelectorAll('.card')];
    expect(cards[1].querySelector('.anomaly')?.textContent).toContain('dorsal_fin');
    expect(cards[0].querySelector('.anomaly')).toBeNull();
  });

  it('keyboard shortcut decides the top candidate and updates the mAP widget', async () => {
    const { root, service } = await mounted();
    window.dispatchEvent(new KeyboardEvent('keydown', { key: 'c' }));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(service.verifications.length).toBe(1);
    expect(service.verifications[0].pair).toEqual({ query: '1:3', gallery: '2:2' });
    expect(root.querySelector('#map-widget')!.textContent).toContain('mAP 1.000');
    expect(root.querySelector('#progress')!.textContent).toBe('decided 1 / 3');
  });

  it('keyboard navigation moves to the next query', async () => {
    const { root, store } = await mounted();
    window.dispatchEvent(new KeyboardEvent('keydown', { key: 'n' }));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(store.current()?.trajectory).toBe('1:1');
    expect(root.querySelector('.review h2')!.textContent).toContain('1:1');
  });

  it('keyboard shortcuts ignore typing inside inputs', async () => {
    const { service } = await mounted();
    const input = document.createElement('input');
    document.body.appendChild(input);
    input.dispatchEvent(new KeyboardEvent('keydown', { key: 'c', bubbles: true }));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(service.verifications.length).toBe(0);
  });

  it('replaces a broken image with a placeholder but keeps the actions', async () => {
    const { root } = await mounted();
    const frame = root.querySelector('.card .frame')!;
    frame.querySelector('img')!.dispatchEvent(new Event('error'));
    expect(frame.classList.contains('placeholder')).toBe(true);
    expect(frame.textContent).toBe('no image');
    expect(root.querySelectorAll('.card .action').length).toBeGreaterThan(0);
  });

  it('shows the service banner when the queue cannot load', async () => {
    const session = makeSession();
    const root = document.createElement('div');
    document.body.appendChild(root);
    mountApp(root, session.store);
    session.service.failNetwork = true;
    await session.store.init();
    const banner = root.querySelector('#banner') as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toMatch(/unreachable/);
  });

  it('announces queue completion', async () => {
    const { root, store } = await mounted();
    for (const entry of [...store.queue]) {
      await store.open(store.queue.indexOf(entry));
      await store.decide(entry.proposed, 'confirmed');
    }
    expect(root.querySelector('.queue-complete')?.textContent).toBe('queue complete');
  });
});
