/**
 * DOM rendering. The view is a pure function of the store state plus a
 * handful of event wires; all mutations go through store methods.
 */

import type { ApiClient } from './api.js';
import { checkCandidate, scoreBars } from './score.js';
import type { SessionStore } from './store.js';
import type { Candidate, DecisionStatus } from './types.js';

const STATUS_LABELS: Array<[DecisionStatus, string, string]> = [
  ['confirmed', 'confirm', 'c'],
  ['rejected', 'reject', 'x'],
  ['unsure', 'unsure', 'u'],
];

export function mountApp(root: HTMLElement, store: SessionStore): void {
  root.innerHTML = `
    <header class="topbar">
      <h1>match verification</h1>
      <div id="map-widget" class="map-widget"></div>
      <div id="progress" class="progress"></div>
    </header>
    <div id="banner" class="banner" hidden></div>
    <main class="layout">
      <nav id="queue" class="queue"></nav>
      <section id="review" class="review"></section>
    </main>
    <footer class="hints">
      keys: <b>c</b> confirm top · <b>x</b> reject top · <b>u</b> unsure ·
      <b>n</b>/<b>&rarr;</b> next · <b>p</b>/<b>&larr;</b> previous
    </footer>`;

  store.subscribe(() => render(root, store));
  bindKeyboard(store);
  render(root, store);
}

export function bindKeyboard(store: SessionStore, target: EventTarget = window): void {
  target.addEventListener('keydown', (event) => {
    const key = (event as KeyboardEvent).key;
    const element = (event as KeyboardEvent).target as HTMLElement | null;
    if (element && ['INPUT', 'TEXTAREA', 'SELECT'].includes(element.tagName)) return;
    switch (key) {
      case 'c':
        void store.decideTop('confirmed');
        break;
      case 'x':
        void store.decideTop('rejected');
        break;
      case 'u':
        void store.decideTop('unsure');
        break;
      case 'n':
      case 'ArrowRight':
        void store.next();
        break;
      case 'p':
      case 'ArrowLeft':
        void store.previous();
        break;
    }
  });
}

export function render(root: HTMLElement, store: SessionStore): void {
  renderBanner(root.querySelector('#banner')!, store);
  renderMapWidget(root.querySelector('#map-widget')!, store);
  renderProgress(root.querySelector('#progress')!, store);
  renderQueue(root.querySelector('#queue')!, store);
  renderReview(root.querySelector('#review')!, store);
}

function renderBanner(el: HTMLElement, store: SessionStore): void {
  el.hidden = !store.banner;
  el.textContent = store.banner ?? '';
}

function renderMapWidget(el: HTMLElement, store: SessionStore): void {
  const snapshot = store.evaluation;
  if (!snapshot) {
    el.textContent = 'mAP: - (no confirmed pairs yet)';
    return;
  }
  el.textContent =
    `mAP ${snapshot.map.toFixed(3)} ` +
    `(${snapshot.ci[0].toFixed(3)}, ${snapshot.ci[1].toFixed(3)}) ` +
    `over ${snapshot.n_trajectories} trajectories`;
}

function renderProgress(el: HTMLElement, store: SessionStore): void {
  const { decided, total } = store.progress();
  el.textContent = total ? `decided ${decided} / ${total}` : 'queue empty';
}

function renderQueue(el: HTMLElement, store: SessionStore): void {
  el.innerHTML = '';
  if (store.queueComplete()) {
    const done = document.createElement('div');
    done.className = 'queue-complete';
    done.textContent = 'queue complete';
    el.appendChild(done);
  }
  store.queue.forEach((entry, index) => {
    const item = document.createElement('button');
    item.type = 'button';
    item.className = 'queue-item';
    if (index === store.currentIndex) item.classList.add('active');
    const done = entry.decided || store.hasLocalDecision(entry.trajectory);
    if (done) item.classList.add('decided');
    item.textContent = `${entry.trajectory}  ${entry.top_score.toFixed(3)}${done ? ' ✓' : ''}`;
    item.addEventListener('click', () => void store.open(index));
    el.appendChild(item);
  });
}

function renderReview(el: HTMLElement, store: SessionStore): void {
  el.innerHTML = '';
  const entry = store.current();
  if (!entry) {
    el.textContent = 'nothing to review';
    return;
  }
  const heading = document.createElement('h2');
  heading.textContent = `query ${entry.trajectory}`;
  el.appendChild(heading);

  if (store.reviewError) {
    const error = document.createElement('div');
    error.className = 'review-error';
    error.textContent = `retrieval failed: ${store.reviewError}`;
    el.appendChild(error);
    return;
  }
  const payload = store.review;
  if (!payload) {
    const loading = document.createElement('div');
    loading.className = 'loading';
    loading.textContent = 'loading candidates…';
    el.appendChild(loading);
    return;
  }

  const strip = document.createElement('div');
  strip.className = 'query-strip';
  for (const url of payload.query_images) {
    strip.appendChild(imageOrPlaceholder(store.api, url));
  }
  el.appendChild(strip);

  const cards = document.createElement('div');
  cards.className = 'cards';
  for (const candidate of payload.candidates) {
    cards.appendChild(candidateCard(store, candidate));
  }
  el.appendChild(cards);
}

export function candidateCard(store: SessionStore, candidate: Candidate): HTMLElement {
  const model = store.model;
  const card = document.createElement('article');
  card.className = 'card';
  card.dataset.trajectory = candidate.trajectory;

  const check = checkCandidate(
    candidate,
    model?.streams ?? Object.keys(candidate.breakdown),
    model?.lambda ?? 0.75,
  );

  const title = document.createElement('h3');
  // render the score recomputed from the breakdown, not the payload field
  title.textContent = `${candidate.trajectory} · S=${check.fusedScore.toFixed(4)}`;
  card.appendChild(title);

  if (check.missingStreams.length || check.extraStreams.length || check.scoreMismatch) {
    const warning = document.createElement('div');
    warning.className = 'anomaly';
    const parts = [];
    if (check.missingStreams.length) parts.push(`missing: ${check.missingStreams.join(', ')}`);
    if (check.extraStreams.length) parts.push(`unexpected: ${check.extraStreams.join(', ')}`);
    if (check.scoreMismatch) parts.push('score drifts from breakdown');
    warning.textContent = `⚠ ${parts.join(' · ')}`;
    card.appendChild(warning);
  }

  for (const url of candidate.images) {
    card.appendChild(imageOrPlaceholder(store.api, url));
  }

  const bars = document.createElement('div');
  bars.className = 'bars';
  for (const [stream, scores] of Object.entries(candidate.breakdown)) {
    const widths = scoreBars(scores, model?.k ?? 20);
    const row = document.createElement('div');
    row.className = 'bar-row';
    row.innerHTML =
      `<span class="stream">${stream}</span>` +
      `<span class="bar rr"><i style="width:${(widths.rr * 100).toFixed(1)}%"></i></span>` +
      `<span class="bar s"><i style="width:${(widths.s * 100).toFixed(1)}%"></i></span>` +
      `<span class="nums">r${scores.rank} cos ${scores.cos.toFixed(3)}</span>`;
    bars.appendChild(row);
  }
  card.appendChild(bars);

  const actions = document.createElement('div');
  actions.className = 'actions';
  for (const [status, label] of STATUS_LABELS) {
    const button = document.createElement('button');
    button.type = 'button';
    button.className = `action ${status}`;
    button.textContent = label;
    button.addEventListener('click', () => void store.decide(candidate.trajectory, status));
    actions.appendChild(button);
  }
  card.appendChild(actions);
  return card;
}

function imageOrPlaceholder(api: ApiClient, url: string): HTMLElement {
  const frame = document.createElement('div');
  frame.className = 'frame';
  const img = document.createElement('img');
  img.src = api.imageUrl(url);
  img.alt = url;
  img.addEventListener('error', () => {
    // decisions stay possible without pixels
    frame.classList.add('placeholder');
    frame.textContent = 'no image';
  });
  frame.appendChild(img);
  return frame;
}
