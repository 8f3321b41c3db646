import { ApiClient } from './api.js';
import { SessionStore } from './store.js';
import { mountApp } from './view.js';

const params = new URLSearchParams(window.location.search);
const store = new SessionStore(new ApiClient(), {
  annotator: params.get('annotator') ?? 'anonymous',
  model: params.get('model') ?? undefined,
  k: params.has('k') ? Number(params.get('k')) : undefined,
});

mountApp(document.getElementById('app')!, store);
void store.init();
