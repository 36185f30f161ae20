import { ApiError, createClient, type Client } from './api.js';
import {
  initialState,
  pendingRatings,
  withBusy,
  withChoice,
  withNetworkFailure,
  withRatingsResult,
  withRestored,
  withSession,
  withSessionLost,
  type AppState,
} from './state.js';
import { renderApp } from './render.js';
import type { Method, Score } from './types.js';

const SESSION_KEY = 'spotrec-session-id';

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

/**
 * Holds the single app state and re-renders the whole tree on every
 * swap: posterior, recommendations, and items always come from the
 * same response, so no render can show a mixed view.
 */
export class Store {
  state: AppState;
  renders: AppState[] = [];

  constructor(
    private root: { innerHTML: string },
    method: Method = 'al',
  ) {
    this.state = initialState(method);
  }

  set(next: AppState): void {
    this.state = next;
    this.renders.push(next);
    this.root.innerHTML = renderApp(next);
  }
}

export class App {
  constructor(
    public store: Store,
    private client: Client,
    private storage: StorageLike,
  ) {}

  async start(): Promise<void> {
    const existing = this.storage.getItem(SESSION_KEY);
    if (existing) {
      try {
        const resp = await this.client.getSession(existing);
        this.store.set(withRestored(this.store.state, resp));
        return;
      } catch (err) {
        if (!(err instanceof ApiError && err.status === 404)) {
          this.store.set(withNetworkFailure(this.store.state, 'Could not reach the service.'));
          return;
        }
        this.storage.removeItem(SESSION_KEY);
      }
    }
    await this.createSession();
  }

  async createSession(): Promise<void> {
    try {
      const resp = await this.client.createSession(this.store.state.method);
      this.storage.setItem(SESSION_KEY, resp.session_id);
      this.store.set(withSession(this.store.state, resp));
    } catch {
      this.store.set(withNetworkFailure(this.store.state, 'Could not create a session.'));
    }
  }

  choose(imageId: string, score: Score): void {
    this.store.set(withChoice(this.store.state, imageId, score));
  }

  async submit(): Promise<void> {
    const state = this.store.state;
    const ratings = pendingRatings(state);
    if (state.busy || ratings.length === 0 || !state.sessionId) return;
    this.store.set(withBusy(state, true));
    try {
      const resp = await this.client.submitRatings(state.sessionId, ratings);
      this.store.set(withRatingsResult(this.store.state, resp, ratings.length));
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.store.set(withSessionLost(this.store.state));
      } else {
        // keep the pending scores so retry can resend them
        this.store.set(withNetworkFailure(this.store.state, 'Submission failed.'));
      }
    }
  }

  async restart(): Promise<void> {
    this.storage.removeItem(SESSION_KEY);
    this.store.set(initialState(this.store.state.method));
    await this.createSession();
  }

  handleAction(action: string, dataset: DOMStringMap): void | Promise<void> {
    switch (action) {
      case 'choose':
        return this.choose(dataset.image ?? '', Number(dataset.score) as Score);
      case 'submit':
      case 'retry':
        return this.submit();
      case 'restart':
        return this.restart();
    }
  }
}

export function mount(root: HTMLElement, baseUrl: string, storage?: StorageLike): App {
  const client = createClient(baseUrl);
  const app = new App(new Store(root), client, storage ?? window.localStorage);
  root.addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (target && target.dataset.action) {
      void app.handleAction(target.dataset.action, target.dataset);
    }
  });
  void app.start();
  return app;
}
