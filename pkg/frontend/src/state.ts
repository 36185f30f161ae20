import type {
  CreateSessionResponse,
  ItemView,
  Method,
  RatingSubmission,
  RatingsResponse,
  Recommendation,
  Score,
  SessionStateResponse,
} from './types.js';

export interface Banner {
  kind: 'retry' | 'restart';
  message: string;
}

/**
 * Whole-UI state. Every number rendered on screen lives here and is
 * copied verbatim from a service response; reducers swap the state in
 * one piece so a render can never mix two responses.
 */
export interface AppState {
  sessionId: string | null;
  method: Method;
  posterior: number[];
  items: ItemView[];
  recommendations: Recommendation[];
  ratedCount: number;
  pending: Record<string, Score>;
  banner: Banner | null;
  busy: boolean;
}

export function initialState(method: Method = 'al'): AppState {
  return {
    sessionId: null,
    method,
    posterior: [],
    items: [],
    recommendations: [],
    ratedCount: 0,
    pending: {},
    banner: null,
    busy: false,
  };
}

export function withSession(state: AppState, resp: CreateSessionResponse): AppState {
  return {
    ...initialState(state.method),
    sessionId: resp.session_id,
    posterior: resp.posterior,
    items: resp.items,
  };
}

export function withRatingsResult(state: AppState, resp: RatingsResponse, submitted: number): AppState {
  return {
    ...state,
    posterior: resp.posterior,
    recommendations: resp.recommendations,
    items: resp.next_items,
    ratedCount: state.ratedCount + submitted,
    pending: {},
    banner: null,
    busy: false,
  };
}

export function withRestored(state: AppState, resp: SessionStateResponse): AppState {
  return {
    ...initialState(resp.method as Method),
    sessionId: resp.session_id,
    posterior: resp.posterior,
    items: resp.next_items,
    recommendations: resp.recommendations,
    ratedCount: resp.history.length,
  };
}

export function withChoice(state: AppState, imageId: string, score: Score): AppState {
  return { ...state, pending: { ...state.pending, [imageId]: score } };
}

export function withBusy(state: AppState, busy: boolean): AppState {
  return { ...state, busy };
}

/** Network failure: keep unsubmitted ratings so a retry can resend them. */
export function withNetworkFailure(state: AppState, message: string): AppState {
  return { ...state, busy: false, banner: { kind: 'retry', message } };
}

/** The service no longer knows the session (expired or restarted). */
export function withSessionLost(state: AppState): AppState {
  return {
    ...state,
    busy: false,
    banner: { kind: 'restart', message: 'Session expired on the server.' },
  };
}

export function pendingRatings(state: AppState): RatingSubmission[] {
  return Object.entries(state.pending).map(([image_id, score]) => ({ image_id, score }));
}

export function canSubmit(state: AppState): boolean {
  return !state.busy && Object.keys(state.pending).length > 0;
}
