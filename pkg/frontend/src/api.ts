import type {
  CreateSessionResponse,
  Method,
  RatingSubmission,
  RatingsResponse,
  SessionStateResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export interface Client {
  createSession(method: Method): Promise<CreateSessionResponse>;
  submitRatings(sessionId: string, ratings: RatingSubmission[]): Promise<RatingsResponse>;
  getSession(sessionId: string): Promise<SessionStateResponse>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function request<T>(fetchFn: FetchLike, url: string, init?: RequestInit): Promise<T> {
  const response = await fetchFn(url, {
    ...init,
    headers: { 'content-type': 'application/json', ...(init?.headers ?? {}) },
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === 'string') detail = body.detail;
    } catch {
      // non-JSON error body
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export function createClient(baseUrl: string, fetchFn?: FetchLike): Client {
  const base = baseUrl.replace(/\/$/, '');
  const doFetch: FetchLike = fetchFn ?? ((input, init) => fetch(input, init));
  return {
    createSession: (method) =>
      request<CreateSessionResponse>(doFetch, `${base}/sessions`, {
        method: 'POST',
        body: JSON.stringify({ method }),
      }),
    submitRatings: (sessionId, ratings) =>
      request<RatingsResponse>(doFetch, `${base}/sessions/${sessionId}/ratings`, {
        method: 'POST',
        body: JSON.stringify(ratings),
      }),
    getSession: (sessionId) =>
      request<SessionStateResponse>(doFetch, `${base}/sessions/${sessionId}`),
  };
}
