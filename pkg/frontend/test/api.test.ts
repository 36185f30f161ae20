import { describe, expect, it } from 'vitest';

import { ApiError, createClient } from '../src/api.js';

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

describe('client', () => {
  it('posts the method on session creation', async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const client = createClient('http://svc:9/', async (url, init) => {
      calls.push({ url, init });
      return jsonResponse(201, { session_id: 's', posterior: [1], items: [] });
    });
    const resp = await client.createSession('wl');
    expect(resp.session_id).toBe('s');
    expect(calls[0].url).toBe('http://svc:9/sessions');
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ method: 'wl' });
  });

  it('surfaces service error details with status codes', async () => {
    const client = createClient('http://svc:9', async () =>
      jsonResponse(404, { detail: 'unknown or expired session' }),
    );
    await expect(client.getSession('x')).rejects.toThrowError(ApiError);
    await expect(client.getSession('x')).rejects.toMatchObject({
      status: 404,
      message: 'unknown or expired session',
    });
  });

  it('sends rating batches as a JSON array', async () => {
    let body = '';
    const client = createClient('http://svc:9', async (_url, init) => {
      body = String(init?.body);
      return jsonResponse(200, { posterior: [1], recommendations: [], next_items: [] });
    });
    await client.submitRatings('sess', [{ image_id: 'img-1', score: -2 }]);
    expect(JSON.parse(body)).toEqual([{ image_id: 'img-1', score: -2 }]);
  });
});
