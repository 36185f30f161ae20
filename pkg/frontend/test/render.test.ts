import { describe, expect, it } from 'vitest';

import { renderApp, renderItems, renderPosterior } from '../src/render.js';
import { initialState, withChoice, withRatingsResult, withSession } from '../src/state.js';

const createResponse = {
  session_id: 's1',
  posterior: [0.125, 0.375, 0.5],
  items: [{ image_id: 'img-1', spot: 'temple', words: ['zen', 'moss'] }],
};

function displayedValues(html: string): number[] {
  return [...html.matchAll(/data-value="([^"]+)"/g)].map((m) => Number(m[1]));
}

describe('no client-side score fabrication', () => {
  it('renders exactly the numbers the service returned', () => {
    const ratingsResponse = {
      posterior: [0.0625, 0.8125, 0.125],
      recommendations: [
        { spot: 'temple', score: 0.111222 },
        { spot: 'garden', score: 0.0333 },
      ],
      next_items: [],
    };
    let state = withSession(initialState('al'), createResponse);
    state = withRatingsResult(state, ratingsResponse, 1);
    const shown = displayedValues(renderApp(state));
    const allowed = new Set([
      ...ratingsResponse.posterior,
      ...ratingsResponse.recommendations.map((r) => r.score),
    ]);
    expect(shown.length).toBeGreaterThan(0);
    for (const value of shown) {
      expect(allowed.has(value)).toBe(true);
    }
  });

  it('posterior bars carry the raw probabilities', () => {
    const html = renderPosterior([0.25, 0.75]);
    expect(displayedValues(html)).toEqual([0.25, 0.75]);
  });
});

describe('rating controls', () => {
  it('offers exactly the scores -2..2', () => {
    const state = withSession(initialState('al'), createResponse);
    const html = renderItems(state);
    const scores = [...html.matchAll(/data-score="(-?\d)"/g)].map((m) => Number(m[1]));
    expect(scores).toEqual([-2, -1, 0, 1, 2]);
  });

  it('disables submission until a score is chosen', () => {
    let state = withSession(initialState('al'), createResponse);
    expect(renderItems(state)).toContain('disabled');
    state = withChoice(state, 'img-1', 0);
    expect(renderItems(state)).not.toContain('disabled');
    expect(renderItems(state)).toContain('chosen');
  });

  it('escapes item names', () => {
    const state = withSession(initialState('al'), {
      ...createResponse,
      items: [{ image_id: 'img-9', spot: '<b>x</b>', words: [] }],
    });
    expect(renderItems(state)).not.toContain('<b>x</b>');
  });
});
