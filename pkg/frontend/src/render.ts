import { SCORES } from './types.js';
import type { AppState } from './state.js';
import { canSubmit } from './state.js';

function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderPosterior(posterior: number[]): string {
  if (posterior.length === 0) return '<div class="posterior empty">no posterior yet</div>';
  const bars = posterior
    .map((p, g) => {
      const pct = (p * 100).toFixed(1);
      return `
      <div class="bar-row">
        <span class="bar-label">group ${g}</span>
        <div class="bar-track"><div class="bar-fill" style="width:${pct}%"></div></div>
        <span class="bar-value" data-value="${p}">${pct}%</span>
      </div>`;
    })
    .join('');
  return `<div class="posterior" data-bars="${posterior.length}">${bars}</div>`;
}

export function renderItems(state: AppState): string {
  if (state.items.length === 0) {
    return '<p class="items-empty">Nothing left to rate.</p>';
  }
  const cards = state.items
    .map((item) => {
      const chosen = state.pending[item.image_id];
      const words = item.words.map((w) => `<span class="chip">${esc(w)}</span>`).join(' ');
      const buttons = SCORES.map(
        (s) =>
          `<button type="button" class="score${chosen === s ? ' chosen' : ''}"
            data-action="choose" data-image="${esc(item.image_id)}" data-score="${s}">${s > 0 ? '+' + s : s}</button>`,
      ).join('');
      return `
      <li class="item" data-image="${esc(item.image_id)}">
        <div class="item-name">${item.spot ? esc(item.spot) : 'activity'}</div>
        <div class="item-words">${words}</div>
        <div class="item-scores">${buttons}</div>
      </li>`;
    })
    .join('');
  const disabled = canSubmit(state) ? '' : ' disabled';
  return `
    <ul class="items">${cards}</ul>
    <button type="button" class="submit" data-action="submit"${disabled}>
      Submit ratings
    </button>`;
}

export function renderRecommendations(state: AppState): string {
  if (state.recommendations.length === 0) {
    return '<p class="recs-empty">Rate a few items to get recommendations.</p>';
  }
  const rows = state.recommendations
    .map(
      (rec, i) => `
      <li class="rec">
        <span class="rec-rank">${i + 1}.</span>
        <span class="rec-spot">${esc(rec.spot)}</span>
        <span class="rec-score" data-value="${rec.score}">${rec.score.toPrecision(3)}</span>
      </li>`,
    )
    .join('');
  return `<ol class="recs">${rows}</ol>`;
}

export function renderBanner(state: AppState): string {
  if (!state.banner) return '';
  if (state.banner.kind === 'retry') {
    return `
    <div class="banner error">
      <span>${esc(state.banner.message)}</span>
      <button type="button" data-action="retry">Retry</button>
    </div>`;
  }
  return `
    <div class="banner restart">
      <span>${esc(state.banner.message)}</span>
      <button type="button" data-action="restart">Start over</button>
    </div>`;
}

export function renderApp(state: AppState): string {
  return `
  ${renderBanner(state)}
  <section class="panel">
    <h2>Rate these</h2>
    ${renderItems(state)}
  </section>
  <section class="panel">
    <h2>Recommended spots</h2>
    ${renderRecommendations(state)}
  </section>
  <section class="panel">
    <h2>Experience-group posterior</h2>
    ${renderPosterior(state.posterior)}
    <p class="meta">session ${state.sessionId ?? 'n/a'} · method ${state.method} · rated ${state.ratedCount}</p>
  </section>`;
}
