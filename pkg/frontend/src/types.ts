export type Score = -2 | -1 | 0 | 1 | 2;
export const SCORES: Score[] = [-2, -1, 0, 1, 2];

export type Method = 'al' | 'wtol' | 'wl';
export const METHODS: Method[] = ['al', 'wtol', 'wl'];

export interface ItemView {
  image_id: string;
  spot: string | null;
  words: string[];
}

export interface Recommendation {
  spot: string;
  score: number;
}

export interface CreateSessionResponse {
  session_id: string;
  posterior: number[];
  items: ItemView[];
}

export interface RatingsResponse {
  posterior: number[];
  recommendations: Recommendation[];
  next_items: ItemView[];
}

export interface SessionStateResponse {
  session_id: string;
  method: string;
  posterior: number[];
  history: { image_id: string; score: number }[];
  recommendations: Recommendation[];
  next_items: ItemView[];
  catalog_size: number;
}

export interface RatingSubmission {
  image_id: string;
  score: Score;
}
