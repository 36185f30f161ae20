"""HTTP session API for interactive cold-start recommendation.

A session holds one new user's rating history and group posterior.
Items are presented in batches of five, the user scores them on -2..2,
and each submission returns the updated posterior together with fresh
top-k spot recommendations; the updated posterior is the prior for the
next round.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .corpus import ingest
from .model import UemParams, load_params
from .recommend import (
    METHODS,
    CatalogItem,
    RatedItem,
    RatingSession,
    build_catalog,
    catalog_scores,
    make_rating_distribution,
    new_session,
    recommend_for_session,
    update_session,
)

ITEMS_PER_BATCH = 5


@dataclass
class ServiceConfig:
    model_path: str
    corpus_path: str
    top_k: int = 10
    idle_seconds: float = 1800.0
    rating_kind: str = "normal"
    rating_sigma: float = 1.0
    floor: float = 0.01


class CreateSessionBody(BaseModel):
    method: str = "al"


class RatingBody(BaseModel):
    image_id: str
    score: int = Field(ge=-2, le=2)


@dataclass
class _Entry:
    session: RatingSession
    last_access: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with idle expiry; one lock per session."""

    def __init__(self, idle_seconds: float):
        self.idle_seconds = idle_seconds
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def _purge(self, now: float) -> None:
        expired = [
            sid for sid, e in self._entries.items()
            if now - e.last_access > self.idle_seconds
        ]
        for sid in expired:
            del self._entries[sid]

    def put(self, session: RatingSession) -> None:
        now = time.monotonic()
        with self._lock:
            self._purge(now)
            self._entries[session.session_id] = _Entry(session=session, last_access=now)

    def get(self, session_id: str) -> _Entry:
        now = time.monotonic()
        with self._lock:
            self._purge(now)
            entry = self._entries.get(session_id)
            if entry is None:
                raise HTTPException(status_code=404, detail="unknown or expired session")
            entry.last_access = now
            return entry


class _ModelContext:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.params: UemParams | None = None
        self.catalog: list[CatalogItem] = []
        self.spot_names: list[str] = []
        self.word_names: list[str] = []
        self.score_matrices: dict[str, np.ndarray] = {}
        self.dist = make_rating_distribution(config.rating_kind, config.rating_sigma)

    def load(self) -> None:
        params, vocab = load_params(self.config.model_path)
        corpus = ingest(self.config.corpus_path)
        dims = params.dims
        if len(corpus.spots) != dims.num_spots or len(corpus.words) != dims.num_words:
            raise ValueError("corpus vocabularies do not match the model dimensions")
        self.params = params
        self.catalog = build_catalog(corpus)
        if vocab is not None:
            self.spot_names = vocab["spots"]
            self.word_names = vocab["words"]
        else:
            self.spot_names = corpus.spots.items
            self.word_names = corpus.words.items
        self.score_matrices = {
            method: catalog_scores(params, self.catalog, method) for method in METHODS
        }

    def require_params(self) -> UemParams:
        if self.params is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return self.params


def _item_view(ctx: _ModelContext, item: CatalogItem) -> dict:
    return {
        "image_id": item.image_id,
        "spot": None if item.spot is None else ctx.spot_names[item.spot],
        "words": [ctx.word_names[w] for w in item.words],
    }


def _next_items(ctx: _ModelContext, session: RatingSession) -> list[CatalogItem]:
    """Pick a rateable batch stratified by posterior-weighted score.

    One item from the top of the current ranking, one from the bottom,
    and three around the middle quantiles; already-rated items are
    excluded. Purely a function of the session history.
    """
    scores = session.posterior @ ctx.score_matrices[session.method]
    rated = {item.image_id for item in session.history}
    order = np.lexsort((np.arange(len(scores)), -scores))
    unrated = [ctx.catalog[i] for i in order if ctx.catalog[i].image_id not in rated]
    if not unrated:
        return []
    n = len(unrated)
    picks = [0, int(0.4 * (n - 1)), int(0.5 * (n - 1)), int(0.6 * (n - 1)), n - 1]
    chosen: list[CatalogItem] = []
    seen: set[int] = set()
    for idx in picks:
        if idx not in seen:
            seen.add(idx)
            chosen.append(unrated[idx])
    return chosen[:ITEMS_PER_BATCH]


def _session_view(ctx: _ModelContext, session: RatingSession) -> dict:
    return {
        "session_id": session.session_id,
        "method": session.method,
        "posterior": [float(x) for x in session.posterior],
        "history": [
            {"image_id": item.image_id, "score": item.score} for item in session.history
        ],
        "catalog_size": session.catalog_size,
    }


def _recommendations(ctx: _ModelContext, session: RatingSession, k: int) -> list[dict]:
    return [
        {"spot": ctx.spot_names[spot], "score": float(score)}
        for spot, score in recommend_for_session(ctx.require_params(), session, k)
    ]


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="spotrec session API")
    ctx = _ModelContext(config)
    store = SessionStore(config.idle_seconds)
    try:
        ctx.load()
    except (OSError, ValueError):
        # Leave the app serving 503s until a valid model is supplied.
        ctx.params = None

    @app.get("/model/summary")
    def model_summary():
        params = ctx.require_params()
        dims = params.dims
        return {
            "variant": params.variant,
            "num_groups": params.num_groups,
            "num_users": dims.num_users,
            "num_spots": dims.num_spots,
            "num_words": dims.num_words,
            "num_time_slots": dims.num_time_slots,
            "catalog_size": len(ctx.catalog),
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        params = ctx.require_params()
        if body.method not in METHODS:
            raise HTTPException(status_code=422, detail=f"method must be one of {METHODS}")
        session = new_session(
            params, body.method, catalog_size=len(ctx.catalog),
            session_id=uuid.uuid4().hex,
        )
        store.put(session)
        return {
            "session_id": session.session_id,
            "posterior": [float(x) for x in session.posterior],
            "items": [_item_view(ctx, item) for item in _next_items(ctx, session)],
        }

    @app.post("/sessions/{session_id}/ratings")
    def submit_ratings(session_id: str, body: list[RatingBody]):
        params = ctx.require_params()
        entry = store.get(session_id)
        by_id = {item.image_id: item for item in ctx.catalog}
        with entry.lock:
            session = entry.session
            rated: list[RatedItem] = []
            for rating in body:
                item = by_id.get(rating.image_id)
                if item is None:
                    raise HTTPException(
                        status_code=422, detail=f"unknown image_id {rating.image_id!r}"
                    )
                rated.append(
                    RatedItem(
                        image_id=item.image_id,
                        score=rating.score,
                        spot=item.spot,
                        words=item.words,
                    )
                )
            if rated:
                session = update_session(
                    session, rated, params, ctx.dist, ctx.catalog,
                    floor=config.floor,
                )
                entry.session = session
            return {
                "posterior": [float(x) for x in session.posterior],
                "recommendations": _recommendations(ctx, session, config.top_k),
                "next_items": [_item_view(ctx, item) for item in _next_items(ctx, session)],
            }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        ctx.require_params()
        entry = store.get(session_id)
        with entry.lock:
            view = _session_view(ctx, entry.session)
            view["recommendations"] = _recommendations(ctx, entry.session, config.top_k)
            view["next_items"] = [
                _item_view(ctx, item) for item in _next_items(ctx, entry.session)
            ]
            return view

    return app
