"""Spot/activity scoring and the pseudo-rating cold-start mechanism.

Known users are scored by marginalizing the experience group against
their fitted membership. New users rate presented catalog items on a
-2..2 scale; each rating's likelihood under a candidate group comes
from where the item's rank quantile lands in the assumed rating-score
distribution, giving a posterior over groups that is refined as more
ratings arrive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .model import UemParams

RATING_VALUES = (-2, -1, 0, 1, 2)
METHODS = ("al", "wtol", "wl")

DEFAULT_FLOOR = 0.01
EXACT_RANK_MAX_CATALOG = 100000
DEFAULT_MC_SAMPLE_SIZE = 2000
DEFAULT_MC_RESAMPLES = 64


class RecommendError(ValueError):
    pass


class UnknownUserError(RecommendError):
    """The user has no training history; use the rating-session flow."""


@dataclass(frozen=True)
class RatingDistribution:
    """Assumed categorical law of rating scores on (-2,-1,0,1,2).

    ``cumulative`` holds the prefix sums C_0..C_5 with C_0=0, C_5=1;
    bucket j covers quantiles in (C_{j-1}, C_j].
    """

    probabilities: np.ndarray
    values: tuple[int, ...] = RATING_VALUES

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if probs.shape != (len(self.values),):
            raise RecommendError("rating distribution needs one probability per value")
        if np.any(probs <= 0):
            raise RecommendError("rating probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise RecommendError("rating probabilities must sum to 1")
        object.__setattr__(self, "probabilities", probs)

    @property
    def cumulative(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.probabilities)])

    def bucket_of(self, q: float) -> int:
        """Rating value whose cumulative interval contains quantile q."""
        if not 0.0 < q <= 1.0 + 1e-12:
            raise RecommendError(f"quantile must be in (0, 1], got {q}")
        cum = self.cumulative
        j = int(np.searchsorted(cum[1:], q, side="left"))
        j = min(j, len(self.values) - 1)
        return self.values[j]


def _standard_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def make_rating_distribution(kind: str = "normal", sigma: float = 1.0) -> RatingDistribution:
    """Build the rating law from cdf cut points at -1.5, -0.5, 0.5, 1.5.

    "normal" uses the standard normal cdf; "exponential" uses an
    exponential with rate 1/sigma shifted to start at -2.5.
    """
    if kind == "normal":
        cdf = _standard_normal_cdf
    elif kind == "exponential":
        if sigma <= 0:
            raise RecommendError("exponential rating distribution needs sigma > 0")

        def cdf(x: float, _s=float(sigma)) -> float:
            return 1.0 - math.exp(-(x + 2.5) / _s) if x > -2.5 else 0.0

    else:
        raise RecommendError(f"unknown rating distribution kind {kind!r}")
    cuts = [-1.5, -0.5, 0.5, 1.5]
    cdf_vals = [cdf(c) for c in cuts]
    probs = np.array(
        [
            cdf_vals[0],
            cdf_vals[1] - cdf_vals[0],
            cdf_vals[2] - cdf_vals[1],
            cdf_vals[3] - cdf_vals[2],
            1.0 - cdf_vals[3],
        ]
    )
    return RatingDistribution(probabilities=probs)


@dataclass(frozen=True)
class CatalogItem:
    """A rateable item: a spot together with one observed word set."""

    image_id: str
    spot: int | None
    words: tuple[int, ...] = ()


@dataclass(frozen=True)
class RatedItem:
    """A catalog-like item with the score a user assigned to it."""

    image_id: str
    score: int
    spot: int | None = None
    words: tuple[int, ...] = ()

    def __post_init__(self):
        if self.spot is None and not self.words:
            raise RecommendError("rated item needs a spot or words")
        if self.score not in RATING_VALUES:
            raise RecommendError(f"score must be one of {RATING_VALUES}")


def build_catalog(corpus: Corpus) -> list[CatalogItem]:
    """Deduplicated (spot, word set) pairs observed in the corpus."""
    seen = sorted({(rec.spot_idx, rec.word_idxs) for rec in corpus.records})
    return [
        CatalogItem(image_id=f"img-{i:06d}", spot=spot, words=words)
        for i, (spot, words) in enumerate(seen)
    ]


def build_method_catalog(corpus: Corpus, method: str) -> list[CatalogItem]:
    """Item universe matching one evidence kind.

    Rank quantiles only compare like with like: location evidence ranks
    within the observed spots, activity evidence within the observed
    words, and combined evidence within the (spot, word set) catalog.
    """
    if method == "al":
        spots = sorted({rec.spot_idx for rec in corpus.records})
        return [CatalogItem(image_id=f"spot-{s}", spot=s) for s in spots]
    if method == "wtol":
        words = sorted({w for rec in corpus.records for w in rec.word_idxs})
        return [CatalogItem(image_id=f"word-{w}", spot=None, words=(w,)) for w in words]
    if method == "wl":
        return build_catalog(corpus)
    raise RecommendError(f"unknown method {method!r}; expected one of {METHODS}")


def score_locations(params: UemParams, user_idx: int) -> list[tuple[int, float]]:
    """Spots ranked for a known user, best first; ties by spot index."""
    if not 0 <= user_idx < params.pi.shape[1]:
        raise UnknownUserError(
            f"user index {user_idx} not in the trained model; "
            "use the pseudo-rating session flow for new users"
        )
    scores = (params.theta * params.pi[:, user_idx]) @ params.phi
    return _ranked(scores)


def score_activities(params: UemParams, user_idx: int) -> list[tuple[int, float]]:
    """Activity words ranked for a known user, best first."""
    if not 0 <= user_idx < params.pi.shape[1]:
        raise UnknownUserError(
            f"user index {user_idx} not in the trained model; "
            "use the pseudo-rating session flow for new users"
        )
    scores = (params.theta * params.pi[:, user_idx]) @ params.sigma
    return _ranked(scores)


def _ranked(scores: np.ndarray) -> list[tuple[int, float]]:
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [(int(i), float(scores[i])) for i in order]


def item_score(params: UemParams, g: int, item, method: str) -> float:
    """Preference score of one item under group g for a given method.

    al uses the spot only, wtol the word product only, wl both.
    """
    if method not in METHODS:
        raise RecommendError(f"unknown method {method!r}; expected one of {METHODS}")
    if not 0 <= g < params.num_groups:
        raise RecommendError(f"group {g} out of range")
    score = 1.0
    if method in ("al", "wl"):
        if item.spot is None:
            raise RecommendError(f"method {method!r} requires an item spot")
        if not 0 <= item.spot < params.phi.shape[1]:
            raise RecommendError(f"unknown spot index {item.spot}")
        score *= float(params.phi[g, item.spot])
    if method in ("wtol", "wl"):
        if method == "wtol" and not item.words:
            raise RecommendError("method 'wtol' requires a non-empty word list")
        for w in item.words:
            if not 0 <= w < params.sigma.shape[1]:
                raise RecommendError(f"unknown word index {w}")
            score *= float(params.sigma[g, w])
    return score


def catalog_scores(
    params: UemParams, catalog: Sequence[CatalogItem], method: str
) -> np.ndarray:
    """(G, N) matrix of item_score over the whole catalog."""
    if len(catalog) == 0:
        raise RecommendError("catalog is empty")
    return np.array(
        [[item_score(params, g, item, method) for item in catalog]
         for g in range(params.num_groups)]
    )


def _quantile_from_rank(rank: int, n: int) -> float:
    return (n + 1 - rank) / n


def rank_quantile(
    params: UemParams,
    g: int,
    item,
    catalog: Sequence[CatalogItem],
    method: str,
    mc_samples: int | None = None,
    rng: np.random.Generator | None = None,
    _scores: np.ndarray | None = None,
) -> float:
    """Normalized preference position (N+1-rank)/N of the item under g.

    Rank 1 is the best item; ties share the better rank. With
    ``mc_samples`` = m, the rank is taken within a uniformly sampled
    size-m subcatalog instead of the full catalog.
    """
    n = len(catalog)
    if n < 1:
        raise RecommendError("catalog is empty")
    scores = _scores if _scores is not None else catalog_scores(params, [*catalog], method)[g]
    own = item_score(params, g, item, method)
    if mc_samples is None:
        # An item scoring below the whole catalog still holds the last
        # position among N, keeping the quantile inside (0, 1].
        rank = min(1 + int(np.count_nonzero(scores > own)), n)
        return _quantile_from_rank(rank, n)
    m = int(mc_samples)
    if not 1 <= m <= n:
        raise RecommendError(f"mc_samples must be in [1, {n}]")
    if rng is None:
        raise RecommendError("Monte Carlo rank_quantile requires an rng")
    chosen = rng.choice(n, size=m, replace=False)
    rank = min(1 + int(np.count_nonzero(scores[chosen] > own)), m)
    return _quantile_from_rank(rank, m)


def rank_quantile_samples(
    params: UemParams,
    g: int,
    item,
    catalog: Sequence[CatalogItem],
    method: str,
    mc_samples: int,
    resamples: int,
    rng: np.random.Generator,
    _scores: np.ndarray | None = None,
) -> np.ndarray:
    """Repeated Monte Carlo rank quantiles for one item under group g."""
    scores = _scores if _scores is not None else catalog_scores(params, [*catalog], method)[g]
    return np.array(
        [
            rank_quantile(params, g, item, catalog, method,
                          mc_samples=mc_samples, rng=rng, _scores=scores)
            for _ in range(resamples)
        ]
    )


def rating_likelihood(q, dist: RatingDistribution, score: int, floor: float = DEFAULT_FLOOR):
    """Probability of observing ``score`` given a quantile (or samples).

    Scalar q: 1 - 4*floor when q lands in the score's cumulative bucket,
    else floor. Array q: the fraction of sampled quantiles landing in
    the bucket, floored at ``floor``.
    """
    if score not in dist.values:
        raise RecommendError(f"score must be one of {dist.values}")
    if not 0 < floor < 1 / (2 * len(dist.values)):
        raise RecommendError("floor must be a small positive probability")
    qs = np.asarray(q, dtype=np.float64)
    if qs.ndim == 0:
        hit = dist.bucket_of(float(qs)) == score
        return 1.0 - floor * (len(dist.values) - 1) if hit else floor
    hits = np.fromiter((dist.bucket_of(float(v)) == score for v in qs), dtype=bool, count=len(qs))
    return max(float(hits.mean()), floor)


def group_posterior(
    params: UemParams,
    ratings: Sequence[RatedItem],
    dist: RatingDistribution,
    catalog: Sequence[CatalogItem],
    method: str,
    prior: np.ndarray | None = None,
    floor: float = DEFAULT_FLOOR,
    mc_samples: int | None = None,
    mc_resamples: int = DEFAULT_MC_RESAMPLES,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Posterior over experience groups given rated items.

    Exact ranks are used for catalogs up to EXACT_RANK_MAX_CATALOG
    items, Monte Carlo subsampling beyond that (or when ``mc_samples``
    is forced). The likelihood of each rating is independent of the
    others, so sequential updating equals the batch posterior.
    """
    if len(ratings) == 0:
        raise RecommendError("group_posterior requires at least one rating")
    n = len(catalog)
    use_mc = mc_samples is not None or n > EXACT_RANK_MAX_CATALOG
    if use_mc:
        m = int(mc_samples) if mc_samples is not None else DEFAULT_MC_SAMPLE_SIZE
        m = min(m, n)
        if rng is None:
            raise RecommendError("Monte Carlo posterior requires an rng")
    if prior is None:
        prior = params.theta
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (params.num_groups,) or np.any(prior < 0) or prior.sum() <= 0:
        raise RecommendError("prior must be a nonnegative vector over groups")

    items = [*catalog]
    all_scores = catalog_scores(params, items, method)
    with np.errstate(divide="ignore"):  # one-hot priors are legal
        log_post = np.log(prior / prior.sum())
    for g in range(params.num_groups):
        for item in ratings:
            if use_mc:
                qs = rank_quantile_samples(
                    params, g, item, items, method, m, mc_resamples, rng,
                    _scores=all_scores[g],
                )
                lik = rating_likelihood(qs, dist, item.score, floor)
            else:
                q = rank_quantile(params, g, item, items, method, _scores=all_scores[g])
                lik = rating_likelihood(q, dist, item.score, floor)
            log_post[g] += math.log(lik)
    log_post -= log_post.max()
    post = np.exp(log_post)
    return post / post.sum()


@dataclass(frozen=True)
class RatingSession:
    """A cold-start user's rating history and running group posterior."""

    session_id: str
    posterior: np.ndarray
    history: tuple[RatedItem, ...]
    catalog_size: int
    method: str

    def __post_init__(self):
        post = np.asarray(self.posterior, dtype=np.float64)
        if abs(post.sum() - 1.0) > 1e-9 or np.any(post < 0):
            raise RecommendError("session posterior must be a probability simplex")
        if len(self.history) > self.catalog_size:
            raise RecommendError("cannot rate more items than the catalog holds")
        object.__setattr__(self, "posterior", post)


def new_session(
    params: UemParams, method: str, catalog_size: int, session_id: str
) -> RatingSession:
    """Fresh session whose posterior is the population group mixture."""
    if method not in METHODS:
        raise RecommendError(f"unknown method {method!r}; expected one of {METHODS}")
    return RatingSession(
        session_id=session_id,
        posterior=params.theta.copy(),
        history=(),
        catalog_size=catalog_size,
        method=method,
    )


def score_spots_for_posterior(
    params: UemParams, posterior: np.ndarray
) -> list[tuple[int, float]]:
    """All spots ranked under a given group posterior."""
    return _ranked(np.asarray(posterior) @ params.phi)


def recommend_for_session(
    params: UemParams, session: RatingSession, k: int
) -> list[tuple[int, float]]:
    """Top-k spots under the session's current group posterior."""
    return score_spots_for_posterior(params, session.posterior)[: max(k, 0)]


def recommend_pairs_for_session(
    params: UemParams, session: RatingSession, k: int
) -> list[tuple[int, int, float]]:
    """Top-k (spot, word) pairs under the session posterior."""
    pair = np.einsum("g,gl,gw->lw", session.posterior, params.phi, params.sigma)
    flat = pair.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    num_words = params.sigma.shape[1]
    return [
        (int(i // num_words), int(i % num_words), float(flat[i]))
        for i in order[: max(k, 0)]
    ]


def update_session(
    session: RatingSession,
    new_ratings: Sequence[RatedItem],
    params: UemParams,
    dist: RatingDistribution,
    catalog: Sequence[CatalogItem],
    floor: float = DEFAULT_FLOOR,
    mc_samples: int | None = None,
    mc_resamples: int = DEFAULT_MC_RESAMPLES,
    rng: np.random.Generator | None = None,
) -> RatingSession:
    """Fold new ratings into the session; old posterior becomes the prior."""
    if len(new_ratings) == 0:
        return session
    posterior = group_posterior(
        params, new_ratings, dist, catalog, session.method,
        prior=session.posterior, floor=floor,
        mc_samples=mc_samples, mc_resamples=mc_resamples, rng=rng,
    )
    return replace(
        session, posterior=posterior, history=session.history + tuple(new_ratings)
    )
