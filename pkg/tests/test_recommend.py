import itertools
import math

import numpy as np
import pytest

from spotrec.model import UemParams
from spotrec.recommend import (
    CatalogItem,
    RatedItem,
    RecommendError,
    UnknownUserError,
    build_catalog,
    catalog_scores,
    group_posterior,
    item_score,
    make_rating_distribution,
    new_session,
    rank_quantile,
    rank_quantile_samples,
    rating_likelihood,
    recommend_for_session,
    recommend_pairs_for_session,
    score_activities,
    score_locations,
    score_spots_for_posterior,
    update_session,
)


def params_2x3x4():
    # G=2, U=3, L=4, W=3: the worked-example instance
    return UemParams(
        variant="B",
        theta=np.array([0.6, 0.4]),
        pi=np.array([[0.5, 0.25, 0.25], [0.2, 0.4, 0.4]]),
        phi=np.array([[0.3, 0.3, 0.2, 0.2], [0.7, 0.1, 0.1, 0.1]]),
        sigma=np.array([[0.2, 0.5, 0.3], [0.6, 0.2, 0.2]]),
        tau=np.array([[0.5, 0.5], [0.5, 0.5]]),
    )


class TestRatingDistribution:
    def test_normal_probabilities(self):
        dist = make_rating_distribution("normal")
        expected = np.array([0.0668, 0.2417, 0.3829, 0.2417, 0.0668])
        assert np.all(np.abs(dist.probabilities - expected) < 1e-4)
        assert abs(dist.probabilities.sum() - 1.0) < 1e-12

    def test_normal_symmetry(self):
        p = make_rating_distribution("normal").probabilities
        assert p[0] == pytest.approx(p[4], abs=1e-15)
        assert p[1] == pytest.approx(p[3], abs=1e-15)

    def test_exponential_sigma_one(self):
        dist = make_rating_distribution("exponential", sigma=1.0)
        assert dist.probabilities[0] == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert abs(dist.probabilities[0] - 0.6321) < 1e-4
        assert abs(dist.probabilities.sum() - 1.0) < 1e-12

    def test_exponential_needs_positive_sigma(self):
        with pytest.raises(RecommendError):
            make_rating_distribution("exponential", sigma=0.0)

    def test_bucket_lookup(self):
        dist = make_rating_distribution("normal")
        cum = dist.cumulative
        assert np.all(np.abs(cum[1:] - np.array([0.0668, 0.3085, 0.6915, 0.9332, 1.0])) < 1e-4)
        assert dist.bucket_of(0.1) == -1
        assert dist.bucket_of(1.0) == 2
        assert dist.bucket_of(0.0668072 - 1e-9) == -2


class TestRatingLikelihood:
    def test_floor_arithmetic(self):
        dist = make_rating_distribution("normal")
        assert rating_likelihood(0.1, dist, -1, floor=0.01) == pytest.approx(0.96, abs=1e-15)
        assert rating_likelihood(0.1, dist, 2, floor=0.01) == pytest.approx(0.01, abs=1e-15)

    def test_mc_fraction_with_floor(self):
        dist = make_rating_distribution("normal")
        # buckets: 0.1 -> -1, 0.1 -> -1, 0.9 -> +1, 0.95 -> +2
        qs = np.array([0.1, 0.1, 0.9, 0.95])
        assert rating_likelihood(qs, dist, -1, floor=0.01) == pytest.approx(0.5)
        assert rating_likelihood(qs, dist, 2, floor=0.01) == pytest.approx(0.25)
        assert rating_likelihood(qs, dist, 0, floor=0.01) == pytest.approx(0.01)


class TestScoreLocations:
    def test_worked_value(self):
        ranked = dict(score_locations(params_2x3x4(), 0))
        assert ranked[0] == pytest.approx(0.6 * 0.5 * 0.3 + 0.4 * 0.2 * 0.7, abs=1e-15)
        assert ranked[0] == pytest.approx(0.146, abs=1e-12)

    def test_matches_brute_force_for_every_pair(self):
        params = params_2x3x4()
        for u in range(3):
            scores = dict(score_locations(params, u))
            for l in range(4):
                brute = sum(
                    params.theta[g] * params.pi[g, u] * params.phi[g, l] for g in range(2)
                )
                assert scores[l] == pytest.approx(brute, abs=1e-12)

    def test_single_group_ranking_is_phi_ranking(self):
        params = params_2x3x4()
        single = UemParams(
            variant="B", theta=np.array([1.0]), pi=params.pi[:1],
            phi=params.phi[:1], sigma=params.sigma[:1], tau=params.tau[:1],
        )
        ranked = [l for l, _ in score_locations(single, 1)]
        assert ranked == list(np.argsort(-single.phi[0], kind="stable"))

    def test_rescaling_preserves_order(self):
        params = params_2x3x4()
        base = [l for l, _ in score_locations(params, 2)]
        params.theta = params.theta * 3  # no longer a simplex, scores scale
        scaled = [l for l, _ in score_locations(params, 2)]
        assert base == scaled

    def test_unknown_user(self):
        with pytest.raises(UnknownUserError, match="pseudo-rating"):
            score_locations(params_2x3x4(), 7)


class TestScoreActivities:
    def test_worked_value(self):
        params = params_2x3x4()
        params.theta = np.array([0.5, 0.5])
        params.pi = np.array([[0.4, 0.3, 0.3], [0.1, 0.45, 0.45]])
        params.sigma = np.array([[0.2, 0.5, 0.3], [0.6, 0.2, 0.2]])
        scores = dict(score_activities(params, 0))
        assert scores[0] == pytest.approx(0.5 * 0.4 * 0.2 + 0.5 * 0.1 * 0.6, abs=1e-15)
        assert scores[0] == pytest.approx(0.07, abs=1e-12)

    def test_identical_sigma_rows_rank_same_for_all_users(self):
        params = params_2x3x4()
        params.sigma = np.tile(np.array([0.2, 0.5, 0.3]), (2, 1))
        rankings = {u: tuple(w for w, _ in score_activities(params, u)) for u in range(3)}
        assert len(set(rankings.values())) == 1

    def test_one_hot_word_ranks_first(self):
        params = params_2x3x4()
        params.sigma = np.array([[0.0, 0.0, 1.0], [0.4, 0.3, 0.3]])
        params.pi = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
        assert score_activities(params, 0)[0][0] == 2


class TestItemScore:
    def test_wl_product(self):
        params = params_2x3x4()
        params.phi[0, 1] = 0.3
        params.sigma[0, 2] = 0.2
        item = CatalogItem(image_id="x", spot=1, words=(2,))
        assert item_score(params, 0, item, "wl") == pytest.approx(0.06, abs=1e-15)

    def test_al_is_phi(self):
        params = params_2x3x4()
        item = CatalogItem(image_id="x", spot=3, words=(0, 1))
        assert item_score(params, 1, item, "al") == params.phi[1, 3]

    def test_wtol_requires_words(self):
        params = params_2x3x4()
        item = CatalogItem(image_id="x", spot=1, words=())
        with pytest.raises(RecommendError, match="word"):
            item_score(params, 0, item, "wtol")

    def test_unknown_indices(self):
        params = params_2x3x4()
        with pytest.raises(RecommendError):
            item_score(params, 0, CatalogItem(image_id="x", spot=9), "al")
        with pytest.raises(RecommendError):
            item_score(params, 0, CatalogItem(image_id="x", spot=0, words=(9,)), "wl")


def catalog_of_spots(n):
    return [CatalogItem(image_id=f"img-{i}", spot=i, words=()) for i in range(n)]


def spread_params(num_spots, num_groups=2):
    # phi rows strictly decreasing in spot index for group 0, increasing for 1
    weights = np.arange(num_spots, 0, -1, dtype=float)
    phi0 = weights / weights.sum()
    phi1 = phi0[::-1].copy()
    phi = np.vstack([phi0, phi1])[:num_groups]
    return UemParams(
        variant="B",
        theta=np.full(num_groups, 1 / num_groups),
        pi=np.full((num_groups, 2), 0.5),
        phi=phi,
        sigma=np.full((num_groups, 3), 1 / 3),
        tau=np.full((num_groups, 2), 0.5),
    )


class TestRankQuantile:
    def test_top_item_quantile_one(self):
        params = spread_params(10)
        catalog = catalog_of_spots(10)
        q = rank_quantile(params, 0, catalog[0], catalog, "al")
        assert q == pytest.approx(1.0, abs=1e-15)

    def test_bottom_item(self):
        params = spread_params(10)
        catalog = catalog_of_spots(10)
        q = rank_quantile(params, 0, catalog[9], catalog, "al")
        assert q == pytest.approx(0.1, abs=1e-15)

    def test_mc_with_full_sample_equals_exact(self):
        params = spread_params(8)
        catalog = catalog_of_spots(8)
        rng = np.random.default_rng(0)
        for item in (catalog[2], catalog[5]):
            exact = rank_quantile(params, 0, item, catalog, "al")
            sampled = rank_quantile(params, 0, item, catalog, "al", mc_samples=8, rng=rng)
            assert sampled == exact

    def test_ties_share_better_rank(self):
        params = spread_params(4)
        params.phi[0] = np.array([0.4, 0.2, 0.2, 0.2])
        catalog = catalog_of_spots(4)
        # all three tied items have rank 2 -> q = (4+1-2)/4
        for spot in (1, 2, 3):
            q = rank_quantile(params, 0, catalog[spot], catalog, "al")
            assert q == pytest.approx(0.75, abs=1e-15)

    def test_empty_catalog(self):
        params = spread_params(4)
        with pytest.raises(RecommendError, match="empty"):
            rank_quantile(params, 0, catalog_of_spots(4)[0], [], "al")

    def test_mc_mean_within_binomial_band(self):
        params = spread_params(200)
        catalog = catalog_of_spots(200)
        item = catalog[60]
        exact = rank_quantile(params, 0, item, catalog, "al")
        rng = np.random.default_rng(42)
        resamples = 2000
        m = 50
        qs = rank_quantile_samples(params, 0, item, catalog, "al", m, resamples, rng)
        p_greater = 1 - exact
        band = 2.576 * math.sqrt(p_greater * (1 - p_greater) / m) / math.sqrt(resamples)
        assert abs(qs.mean() - exact) <= band + 1e-12


class TestGroupPosterior:
    def test_single_bayes_step_hand_value(self):
        params = spread_params(10)
        catalog = catalog_of_spots(10)
        dist = make_rating_distribution("normal")
        # Under group 0 the top spot has q=1.0 (bucket +2); under group 1
        # it is the worst item, q=0.1 (bucket -1).
        rating = RatedItem(image_id="img-0", score=2, spot=0)
        post = group_posterior(
            params, [rating], dist, catalog, "al", prior=np.array([0.5, 0.5])
        )
        expected = np.array([0.96 * 0.5, 0.01 * 0.5])
        expected /= expected.sum()
        assert np.all(np.abs(post - expected) < 1e-12)

    def test_one_hot_prior_fixed_point(self):
        params = spread_params(10)
        catalog = catalog_of_spots(10)
        dist = make_rating_distribution("normal")
        rating = RatedItem(image_id="img-3", score=-2, spot=3)
        post = group_posterior(
            params, [rating], dist, catalog, "al", prior=np.array([1.0, 0.0])
        )
        assert post == pytest.approx([1.0, 0.0], abs=1e-300)

    def test_matches_brute_force_on_tiny_catalog(self):
        params = spread_params(6)
        catalog = catalog_of_spots(6)
        dist = make_rating_distribution("normal")
        ratings = [
            RatedItem(image_id="img-0", score=2, spot=0),
            RatedItem(image_id="img-4", score=0, spot=4),
            RatedItem(image_id="img-2", score=-1, spot=2),
        ]
        post = group_posterior(params, ratings, dist, catalog, "al")
        brute = _brute_posterior(params, ratings, dist, catalog, params.theta)
        assert np.all(np.abs(post - brute) < 1e-9)

    def test_prior_rescaling_invariance(self):
        params = spread_params(6)
        catalog = catalog_of_spots(6)
        dist = make_rating_distribution("normal")
        ratings = [RatedItem(image_id="img-1", score=1, spot=1)]
        a = group_posterior(params, ratings, dist, catalog, "al", prior=np.array([0.3, 0.7]))
        b = group_posterior(params, ratings, dist, catalog, "al", prior=np.array([3.0, 7.0]))
        assert np.all(np.abs(a - b) < 1e-12)
        assert abs(a.sum() - 1.0) < 1e-12


def _brute_posterior(params, ratings, dist, catalog, prior):
    # independent Bayes: sort plain item scores, count strictly greater
    floor = 0.01
    post = np.array(prior, dtype=float)
    for g in range(params.num_groups):
        for item in ratings:
            own = params.phi[g, item.spot]
            rank = 1 + sum(1 for other in catalog if params.phi[g, other.spot] > own)
            q = (len(catalog) + 1 - rank) / len(catalog)
            cum = np.concatenate([[0.0], np.cumsum(dist.probabilities)])
            j = next(i for i in range(1, 6) if q <= cum[i] + 0.0)
            hit = dist.values[j - 1] == item.score
            post[g] *= (1 - 4 * floor) if hit else floor
    return post / post.sum()


class TestSequentialEqualsBatch:
    def test_every_permutation(self):
        params = spread_params(6)
        catalog = catalog_of_spots(6)
        dist = make_rating_distribution("normal")
        ratings = [
            RatedItem(image_id="img-0", score=2, spot=0),
            RatedItem(image_id="img-4", score=0, spot=4),
            RatedItem(image_id="img-2", score=-1, spot=2),
        ]
        batch = group_posterior(params, ratings, dist, catalog, "al")
        for perm in itertools.permutations(ratings):
            session = new_session(params, "al", catalog_size=6, session_id="s")
            for rating in perm:
                session = update_session(session, [rating], params, dist, catalog)
            assert np.all(np.abs(session.posterior - batch) < 1e-12), perm

    def test_empty_update_is_identity(self):
        params = spread_params(6)
        catalog = catalog_of_spots(6)
        dist = make_rating_distribution("normal")
        session = new_session(params, "al", catalog_size=6, session_id="s")
        updated = update_session(session, [], params, dist, catalog)
        assert updated is session

    def test_repeated_strong_rating_is_monotone(self):
        params = spread_params(10)
        catalog = catalog_of_spots(10)
        dist = make_rating_distribution("normal")
        session = new_session(params, "al", catalog_size=10, session_id="s")
        masses = [session.posterior[0]]
        for i in range(5):
            rating = RatedItem(image_id=f"img-0-{i}", score=2, spot=0)
            session = update_session(session, [rating], params, dist, catalog)
            masses.append(session.posterior[0])
        assert all(b >= a for a, b in zip(masses, masses[1:]))
        assert masses[-1] > 0.99


class TestSessionRecommendations:
    def test_one_hot_posterior_matches_phi_ranking(self):
        params = spread_params(6)
        session = new_session(params, "al", catalog_size=6, session_id="s")
        object.__setattr__(session, "posterior", np.array([0.0, 1.0]))
        ranked = [l for l, _ in recommend_for_session(params, session, 6)]
        assert ranked == list(np.argsort(-params.phi[1], kind="stable"))

    def test_worked_mixture_score(self):
        params = spread_params(4)
        params.phi = np.array([[0.1, 0.5, 0.3, 0.1], [0.5, 0.1, 0.2, 0.2]])
        session = new_session(params, "al", catalog_size=4, session_id="s")
        object.__setattr__(session, "posterior", np.array([0.7, 0.3]))
        scores = dict(recommend_for_session(params, session, 4))
        assert scores[0] == pytest.approx(0.7 * 0.1 + 0.3 * 0.5, abs=1e-15)
        assert scores[0] == pytest.approx(0.22, abs=1e-12)

    def test_uniform_everything_ties_break_by_index(self):
        params = spread_params(5)
        params.phi = np.full((2, 5), 0.2)
        session = new_session(params, "al", catalog_size=5, session_id="s")
        ranked = [l for l, _ in recommend_for_session(params, session, 5)]
        assert ranked == [0, 1, 2, 3, 4]

    def test_k_larger_than_catalog_truncates(self):
        params = spread_params(4)
        session = new_session(params, "al", catalog_size=4, session_id="s")
        assert len(recommend_for_session(params, session, 99)) == 4

    def test_pair_scores(self):
        params = spread_params(3)
        session = new_session(params, "al", catalog_size=3, session_id="s")
        pairs = recommend_pairs_for_session(params, session, 5)
        l, w, score = pairs[0]
        expected = sum(
            session.posterior[g] * params.phi[g, l] * params.sigma[g, w] for g in range(2)
        )
        assert score == pytest.approx(expected, abs=1e-15)


class TestCatalog:
    def test_dedup_and_determinism(self):
        from spotrec.corpus import from_records, TouristRecord, parse_timestamp

        recs = [
            TouristRecord("u1", "a", parse_timestamp("2014-01-01T00:00Z"), ("x",)),
            TouristRecord("u2", "a", parse_timestamp("2014-02-01T00:00Z"), ("x",)),
            TouristRecord("u1", "b", parse_timestamp("2014-03-01T00:00Z"), ("y", "x")),
        ]
        corpus = from_records(recs)
        catalog = build_catalog(corpus)
        assert len(catalog) == 2
        assert [c.image_id for c in catalog] == ["img-000000", "img-000001"]

    def test_scores_shape(self):
        params = spread_params(5)
        catalog = catalog_of_spots(5)
        matrix = catalog_scores(params, catalog, "al")
        assert matrix.shape == (2, 5)
        assert np.all(matrix[0] == params.phi[0])


class TestColdStartConcentration:
    def test_posterior_concentrates_on_generating_group(self):
        # separable phi; rate group 1's top spots highly
        num_spots = 12
        phi = np.full((3, num_spots), 0.01)
        for g in range(3):
            phi[g, g * 4 : g * 4 + 4] = (1 - 0.01 * (num_spots - 4)) / 4
        params = UemParams(
            variant="B",
            theta=np.full(3, 1 / 3),
            pi=np.full((3, 2), 0.5),
            phi=phi,
            sigma=np.full((3, 4), 0.25),
            tau=np.full((3, 2), 0.5),
        )
        catalog = catalog_of_spots(num_spots)
        dist = make_rating_distribution("normal")
        ratings = [
            RatedItem(image_id=f"img-{s}", score=2, spot=s) for s in range(4, 8)
        ] + [RatedItem(image_id="img-0", score=-2, spot=0)]
        post = group_posterior(params, ratings, dist, catalog, "al")
        assert post[1] > post[0] and post[1] > post[2]
