"""Ranking metrics and the end-to-end experiment protocols.

Two regimes: time-split keeps each user's earliest records for training
and treats their later spots as the targets; user-split holds out whole
users and elicits start-up ratings to simulate cold start. Both report
precision/recall/F at several cutoffs, plus a Gini index of per-user F
as an unfairness measure.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, IndexedRecord, filter_min_pois, time_split, user_split
from .inference import TrainConfig, fit
from .model import Hyperparams, UemParams, perplexity_locations, perplexity_words
from .recommend import (
    RatedItem,
    RatingDistribution,
    build_catalog,
    build_method_catalog,
    group_posterior,
    make_rating_distribution,
    score_locations,
    score_spots_for_posterior,
)

logger = logging.getLogger(__name__)


class EvalError(ValueError):
    pass


def precision_recall_f_at_k(
    recommended: Sequence[int], relevant: set[int], k: int
) -> tuple[float, float, float]:
    """Precision, recall, and F for the top-k of a ranked spot list."""
    if k < 1:
        raise EvalError("k must be >= 1")
    if not relevant:
        raise EvalError("relevant set is empty; exclude this user upstream")
    hits = len(set(recommended[:k]) & relevant)
    p = hits / k
    r = hits / len(relevant)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def gini(values: Sequence[float]) -> float:
    """Mean-absolute-difference Gini index of nonnegative values."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise EvalError("gini requires a non-empty value list")
    if np.any(x < 0):
        raise EvalError("gini requires nonnegative values")
    total = x.sum()
    if total == 0:
        logger.warning("gini of an all-zero vector; defined as 0")
        return 0.0
    x = np.sort(x)
    n = x.size
    weights = 2 * np.arange(n) - n + 1
    return float((weights * x).sum() / (n * total))


def sample_rating(
    dist: RatingDistribution, subset: Sequence[int], rng: np.random.Generator
) -> int:
    """Draw a rating from the distribution renormalized over ``subset``."""
    idx = [dist.values.index(v) for v in subset]
    probs = dist.probabilities[idx]
    probs = probs / probs.sum()
    return int(rng.choice(np.asarray(subset), p=probs))


POSITIVE_SCORES = (1, 2)
NEGATIVE_SCORES = (-2, -1, 0)


def ratings_from_history(
    train_records: Sequence[IndexedRecord],
    method: str,
    dist: RatingDistribution,
    rng: np.random.Generator,
) -> list[RatedItem]:
    """Treat everything in a user's training history as positively rated.

    al yields one item per distinct visited spot, wtol one per distinct
    observed word, wl one per distinct (spot, word set) record. Positive
    scores are drawn from the rating distribution renormalized to {1,2}.
    "base" uses no pseudo-rating and yields nothing.
    """
    if method == "base":
        return []
    items: list[RatedItem] = []
    if method == "al":
        for spot in sorted({r.spot_idx for r in train_records}):
            items.append(
                RatedItem(
                    image_id=f"hist-l{spot}",
                    score=sample_rating(dist, POSITIVE_SCORES, rng),
                    spot=spot,
                )
            )
    elif method == "wtol":
        for word in sorted({w for r in train_records for w in r.word_idxs}):
            items.append(
                RatedItem(
                    image_id=f"hist-w{word}",
                    score=sample_rating(dist, POSITIVE_SCORES, rng),
                    words=(word,),
                )
            )
    elif method == "wl":
        for spot, words in sorted({(r.spot_idx, r.word_idxs) for r in train_records}):
            items.append(
                RatedItem(
                    image_id=f"hist-l{spot}-" + "-".join(map(str, words)),
                    score=sample_rating(dist, POSITIVE_SCORES, rng),
                    spot=spot,
                    words=words,
                )
            )
    else:
        raise EvalError(f"unknown method {method!r}")
    return items


def select_startup_items(
    test_user_records: Sequence[IndexedRecord],
    corpus: Corpus,
    method: str,
    rng: np.random.Generator,
    dist: RatingDistribution,
) -> list[RatedItem]:
    """Start-up evidence for a brand-new user: 5 rated items.

    One item the user actually experienced, rated from {1, 2}; four
    items they did not, rated from {-2, -1, 0}. ``corpus`` supplies the
    item universe (the training side of the split).
    """
    if not test_user_records:
        raise EvalError("user has no test records")
    visited = {r.spot_idx for r in test_user_records}
    if method == "al":
        experienced = [("spot", s, ()) for s in sorted(visited)]
        unexperienced = [
            ("spot", s, ()) for s in range(len(corpus.spots)) if s not in visited
        ]
    elif method == "wtol":
        seen_words = {w for r in test_user_records for w in r.word_idxs}
        experienced = [("word", None, (w,)) for w in sorted(seen_words)]
        unexperienced = [
            ("word", None, (w,)) for w in range(len(corpus.words)) if w not in seen_words
        ]
        if not experienced:
            raise EvalError("user has no observed activity words")
    else:  # wl
        experienced = [
            ("pair", s, ws) for s, ws in sorted({(r.spot_idx, r.word_idxs) for r in test_user_records})
        ]
        unexperienced = [
            ("pair", item.spot, item.words)
            for item in build_catalog(corpus)
            if item.spot not in visited
        ]
    if len(unexperienced) < 4:
        raise EvalError("too few unexperienced items for start-up selection")

    def _mk(kind_spot_words, score, tag):
        kind, spot, words = kind_spot_words
        label = f"l{spot}" if kind == "spot" else (
            f"w{words[0]}" if kind == "word" else f"l{spot}-" + "-".join(map(str, words))
        )
        return RatedItem(
            image_id=f"startup-{tag}-{label}",
            score=score,
            spot=spot if kind != "word" else None,
            words=words,
        )

    pos_pick = experienced[int(rng.integers(len(experienced)))]
    neg_idx = rng.choice(len(unexperienced), size=4, replace=False)
    items = [_mk(pos_pick, sample_rating(dist, POSITIVE_SCORES, rng), "pos")]
    for i in neg_idx:
        items.append(_mk(unexperienced[int(i)], sample_rating(dist, NEGATIVE_SCORES, rng), "neg"))
    return items


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "B"
    method: str = "al"  # base | al | wtol | wl
    split: str = "time"  # time | user
    ratio: float = 0.8
    k_values: tuple[int, ...] = (5, 10, 15)
    runs: int = 10
    num_groups: int = 10
    rating_kind: str = "normal"
    rating_sigma: float = 1.0
    seed: int = 0
    iterations: int | None = None
    burn_in: int | None = None
    min_pois: int = 2
    floor: float = 0.01

    def __post_init__(self):
        if self.runs < 1:
            raise EvalError("runs must be >= 1")
        if self.method not in ("base", "al", "wtol", "wl"):
            raise EvalError(f"unknown method {self.method!r}")
        if self.split not in ("time", "user"):
            raise EvalError(f"unknown split mode {self.split!r}")


@dataclass
class EvalReport:
    """Per-user metric rows plus their aggregates across runs."""

    config: dict
    per_user: list[dict]
    averages: dict[int, dict[str, float]]
    gini_at_k: dict[int, float]
    perplexity_locations: float
    perplexity_words: float
    excluded_users: int

    def check_consistency(self) -> None:
        for k, avg in self.averages.items():
            rows = [r for r in self.per_user if r["k"] == k]
            for name, key in (("precision", "precision"), ("recall", "recall"), ("f", "f")):
                mean = float(np.mean([r[key] for r in rows]))
                if abs(mean - avg[name]) > 1e-12:
                    raise EvalError(f"average {name}@{k} inconsistent with per-user rows")

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "averages": {str(k): v for k, v in self.averages.items()},
            "gini": {str(k): v for k, v in self.gini_at_k.items()},
            "perplexity_locations": self.perplexity_locations,
            "perplexity_words": self.perplexity_words,
            "excluded_users": self.excluded_users,
            "per_user": self.per_user,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write_csv(self, path: str | Path) -> None:
        """One row per (run, user, k), for external significance tests."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "user", "k", "precision", "recall", "f"])
            for row in self.per_user:
                writer.writerow(
                    [row["run"], row["user"], row["k"],
                     repr(row["precision"]), repr(row["recall"]), repr(row["f"])]
                )


def _ranking_from_posterior(params: UemParams, posterior: np.ndarray) -> list[int]:
    return [spot for spot, _ in score_spots_for_posterior(params, posterior)]


def run_experiment(config: ExperimentConfig, corpus: Corpus) -> EvalReport:
    """Run the full split/fit/elicit/score/measure protocol.

    Deterministic for a fixed config: per-run seeds derive from the
    config seed, and all rating draws consume a per-run generator in
    sorted-user order.
    """
    filtered = filter_min_pois(corpus, config.min_pois)
    dist = make_rating_distribution(config.rating_kind, config.rating_sigma)
    hyper = Hyperparams(num_groups=config.num_groups)

    per_user: list[dict] = []
    gini_values: dict[int, list[float]] = {k: [] for k in config.k_values}
    perp_loc_runs: list[float] = []
    perp_word_runs: list[float] = []
    excluded = 0

    for run in range(config.runs):
        run_seed = config.seed + 1000003 * run
        if config.split == "time":
            split = time_split(filtered, config.ratio, seed=run_seed)
        else:
            split = user_split(filtered, config.ratio, seed=run_seed)
        params = fit(
            split.train,
            TrainConfig(
                hyper=hyper,
                variant=config.variant,
                iterations=config.iterations,
                burn_in=config.burn_in,
                seed=run_seed,
            ),
        )
        catalog = None
        if config.method != "base":
            catalog = build_method_catalog(split.train, config.method)
        rng = np.random.default_rng([config.seed, run, 17])

        train_by_user = split.train.records_by_user()
        test_by_user = split.test.records_by_user()
        run_f: dict[int, list[float]] = {k: [] for k in config.k_values}

        for user in sorted(test_by_user):
            relevant = {r.spot_idx for r in test_by_user[user]}
            if not relevant:
                excluded += 1
                logger.info("user %d excluded: empty relevant set", user)
                continue
            if config.split == "time":
                if config.method == "base":
                    ranked = [s for s, _ in score_locations(params, user)]
                else:
                    ratings = ratings_from_history(
                        train_by_user.get(user, []), config.method, dist, rng
                    )
                    if not ratings:
                        excluded += 1
                        logger.info("user %d excluded: no rating evidence", user)
                        continue
                    posterior = group_posterior(
                        params, ratings, dist, catalog, config.method,
                        floor=config.floor, rng=rng,
                    )
                    ranked = _ranking_from_posterior(params, posterior)
            else:
                if config.method == "base":
                    posterior = params.theta
                else:
                    startup = select_startup_items(
                        test_by_user[user], split.train, config.method, rng, dist
                    )
                    posterior = group_posterior(
                        params, startup, dist, catalog, config.method,
                        floor=config.floor, rng=rng,
                    )
                ranked = _ranking_from_posterior(params, posterior)
            for k in config.k_values:
                p, r, f = precision_recall_f_at_k(ranked, relevant, k)
                per_user.append(
                    {
                        "run": run,
                        "user": split.test.users[user],
                        "k": k,
                        "precision": p,
                        "recall": r,
                        "f": f,
                    }
                )
                run_f[k].append(f)
        for k in config.k_values:
            if run_f[k]:
                gini_values[k].append(gini(run_f[k]))
        known = None
        if config.split == "user":
            known = set(train_by_user)
        perp_loc_runs.append(perplexity_locations(params, split.test, known_users=known))
        if any(r.word_idxs for r in split.test.records):
            perp_word_runs.append(perplexity_words(params, split.test, known_users=known))

    averages = {
        k: {
            "precision": float(np.mean([r["precision"] for r in per_user if r["k"] == k])),
            "recall": float(np.mean([r["recall"] for r in per_user if r["k"] == k])),
            "f": float(np.mean([r["f"] for r in per_user if r["k"] == k])),
        }
        for k in config.k_values
        if any(r["k"] == k for r in per_user)
    }
    report = EvalReport(
        config={
            "variant": config.variant,
            "method": config.method,
            "split": config.split,
            "ratio": config.ratio,
            "k_values": list(config.k_values),
            "runs": config.runs,
            "num_groups": config.num_groups,
            "rating_kind": config.rating_kind,
            "rating_sigma": config.rating_sigma,
            "seed": config.seed,
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "min_pois": config.min_pois,
            "floor": config.floor,
        },
        per_user=per_user,
        averages=averages,
        gini_at_k={k: float(np.mean(v)) for k, v in gini_values.items() if v},
        perplexity_locations=float(np.mean(perp_loc_runs)),
        perplexity_words=float(np.mean(perp_word_runs)) if perp_word_runs else float("nan"),
        excluded_users=excluded,
    )
    report.check_consistency()
    return report
