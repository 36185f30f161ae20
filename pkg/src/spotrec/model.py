"""Generative models over (user, spot, time, activity-words) records.

Four variants share a latent experience-group structure. Every record
draws a group g, then its user, spot, and time slot from group-specific
categoricals. Activity words come from the group's word distribution
(variant B) or from a per-location mixture that can also route words
through a location-specific or time-slot-specific source (S, T, ST).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .corpus import NUM_TIME_SLOTS, Corpus, IndexedRecord

VARIANTS = ("B", "S", "T", "ST")

# Column order of the per-location mixing weights, per variant. The
# group word source is always last.
WORD_SOURCES = {
    "B": (),
    "S": ("mu", "sigma"),
    "T": ("rho", "sigma"),
    "ST": ("mu", "rho", "sigma"),
}

SIMPLEX_ATOL = 1e-9


class ModelError(ValueError):
    """Raised for invalid parameters or model files."""


def mixture_arity(variant: str) -> int:
    return len(WORD_SOURCES[variant])


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class Hyperparams:
    """Symmetric Dirichlet concentrations, one per model distribution.

    alpha: groups (theta), beta: spots (phi), gamma: users (pi),
    delta: group words (sigma), kappa: time slots (tau),
    epsilon: location words (mu), iota: time-slot words (rho),
    eta_prior: per-location mixing weights (eta). All default to 1.
    """

    num_groups: int
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    kappa: float = 1.0
    epsilon: float = 1.0
    iota: float = 1.0
    eta_prior: float = 1.0

    def __post_init__(self):
        if self.num_groups < 1:
            raise ModelError("num_groups must be >= 1")
        for name in ("alpha", "beta", "gamma", "delta", "kappa", "epsilon", "iota", "eta_prior"):
            if getattr(self, name) <= 0:
                raise ModelError(f"concentration {name} must be > 0")


@dataclass(frozen=True)
class Dims:
    num_users: int
    num_spots: int
    num_words: int
    num_time_slots: int = NUM_TIME_SLOTS

    def __post_init__(self):
        for name in ("num_users", "num_spots", "num_words", "num_time_slots"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")

    @classmethod
    def of_corpus(cls, corpus: Corpus) -> "Dims":
        return cls(len(corpus.users), len(corpus.spots), len(corpus.words), corpus.num_time_slots)


def _check_simplex(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0):
        raise ModelError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=SIMPLEX_ATOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ModelError(f"{name} rows must sum to 1 (worst deviation {worst:.3g})")


@dataclass
class UemParams:
    """Fitted or constructed categorical parameters for one variant.

    theta: (G,) group weights; pi: (G, U); phi: (G, L); sigma: (G, W);
    tau: (G, T) or None for variant S; mu: (L, W) for S/ST; rho: (T, W)
    for T/ST; eta: (L, arity) mixing weights for the switching variants.
    """

    variant: str
    theta: np.ndarray
    pi: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray | None = None
    mu: np.ndarray | None = None
    rho: np.ndarray | None = None
    eta: np.ndarray | None = None

    @property
    def num_groups(self) -> int:
        return self.theta.shape[0]

    @property
    def dims(self) -> Dims:
        num_slots = self.tau.shape[1] if self.tau is not None else (
            self.rho.shape[0] if self.rho is not None else NUM_TIME_SLOTS
        )
        return Dims(self.pi.shape[1], self.phi.shape[1], self.sigma.shape[1], num_slots)

    def validate(self) -> None:
        _check_variant(self.variant)
        _check_simplex(self.theta, "theta")
        _check_simplex(self.pi, "pi")
        _check_simplex(self.phi, "phi")
        _check_simplex(self.sigma, "sigma")
        sources = WORD_SOURCES[self.variant]
        if self.variant == "S":
            if self.tau is not None:
                raise ModelError("variant S has no time-slot distribution tau")
        else:
            if self.tau is None:
                raise ModelError(f"variant {self.variant} requires tau")
            _check_simplex(self.tau, "tau")
        if "mu" in sources:
            if self.mu is None:
                raise ModelError(f"variant {self.variant} requires mu")
            _check_simplex(self.mu, "mu")
        elif self.mu is not None:
            raise ModelError(f"variant {self.variant} does not use mu")
        if "rho" in sources:
            if self.rho is None:
                raise ModelError(f"variant {self.variant} requires rho")
            _check_simplex(self.rho, "rho")
        elif self.rho is not None:
            raise ModelError(f"variant {self.variant} does not use rho")
        if sources:
            if self.eta is None:
                raise ModelError(f"variant {self.variant} requires eta")
            if self.eta.shape[1] != len(sources):
                raise ModelError(
                    f"eta must have {len(sources)} columns for variant {self.variant}"
                )
            _check_simplex(self.eta, "eta")
        elif self.eta is not None:
            raise ModelError("variant B does not use eta")


@dataclass
class GeneratedCorpus:
    """A synthetic corpus with its generating latent assignments."""

    corpus: Corpus
    latent_groups: np.ndarray
    latent_switches: tuple[tuple[int, ...], ...] | None = None


def sample_params(
    hyper: Hyperparams,
    dims: Dims,
    rng: np.random.Generator,
    variant: str = "B",
) -> UemParams:
    """Draw every distribution from its symmetric Dirichlet prior."""
    _check_variant(variant)
    g = hyper.num_groups
    sources = WORD_SOURCES[variant]
    params = UemParams(
        variant=variant,
        theta=rng.dirichlet(np.full(g, hyper.alpha)),
        pi=rng.dirichlet(np.full(dims.num_users, hyper.gamma), size=g),
        phi=rng.dirichlet(np.full(dims.num_spots, hyper.beta), size=g),
        sigma=rng.dirichlet(np.full(dims.num_words, hyper.delta), size=g),
        tau=None
        if variant == "S"
        else rng.dirichlet(np.full(dims.num_time_slots, hyper.kappa), size=g),
        mu=rng.dirichlet(np.full(dims.num_words, hyper.epsilon), size=dims.num_spots)
        if "mu" in sources
        else None,
        rho=rng.dirichlet(np.full(dims.num_words, hyper.iota), size=dims.num_time_slots)
        if "rho" in sources
        else None,
        eta=rng.dirichlet(np.full(len(sources), hyper.eta_prior), size=dims.num_spots)
        if sources
        else None,
    )
    params.validate()
    return params


def _categorical_draws(rows: np.ndarray, which_row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-cdf draws; row i of ``rows`` supplies the law for draw i."""
    cum = np.cumsum(rows, axis=1)
    out = np.empty(len(which_row), dtype=np.int64)
    uniforms = rng.random(len(which_row))
    for r in np.unique(which_row):
        mask = which_row == r
        out[mask] = np.searchsorted(cum[r], uniforms[mask], side="left")
    return np.minimum(out, rows.shape[1] - 1)


def generate_corpus(
    params: UemParams,
    num_records: int,
    words_per_record: int | Callable[[np.random.Generator, int], np.ndarray],
    rng: np.random.Generator,
) -> GeneratedCorpus:
    """Sample records from the generative process, keeping the latents.

    ``words_per_record`` is either a constant or a callable mapping
    (rng, n) to an integer array of token counts.
    """
    params.validate()
    if num_records < 1:
        raise ModelError("num_records must be >= 1")
    dims = params.dims
    variant = params.variant
    sources = WORD_SOURCES[variant]

    if callable(words_per_record):
        counts = np.asarray(words_per_record(rng, num_records), dtype=np.int64)
    else:
        counts = np.full(num_records, int(words_per_record), dtype=np.int64)
    if np.any(counts < 0):
        raise ModelError("words_per_record must be nonnegative")

    groups = _categorical_draws(params.theta[None, :], np.zeros(num_records, dtype=np.int64), rng)
    users = _categorical_draws(params.pi, groups, rng)
    spots = _categorical_draws(params.phi, groups, rng)
    if variant == "S":
        # Placeholder slots: variant S does not model time.
        slots = rng.integers(0, dims.num_time_slots, size=num_records)
    else:
        slots = _categorical_draws(params.tau, groups, rng)

    word_lists: list[tuple[int, ...]] = []
    switch_lists: list[tuple[int, ...]] = []
    for d in range(num_records):
        m = int(counts[d])
        if m == 0:
            word_lists.append(())
            switch_lists.append(())
            continue
        if variant == "B":
            ws = _categorical_draws(params.sigma, np.full(m, groups[d]), rng)
            word_lists.append(tuple(int(w) for w in ws))
            switch_lists.append(())
            continue
        sw = _categorical_draws(params.eta, np.full(m, spots[d]), rng)
        ws = np.empty(m, dtype=np.int64)
        for i in range(m):
            source = sources[sw[i]]
            if source == "mu":
                row = params.mu[spots[d]]
            elif source == "rho":
                row = params.rho[slots[d]]
            else:
                row = params.sigma[groups[d]]
            ws[i] = _categorical_draws(row[None, :], np.zeros(1, dtype=np.int64), rng)[0]
        word_lists.append(tuple(int(w) for w in ws))
        switch_lists.append(tuple(int(s) for s in sw))

    corpus = _synthetic_corpus(dims, users, spots, slots, word_lists)
    return GeneratedCorpus(
        corpus=corpus,
        latent_groups=groups,
        latent_switches=tuple(switch_lists) if variant != "B" else None,
    )


def _synthetic_corpus(
    dims: Dims,
    users: np.ndarray,
    spots: np.ndarray,
    slots: np.ndarray,
    word_lists: list[tuple[int, ...]],
) -> Corpus:
    # Full vocabularies in index order, so synthetic indices line up
    # with parameter rows even when some symbols never occur.
    from .corpus import Vocabulary

    if dims.num_time_slots > 12:
        raise ModelError("synthetic corpora encode slots as months; at most 12 supported")
    user_vocab = Vocabulary(f"u{i}" for i in range(dims.num_users))
    spot_vocab = Vocabulary(f"l{i}" for i in range(dims.num_spots))
    word_vocab = Vocabulary(f"w{i}" for i in range(dims.num_words))
    indexed = tuple(
        IndexedRecord(
            user_idx=int(users[d]),
            spot_idx=int(spots[d]),
            time_slot=int(slots[d]),
            word_idxs=word_lists[d],
            timestamp=datetime(2023, int(slots[d]) + 1, 15, 12, 0, tzinfo=timezone.utc),
        )
        for d in range(len(users))
    )
    return Corpus(records=indexed, users=user_vocab, spots=spot_vocab, words=word_vocab,
                  num_time_slots=dims.num_time_slots)


def word_prob(params: UemParams, g: int, l: int, t: int, w: int) -> float:
    """Probability of word w for a record at (group g, spot l, slot t).

    The per-token switch is marginalized for the mixture variants.
    """
    dims = params.dims
    if not (0 <= g < params.num_groups and 0 <= l < dims.num_spots and 0 <= w < dims.num_words):
        raise ModelError("index out of range")
    if params.variant != "S" and not 0 <= t < dims.num_time_slots:
        raise ModelError("index out of range")
    variant = params.variant
    if variant == "B":
        return float(params.sigma[g, w])
    if variant == "S":
        return float(params.eta[l, 0] * params.mu[l, w] + params.eta[l, 1] * params.sigma[g, w])
    if variant == "T":
        return float(params.eta[l, 0] * params.rho[t, w] + params.eta[l, 1] * params.sigma[g, w])
    return float(
        params.eta[l, 0] * params.mu[l, w]
        + params.eta[l, 1] * params.rho[t, w]
        + params.eta[l, 2] * params.sigma[g, w]
    )


def record_loglik(params: UemParams, record: IndexedRecord) -> float:
    """Log marginal probability of one record, summed over groups."""
    dims = params.dims
    u, l, t = record.user_idx, record.spot_idx, record.time_slot
    if not (0 <= u < dims.num_users and 0 <= l < dims.num_spots):
        raise ModelError("record indices out of range")
    logs = np.full(params.num_groups, -np.inf)
    for g in range(params.num_groups):
        p = params.theta[g] * params.pi[g, u] * params.phi[g, l]
        if params.variant != "S":
            p *= params.tau[g, t]
        for w in record.word_idxs:
            p *= word_prob(params, g, l, t, w)
        if p > 0:
            logs[g] = math.log(p)
    result = logsumexp(logs)
    return float(result)


def _token_arrays(corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(corpus.records) + 1, dtype=np.int64)
    for i, rec in enumerate(corpus.records):
        offsets[i + 1] = offsets[i] + len(rec.word_idxs)
    flat = np.fromiter(
        (w for rec in corpus.records for w in rec.word_idxs), dtype=np.int64, count=offsets[-1]
    )
    return flat, offsets


def corpus_loglik(params: UemParams, corpus: Corpus) -> np.ndarray:
    """Vectorized per-record log likelihoods (matches record_loglik)."""
    users = np.array([r.user_idx for r in corpus.records], dtype=np.int64)
    spots = np.array([r.spot_idx for r in corpus.records], dtype=np.int64)
    slots = np.array([r.time_slot for r in corpus.records], dtype=np.int64)
    tok, off = _token_arrays(corpus)
    g_count = params.num_groups

    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta)
        log_pi = np.log(params.pi)
        log_phi = np.log(params.phi)
        base = log_theta[None, :] + log_pi[:, users].T + log_phi[:, spots].T
        if params.variant != "S":
            base = base + np.log(params.tau)[:, slots].T

        if len(tok):
            if params.variant == "B":
                token_probs = params.sigma[:, tok].T  # (Ntok, G)
            else:
                tok_spots = np.repeat(spots, np.diff(off))
                tok_slots = np.repeat(slots, np.diff(off))
                sources = WORD_SOURCES[params.variant]
                fixed = np.zeros(len(tok))
                col = 0
                if "mu" in sources:
                    fixed = fixed + params.eta[tok_spots, 0] * params.mu[tok_spots, tok]
                    col = 1
                if "rho" in sources:
                    fixed = fixed + params.eta[tok_spots, col] * params.rho[tok_slots, tok]
                    col += 1
                sig_w = params.eta[tok_spots, col]
                token_probs = fixed[:, None] + sig_w[:, None] * params.sigma[:, tok].T
            log_tokens = np.log(token_probs)
            token_sums = np.add.reduceat(
                np.vstack([log_tokens, np.zeros((1, g_count))]), off[:-1], axis=0
            )
            # reduceat treats equal consecutive offsets (empty records) as
            # single-element slices; zero those out explicitly.
            empty = np.diff(off) == 0
            token_sums[empty] = 0.0
            base = base + token_sums
    return logsumexp(base, axis=1)


def _location_predictive(params: UemParams, user_idx: int | None) -> np.ndarray:
    if user_idx is None:
        scores = params.theta @ params.phi
    else:
        scores = (params.theta * params.pi[:, user_idx]) @ params.phi
    total = scores.sum()
    if total <= 0:
        raise ModelError("degenerate location predictive (all-zero scores)")
    return scores / total


def _word_predictive(params: UemParams, user_idx: int | None) -> np.ndarray:
    if user_idx is None:
        scores = params.theta @ params.sigma
    else:
        scores = (params.theta * params.pi[:, user_idx]) @ params.sigma
    total = scores.sum()
    if total <= 0:
        raise ModelError("degenerate word predictive (all-zero scores)")
    return scores / total


def perplexity_locations(
    params: UemParams, test: Corpus, known_users: set[int] | None = None
) -> float:
    """exp of the negative mean log predictive probability of test spots.

    ``known_users`` limits which users the predictive may condition on;
    None means every user was seen in training. Records of unseen users
    fall back to the unconditional spot distribution.
    """
    if test.num_records == 0:
        raise ModelError("perplexity requires a non-empty test corpus")
    cache: dict[int | None, np.ndarray] = {}
    total = 0.0
    for rec in test.records:
        key = rec.user_idx if (known_users is None or rec.user_idx in known_users) else None
        if key not in cache:
            cache[key] = _location_predictive(params, key)
        p = cache[key][rec.spot_idx]
        total += math.log(p) if p > 0 else -np.inf
    return float(math.exp(-total / test.num_records))


def perplexity_words(
    params: UemParams, test: Corpus, known_users: set[int] | None = None
) -> float:
    """Word-side analogue of perplexity_locations, averaged per token."""
    if test.num_records == 0:
        raise ModelError("perplexity requires a non-empty test corpus")
    num_tokens = sum(len(r.word_idxs) for r in test.records)
    if num_tokens == 0:
        raise ModelError("word perplexity requires at least one word token")
    cache: dict[int | None, np.ndarray] = {}
    total = 0.0
    for rec in test.records:
        if not rec.word_idxs:
            continue
        key = rec.user_idx if (known_users is None or rec.user_idx in known_users) else None
        if key not in cache:
            cache[key] = _word_predictive(params, key)
        row = cache[key]
        for w in rec.word_idxs:
            total += math.log(row[w]) if row[w] > 0 else -np.inf
    return float(math.exp(-total / num_tokens))


# ---------------------------------------------------------------------------
# Model file persistence


MODEL_FILE_VERSION = 1


def _array_or_none(value) -> np.ndarray | None:
    return None if value is None else np.asarray(value, dtype=np.float64)


def save_params(
    params: UemParams, path: str | Path, vocab: dict[str, list[str]] | None = None
) -> None:
    """Write a versioned JSON model document."""
    params.validate()
    dims = params.dims
    doc = {
        "version": MODEL_FILE_VERSION,
        "variant": params.variant,
        "dims": {
            "num_groups": params.num_groups,
            "num_users": dims.num_users,
            "num_spots": dims.num_spots,
            "num_words": dims.num_words,
            "num_time_slots": dims.num_time_slots,
        },
        "theta": params.theta.tolist(),
        "pi": params.pi.tolist(),
        "phi": params.phi.tolist(),
        "sigma": params.sigma.tolist(),
        "tau": None if params.tau is None else params.tau.tolist(),
        "mu": None if params.mu is None else params.mu.tolist(),
        "rho": None if params.rho is None else params.rho.tolist(),
        "eta": None if params.eta is None else params.eta.tolist(),
    }
    if vocab is not None:
        doc["vocab"] = vocab
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path: str | Path) -> tuple[UemParams, dict[str, list[str]] | None]:
    """Load and validate a model document written by save_params."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ModelError(f"unsupported model file version {doc.get('version')!r}")
    params = UemParams(
        variant=doc["variant"],
        theta=np.asarray(doc["theta"], dtype=np.float64),
        pi=np.asarray(doc["pi"], dtype=np.float64),
        phi=np.asarray(doc["phi"], dtype=np.float64),
        sigma=np.asarray(doc["sigma"], dtype=np.float64),
        tau=_array_or_none(doc.get("tau")),
        mu=_array_or_none(doc.get("mu")),
        rho=_array_or_none(doc.get("rho")),
        eta=_array_or_none(doc.get("eta")),
    )
    params.validate()
    declared = doc.get("dims", {})
    dims = params.dims
    actual = {
        "num_groups": params.num_groups,
        "num_users": dims.num_users,
        "num_spots": dims.num_spots,
        "num_words": dims.num_words,
        "num_time_slots": dims.num_time_slots,
    }
    for key, value in actual.items():
        if key in declared and declared[key] != value:
            raise ModelError(f"model file dims mismatch on {key}: {declared[key]} != {value}")
    return params, doc.get("vocab")
