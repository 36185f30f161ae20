"""Fitting experience-group models by collapsed Gibbs sampling.

The model is fully conjugate (Dirichlet priors over categoricals), so
latent record groups and per-token word-source switches are resampled
from their closed-form conditionals over count tables. Point estimates
are posterior means computed from counts averaged over post-burn-in
sweeps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from hashlib import blake2b
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .corpus import Corpus
from .model import (
    WORD_SOURCES,
    Dims,
    Hyperparams,
    ModelError,
    UemParams,
    corpus_loglik,
    mixture_arity,
)

BUDGET_MIN = 5000
BUDGET_MAX = 150000


def default_iteration_budget(num_groups: int) -> int:
    """Sweep budget 5000 + 1500 per group, clamped to [5000, 150000]."""
    return min(BUDGET_MAX, max(BUDGET_MIN, 5000 + 1500 * num_groups))


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hyper: Hyperparams
    variant: str = "B"
    iterations: int | None = None
    burn_in: int | None = None
    seed: int = 0

    def resolved(self) -> tuple[int, int]:
        """(iterations, burn_in) with defaults filled in and validated."""
        iterations = self.iterations
        if iterations is None:
            iterations = default_iteration_budget(self.hyper.num_groups)
        burn_in = self.burn_in
        if burn_in is None:
            burn_in = iterations // 2
        if not iterations > burn_in >= 0:
            raise InferenceError(
                f"need iterations > burn_in >= 0, got {iterations} and {burn_in}"
            )
        return iterations, burn_in


@dataclass
class SamplerState:
    """Latent assignments plus their tallies.

    Count tables are derived data: after every sweep each table must
    equal the tally recomputed from the assignments.
    """

    z: np.ndarray
    switches: np.ndarray | None
    counts: dict[str, np.ndarray] = field(default_factory=dict)


def _corpus_arrays(corpus: Corpus):
    users = np.array([r.user_idx for r in corpus.records], dtype=np.int64)
    spots = np.array([r.spot_idx for r in corpus.records], dtype=np.int64)
    slots = np.array([r.time_slot for r in corpus.records], dtype=np.int64)
    tok_off = np.zeros(len(corpus.records) + 1, dtype=np.int64)
    for i, rec in enumerate(corpus.records):
        tok_off[i + 1] = tok_off[i] + len(rec.word_idxs)
    tok_words = np.fromiter(
        (w for rec in corpus.records for w in rec.word_idxs),
        dtype=np.int64,
        count=int(tok_off[-1]),
    )
    return users, spots, slots, tok_words, tok_off


def _stable_draw(seed: int, key: tuple, modulus: int) -> int:
    digest = blake2b(repr((seed, key)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % modulus


def _init_assignments(corpus: Corpus, seed: int, num_groups: int, arity: int):
    """Uniform-random init keyed by record content, not position.

    Keying by (content, occurrence#) makes the initial count tables
    invariant under permutation of the record order.
    """
    occurrence: dict[tuple, int] = {}
    z = np.empty(len(corpus.records), dtype=np.int64)
    total_tokens = sum(len(r.word_idxs) for r in corpus.records)
    switches = np.empty(total_tokens, dtype=np.int64) if arity else None
    pos = 0
    for d, rec in enumerate(corpus.records):
        content = (rec.user_idx, rec.spot_idx, rec.time_slot, rec.word_idxs)
        k = occurrence.get(content, 0)
        occurrence[content] = k + 1
        z[d] = _stable_draw(seed, (content, k), num_groups)
        if arity:
            for j in range(len(rec.word_idxs)):
                switches[pos] = _stable_draw(seed, (content, k, j), arity)
                pos += 1
    return z, switches


def recount(
    corpus: Corpus,
    z: np.ndarray,
    switches: np.ndarray | None,
    num_groups: int,
    variant: str,
) -> dict[str, np.ndarray]:
    """Tally all count tables from scratch."""
    dims = Dims.of_corpus(corpus)
    users, spots, slots, tok_words, tok_off = _corpus_arrays(corpus)
    sources = WORD_SOURCES[variant]
    arity = len(sources)
    g_dim = num_groups
    counts = {
        "n_g": np.zeros(g_dim, dtype=np.int64),
        "n_gu": np.zeros((g_dim, dims.num_users), dtype=np.int64),
        "n_gl": np.zeros((g_dim, dims.num_spots), dtype=np.int64),
        "n_gt": np.zeros((g_dim, dims.num_time_slots), dtype=np.int64),
        "n_gtok": np.zeros(g_dim, dtype=np.int64),
        "n_gw": np.zeros((g_dim, dims.num_words), dtype=np.int64),
    }
    np.add.at(counts["n_g"], z, 1)
    np.add.at(counts["n_gu"], (z, users), 1)
    np.add.at(counts["n_gl"], (z, spots), 1)
    np.add.at(counts["n_gt"], (z, slots), 1)
    if arity == 0:
        tok_groups = np.repeat(z, np.diff(tok_off))
        np.add.at(counts["n_gw"], (tok_groups, tok_words), 1)
        np.add.at(counts["n_gtok"], tok_groups, 1)
        return counts

    counts.update(
        {
            "n_lw": np.zeros((dims.num_spots, dims.num_words), dtype=np.int64),
            "n_ltok_mu": np.zeros(dims.num_spots, dtype=np.int64),
            "n_tw": np.zeros((dims.num_time_slots, dims.num_words), dtype=np.int64),
            "n_ttok_rho": np.zeros(dims.num_time_slots, dtype=np.int64),
            "n_sw": np.zeros((dims.num_spots, arity), dtype=np.int64),
            "n_ltok": np.zeros(dims.num_spots, dtype=np.int64),
        }
    )
    tok_groups = np.repeat(z, np.diff(tok_off))
    tok_spots = np.repeat(spots, np.diff(tok_off))
    tok_slots = np.repeat(slots, np.diff(tok_off))
    np.add.at(counts["n_sw"], (tok_spots, switches), 1)
    np.add.at(counts["n_ltok"], tok_spots, 1)
    for col, source in enumerate(sources):
        mask = switches == col
        if source == "mu":
            np.add.at(counts["n_lw"], (tok_spots[mask], tok_words[mask]), 1)
            np.add.at(counts["n_ltok_mu"], tok_spots[mask], 1)
        elif source == "rho":
            np.add.at(counts["n_tw"], (tok_slots[mask], tok_words[mask]), 1)
            np.add.at(counts["n_ttok_rho"], tok_slots[mask], 1)
        else:
            np.add.at(counts["n_gw"], (tok_groups[mask], tok_words[mask]), 1)
            np.add.at(counts["n_gtok"], tok_groups[mask], 1)
    return counts


def params_from_counts(
    counts: dict[str, np.ndarray], hyper: Hyperparams, variant: str, dims: Dims
) -> UemParams:
    """Posterior-mean (prior-smoothed) estimates from count tables."""
    h = hyper
    n_g = np.asarray(counts["n_g"], dtype=np.float64)
    theta = (n_g + h.alpha) / (n_g.sum() + h.alpha * h.num_groups)
    pi = (counts["n_gu"] + h.gamma) / (n_g[:, None] + h.gamma * dims.num_users)
    phi = (counts["n_gl"] + h.beta) / (n_g[:, None] + h.beta * dims.num_spots)
    tau = None
    if variant != "S":
        tau = (counts["n_gt"] + h.kappa) / (n_g[:, None] + h.kappa * dims.num_time_slots)
    n_gtok = np.asarray(counts["n_gtok"], dtype=np.float64)
    sigma = (counts["n_gw"] + h.delta) / (n_gtok[:, None] + h.delta * dims.num_words)
    sources = WORD_SOURCES[variant]
    mu = rho = eta = None
    if sources:
        if "mu" in sources:
            n_ltok_mu = np.asarray(counts["n_ltok_mu"], dtype=np.float64)
            mu = (counts["n_lw"] + h.epsilon) / (n_ltok_mu[:, None] + h.epsilon * dims.num_words)
        if "rho" in sources:
            n_ttok_rho = np.asarray(counts["n_ttok_rho"], dtype=np.float64)
            rho = (counts["n_tw"] + h.iota) / (n_ttok_rho[:, None] + h.iota * dims.num_words)
        n_ltok = np.asarray(counts["n_ltok"], dtype=np.float64)
        eta = (counts["n_sw"] + h.eta_prior) / (n_ltok[:, None] + h.eta_prior * len(sources))
    params = UemParams(
        variant=variant, theta=theta, pi=pi, phi=phi, sigma=sigma,
        tau=tau, mu=mu, rho=rho, eta=eta,
    )
    params.validate()
    return params


class GibbsSampler:
    """Owns one fit: corpus arrays, assignments, counts, and the RNG."""

    def __init__(self, train: Corpus, config: TrainConfig, backend: str = "auto"):
        if train.num_records < 1:
            raise InferenceError("training corpus is empty")
        self.config = config
        self.iterations, self.burn_in = config.resolved()
        self.variant = config.variant
        self.hyper = config.hyper
        self.dims = Dims.of_corpus(train)
        self.arity = mixture_arity(config.variant)
        self._sweep_b, self._sweep_mix = _kernels.get_kernel(backend)
        self.backend = backend if backend != "auto" else _kernels.active_backend()

        (self._users, self._spots, self._slots,
         self._tok_words, self._tok_off) = _corpus_arrays(train)
        self.z, self.switches = _init_assignments(
            train, config.seed, config.hyper.num_groups, self.arity
        )
        self.counts = recount(train, self.z, self.switches, config.hyper.num_groups, self.variant)
        self._train = train
        self._rng = np.random.default_rng(config.seed)
        self.sweeps_done = 0
        self._avg: dict[str, np.ndarray] | None = None
        self._avg_sweeps = 0
        self.trace: list[tuple[int, float, float]] = []

    @property
    def state(self) -> SamplerState:
        return SamplerState(z=self.z, switches=self.switches, counts=self.counts)

    def check_counts(self) -> bool:
        """True iff every table equals a fresh tally of the assignments."""
        fresh = recount(self._train, self.z, self.switches, self.hyper.num_groups, self.variant)
        return all(np.array_equal(self.counts[k], fresh[k]) for k in fresh)

    def sweep(self) -> None:
        """Resample every record's group (and each token's switch)."""
        c = self.counts
        if self.arity == 0:
            uniforms = self._rng.random(len(self.z))
            self._sweep_b(
                self.z, self._users, self._spots, self._slots,
                self._tok_words, self._tok_off,
                c["n_g"], c["n_gu"], c["n_gl"], c["n_gt"], c["n_gtok"], c["n_gw"],
                self.hyper.alpha, self.hyper.beta, self.hyper.gamma,
                self.hyper.delta, self.hyper.kappa,
                uniforms,
            )
        else:
            sources = WORD_SOURCES[self.variant]
            uniforms = self._rng.random(len(self.z) + len(self._tok_words))
            self._sweep_mix(
                self.z, self.switches, self._users, self._spots, self._slots,
                self._tok_words, self._tok_off,
                c["n_g"], c["n_gu"], c["n_gl"], c["n_gt"], c["n_gtok"], c["n_gw"],
                c["n_lw"], c["n_ltok_mu"], c["n_tw"], c["n_ttok_rho"],
                c["n_sw"], c["n_ltok"],
                self.hyper.alpha, self.hyper.beta, self.hyper.gamma,
                self.hyper.delta, self.hyper.kappa,
                self.hyper.epsilon, self.hyper.iota, self.hyper.eta_prior,
                "mu" in sources, "rho" in sources, self.variant != "S",
                uniforms,
            )
        self.sweeps_done += 1
        if self.sweeps_done > self.burn_in:
            if self._avg is None:
                self._avg = {k: np.zeros_like(v, dtype=np.float64) for k, v in c.items()}
            for k, v in c.items():
                self._avg[k] += v
            self._avg_sweeps += 1

    def current_params(self) -> UemParams:
        return params_from_counts(self.counts, self.hyper, self.variant, self.dims)

    def posterior_mean_params(self) -> UemParams:
        """Estimates from counts averaged over post-burn-in sweeps."""
        if self._avg is None:
            return self.current_params()
        averaged = {k: v / self._avg_sweeps for k, v in self._avg.items()}
        return params_from_counts(averaged, self.hyper, self.variant, self.dims)

    def heldout_mean_loglik(self, validation: Corpus) -> float:
        if validation.num_records == 0:
            raise InferenceError("validation corpus is empty")
        return float(np.mean(corpus_loglik(self.current_params(), validation)))

    def heldout_trace(self) -> list[float]:
        """Recorded held-out values; empty before the first traced sweep."""
        return [value for _, value, _ in self.trace]

    def run(
        self,
        validation: Corpus | None = None,
        trace_every: int = 1,
        progress: Callable[[int, float, float], None] | None = None,
    ) -> None:
        started = time.perf_counter()
        for i in range(self.iterations):
            self.sweep()
            if (i + 1) % trace_every:
                continue
            elapsed = time.perf_counter() - started
            if validation is not None:
                value = self.heldout_mean_loglik(validation)
                self.trace.append((self.sweeps_done, value, elapsed))
                if progress is not None:
                    progress(self.sweeps_done, value, elapsed)
            elif progress is not None:
                progress(self.sweeps_done, float("nan"), elapsed)


def fit(
    train: Corpus,
    config: TrainConfig,
    backend: str = "auto",
    validation: Corpus | None = None,
    trace_every: int = 1,
    progress: Callable[[int, float, float], None] | None = None,
) -> UemParams:
    """Fit posterior-mean parameters; deterministic per (corpus, config)."""
    sampler = GibbsSampler(train, config, backend=backend)
    sampler.run(validation=validation, trace_every=trace_every, progress=progress)
    return sampler.posterior_mean_params()


# ---------------------------------------------------------------------------
# Fit-quality utilities (group labels are non-identifiable)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance between two distributions."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def align_groups(phi_ref: np.ndarray, phi_fit: np.ndarray) -> np.ndarray:
    """Hungarian match of fitted groups to reference groups.

    Maximizes cosine similarity between spot-distribution rows; returns
    perm with perm[ref_g] = fitted_g.
    """
    ref = np.asarray(phi_ref, dtype=np.float64)
    fit_rows = np.asarray(phi_fit, dtype=np.float64)
    ref_norm = ref / np.linalg.norm(ref, axis=1, keepdims=True)
    fit_norm = fit_rows / np.linalg.norm(fit_rows, axis=1, keepdims=True)
    similarity = ref_norm @ fit_norm.T
    rows, cols = linear_sum_assignment(-similarity)
    perm = np.empty(len(rows), dtype=np.int64)
    perm[rows] = cols
    return perm
