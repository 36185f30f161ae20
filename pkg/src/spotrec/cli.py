"""Command-line entry points: ingest, synth, train, eval, recommend, serve, bench."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import Corpus, CorpusError, filter_min_pois, ingest, serialize, time_split
from .evaluate import EvalError, ExperimentConfig, run_experiment
from .inference import GibbsSampler, TrainConfig, fit
from .model import (
    Dims,
    Hyperparams,
    ModelError,
    UemParams,
    generate_corpus,
    load_params,
    sample_params,
    save_params,
)
from .recommend import (
    RatedItem,
    RecommendError,
    build_method_catalog,
    group_posterior,
    make_rating_distribution,
    score_spots_for_posterior,
    score_locations,
)

ENV_MODEL = "SPOTREC_MODEL"
ENV_BIND = "SPOTREC_BIND"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise CorpusError("config file must hold a JSON object")
    return doc


def _print_summary(corpus: Corpus) -> None:
    for key, value in corpus.summary().items():
        print(f"{key}={value}")


def cmd_ingest(args) -> int:
    corpus = ingest(args.input, format=args.format)
    if args.min_pois:
        corpus = filter_min_pois(corpus, args.min_pois)
    _print_summary(corpus)
    if args.output:
        serialize(corpus, args.output, format="csv" if str(args.output).endswith(".csv") else "jsonl")
        print(f"written={args.output}")
    return 0


def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    hyper = Hyperparams(num_groups=args.groups)
    if args.params:
        params, _ = load_params(args.params)
    else:
        dims = Dims(args.users, args.spots, args.words, args.time_slots)
        params = sample_params(hyper, dims, rng, variant=args.variant)
    gen = generate_corpus(params, args.records, args.words_per_record, rng)
    serialize(gen.corpus, args.output)
    _print_summary(gen.corpus)
    if args.params_out:
        save_params(params, args.params_out)
        print(f"params_written={args.params_out}")
    print(f"written={args.output}")
    return 0


def cmd_train(args) -> int:
    corpus = ingest(args.input, format=args.format)
    corpus = filter_min_pois(corpus, args.min_pois)
    split = time_split(corpus, args.ratio, seed=args.seed)
    hyper = Hyperparams(num_groups=args.groups)
    config = TrainConfig(
        hyper=hyper,
        variant=args.variant,
        iterations=args.iterations,
        burn_in=args.burn_in,
        seed=args.seed,
    )
    iterations, _ = config.resolved()
    trace_every = args.trace_every or max(1, iterations // 200)

    def progress(sweep: int, heldout: float, elapsed: float) -> None:
        print(
            json.dumps({"sweep": sweep, "heldout": heldout, "elapsed": round(elapsed, 3)}),
            file=sys.stderr,
        )

    params = fit(
        split.train, config, validation=split.test,
        trace_every=trace_every, progress=progress,
    )
    vocab = {
        "users": corpus.users.items,
        "spots": corpus.spots.items,
        "words": corpus.words.items,
    }
    save_params(params, args.output, vocab=vocab)
    print(f"model_written={args.output}")
    return 0


def cmd_eval(args) -> int:
    corpus = ingest(args.input, format=args.format)
    config = ExperimentConfig(
        variant=args.variant,
        method=args.method,
        split=args.split,
        ratio=args.ratio,
        k_values=tuple(int(k) for k in args.k.split(",")),
        runs=args.runs,
        num_groups=args.groups,
        rating_kind=args.rating_kind,
        rating_sigma=args.rating_sigma,
        seed=args.seed,
        iterations=args.iterations,
        burn_in=args.burn_in,
        min_pois=args.min_pois,
        floor=args.floor,
    )
    report = run_experiment(config, corpus)
    Path(args.output).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        report.write_csv(args.csv)
    for k, avg in sorted(report.averages.items()):
        print(
            f"k={k} precision={avg['precision']:.4f} recall={avg['recall']:.4f} "
            f"f={avg['f']:.4f} gini={report.gini_at_k.get(k, float('nan')):.4f}"
        )
    print(f"report_written={args.output}")
    return 0


def _ratings_from_file(path: str, vocab: dict) -> list[RatedItem]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    if not isinstance(rows, list) or not rows:
        raise RecommendError("ratings file must hold a non-empty JSON array")
    spot_index = {name: i for i, name in enumerate(vocab.get("spots", []))}
    word_index = {name: i for i, name in enumerate(vocab.get("words", []))}
    items = []
    for i, row in enumerate(rows):
        spot_name = row.get("spot")
        words = row.get("words", [])
        spot = None
        if spot_name is not None:
            if spot_name not in spot_index:
                raise RecommendError(f"ratings row {i}: unknown spot {spot_name!r}")
            spot = spot_index[spot_name]
        word_idxs = []
        for w in words:
            if w not in word_index:
                raise RecommendError(f"ratings row {i}: unknown word {w!r}")
            word_idxs.append(word_index[w])
        items.append(
            RatedItem(
                image_id=str(row.get("image_id", f"file-{i}")),
                score=int(row["score"]),
                spot=spot,
                words=tuple(word_idxs),
            )
        )
    return items


def cmd_recommend(args) -> int:
    params, vocab = load_params(args.model)
    if vocab is None:
        raise ModelError("model file has no vocabularies; retrain with the CLI")
    spots = vocab["spots"]
    if args.user is not None:
        users = {name: i for i, name in enumerate(vocab["users"])}
        if args.user not in users:
            print(
                f"error: user {args.user!r} is not in the trained model; "
                "collect ratings and use `spotrec recommend --ratings` or the session API",
                file=sys.stderr,
            )
            return 1
        ranked = score_locations(params, users[args.user])[: args.k]
    else:
        if not args.corpus:
            print("error: --ratings requires --corpus to build the item catalog", file=sys.stderr)
            return 1
        corpus = ingest(args.corpus)
        catalog = build_method_catalog(corpus, args.method)
        ratings = _ratings_from_file(args.ratings, vocab)
        dist = make_rating_distribution(args.rating_kind, args.rating_sigma)
        posterior = group_posterior(
            params, ratings, dist, catalog, args.method,
            rng=np.random.default_rng(args.seed),
        )
        ranked = score_spots_for_posterior(params, posterior)[: args.k]
    for spot, score in ranked:
        print(f"{spots[spot]}\t{score:.6g}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    model_path = os.environ.get(ENV_MODEL, args.model)
    bind = os.environ.get(ENV_BIND, f"{args.host}:{args.port}")
    host, _, port = bind.rpartition(":")
    config = ServiceConfig(
        model_path=model_path,
        corpus_path=args.corpus,
        top_k=args.k,
        idle_seconds=args.idle_timeout,
        rating_kind=args.rating_kind,
        rating_sigma=args.rating_sigma,
        floor=args.floor,
    )
    app = create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_bench(args) -> int:
    """Compare sweep throughput of the compiled and pure-Python kernels."""
    rng = np.random.default_rng(args.seed)
    hyper = Hyperparams(num_groups=args.groups)
    dims = Dims(num_users=50, num_spots=40, num_words=30)
    params = sample_params(hyper, dims, rng, variant=args.variant)
    gen = generate_corpus(params, args.records, 4, rng)
    config = TrainConfig(
        hyper=hyper, variant=args.variant, iterations=args.sweeps, burn_in=0, seed=args.seed
    )
    results = {}
    backends = ["c", "python"] if _kernels.active_backend() == "c" else ["python"]
    for backend in backends:
        sampler = GibbsSampler(gen.corpus, config, backend=backend)
        started = time.perf_counter()
        for _ in range(args.sweeps):
            sampler.sweep()
        elapsed = time.perf_counter() - started
        results[backend] = elapsed
        rate = args.records * args.sweeps / elapsed
        print(f"backend={backend} sweeps={args.sweeps} seconds={elapsed:.3f} records_per_s={rate:,.0f}")
    if "c" in results and "python" in results:
        print(f"speedup={results['python'] / results['c']:.1f}x")
    else:
        print("speedup=n/a (compiled kernel unavailable)")
    return 0


def build_parser(config_defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spotrec",
        description="Sightseeing spot recommendation from latent user-experience groups.",
    )
    parser.add_argument("--config", help="JSON config file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = []

    p = sub.add_parser("ingest", help="build a corpus and print its summary")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default=None)
    p.add_argument("--min-pois", type=int, default=0, help="filter users below this many distinct spots")
    p.add_argument("--output", help="write the (filtered) corpus back out")
    p.set_defaults(func=cmd_ingest)
    subparsers.append(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus from sampled or given parameters")
    p.add_argument("--output", required=True)
    p.add_argument("--records", type=int, default=10000)
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--spots", type=int, default=40)
    p.add_argument("--words", type=int, default=30)
    p.add_argument("--time-slots", type=int, default=12)
    p.add_argument("--words-per-record", type=int, default=4)
    p.add_argument("--variant", choices=["B", "S", "T", "ST"], default="B")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="generate from an existing model file instead of sampling")
    p.add_argument("--params-out", help="save the generating parameters")
    p.set_defaults(func=cmd_synth)
    subparsers.append(p)

    p = sub.add_parser("train", help="fit a model on the time-split train side and save it")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--variant", choices=["B", "S", "T", "ST"], default="B")
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--min-pois", type=int, default=2)
    p.add_argument("--trace-every", type=int, default=None)
    p.set_defaults(func=cmd_train)
    subparsers.append(p)

    p = sub.add_parser("eval", help="run the experiment protocol and write a report")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--csv", help="also write one row per user/run/k")
    p.add_argument("--variant", choices=["B", "S", "T", "ST"], default="B")
    p.add_argument("--method", choices=["base", "al", "wtol", "wl"], default="al")
    p.add_argument("--split", choices=["time", "user"], default="time")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--k", default="5,10,15")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--rating-kind", choices=["normal", "exponential"], default="normal")
    p.add_argument("--rating-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--min-pois", type=int, default=2)
    p.add_argument("--floor", type=float, default=0.01)
    p.set_defaults(func=cmd_eval)
    subparsers.append(p)

    p = sub.add_parser("recommend", help="top-k spots for a known user or a ratings file")
    p.add_argument("--model", required=True)
    p.add_argument("--user", help="user id seen in training")
    p.add_argument("--ratings", help="JSON array of rated items for a new user")
    p.add_argument("--corpus", help="corpus file for catalog construction (ratings mode)")
    p.add_argument("--method", choices=["al", "wtol", "wl"], default="al")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rating-kind", choices=["normal", "exponential"], default="normal")
    p.add_argument("--rating-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_recommend)
    subparsers.append(p)

    p = sub.add_parser("serve", help="start the rating-session HTTP API")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--idle-timeout", type=float, default=1800.0)
    p.add_argument("--rating-kind", choices=["normal", "exponential"], default="normal")
    p.add_argument("--rating-sigma", type=float, default=1.0)
    p.add_argument("--floor", type=float, default=0.01)
    p.set_defaults(func=cmd_serve)
    subparsers.append(p)

    p = sub.add_parser("bench", help="compare compiled vs pure-Python sweep kernels")
    p.add_argument("--records", type=int, default=5000)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--variant", choices=["B", "S", "T", "ST"], default="B")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    subparsers.append(p)

    # Parser-level defaults beat argument-level defaults, so config file
    # values apply unless overridden on the command line.
    if config_defaults:
        normalized = {k.replace("-", "_"): v for k, v in config_defaults.items()}
        for p in subparsers:
            p.set_defaults(**normalized)
    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    # Pre-scan for --config so file values can act as parser defaults.
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    try:
        parser = build_parser(_load_config_file(config_path))
        args = parser.parse_args(argv)
        return args.func(args)
    except (CorpusError, ModelError, RecommendError, EvalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
