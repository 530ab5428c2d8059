"""Command-line entry point wiring the pipeline together.

Subcommands follow the pipeline order: ``vocab`` builds the joint vocabulary,
``train`` learns embeddings, ``rerank`` blends a retrieval run with embedding
similarity, ``tune`` cross-validates the interpolation weight, ``eval`` and
``compare`` measure runs, and ``analyze`` audits cluster structure. Exit codes:
0 success, 1 runtime/IO failure, 2 usage or validation failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, corpus as corpus_mod, evaluation, reranking, tuning
from .embedding import TrainingConfig, load_embeddings, save_embeddings, train
from .util import ParseError, ValidationError, atomic_write, fmt_g6


def _bool_flag(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _cutoff_list(text: str) -> list[int]:
    try:
        cutoffs = [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None
    if not cutoffs or any(k < 1 for k in cutoffs):
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}")
    return cutoffs


def cmd_vocab(args) -> int:
    corpus = corpus_mod.parse_corpus(args.corpus)
    config = corpus_mod.VocabConfig(
        min_word_count=args.min_word_count,
        min_entity_count=args.min_entity_count,
        include_disambiguation=args.disambiguation,
        disambiguation_ids=(
            None if args.disambiguation else frozenset(corpus.disambiguation_ids)
        ),
    )
    vocab = corpus_mod.build_vocabulary(corpus, config)
    corpus_mod.save_vocabulary(vocab, args.output)
    print(f"vocabulary: {vocab.n_words} words, {vocab.n_entities} entities -> {args.output}")
    if args.assessed:
        if not args.coverage_output:
            raise ValidationError("--assessed requires --coverage-output")
        qrels = evaluation.parse_qrels(args.assessed)
        assessed = {entity for _, entity in qrels.judgments}
        report = corpus_mod.coverage_report(vocab, assessed, corpus)
        corpus_mod.write_coverage_report(report, args.coverage_output)
        print(
            f"coverage: {len(report.covered)} covered, {len(report.no_emb)} without embedding, "
            f"{len(report.no_page)} without page -> {args.coverage_output}"
        )
    return 0


def cmd_train(args) -> int:
    corpus = corpus_mod.parse_corpus(args.corpus)
    vocab = corpus_mod.load_vocabulary(args.vocab)
    config = TrainingConfig(
        dimension=args.dimension,
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        min_lr=args.min_lr,
        use_link_graph=args.link_graph,
        seed=args.seed,
        subsample_threshold=args.subsample,
        parallel_workers=args.workers,
    )
    model, stats = train(corpus, vocab, config)
    save_embeddings(model, vocab, args.output)
    print(f"embeddings: {len(vocab)} vectors of dimension {config.dimension} -> {args.output}")
    if args.stats_output:
        with atomic_write(args.stats_output) as out:
            out.write("epoch\tloss_word\tloss_link\tloss_anchor\tloss_total\n")
            for epoch in range(len(stats.loss_total)):
                out.write(
                    f"{epoch}\t{fmt_g6(stats.loss_w[epoch])}\t{fmt_g6(stats.loss_e[epoch])}"
                    f"\t{fmt_g6(stats.loss_a[epoch])}\t{fmt_g6(stats.loss_total[epoch])}\n"
                )
            for component in ("word", "link", "anchor"):
                out.write(f"pairs_{component}\t{stats.pair_counts[component]}\n")
            out.write(f"wall_seconds\t{fmt_g6(stats.wall_seconds)}\n")
        print(f"training stats -> {args.stats_output}")
    return 0


def cmd_rerank(args) -> int:
    runs = reranking.parse_run(args.run)
    queries = reranking.parse_annotations(args.annotations)
    table = load_embeddings(args.embeddings)
    config = reranking.RerankConfig(
        lam=args.lam,
        top_k=args.top_k,
        normalize_base=args.normalize_base,
        missing_embedding_score=args.missing_score,
    )
    output = {
        qid: reranking.rerank(run, queries.get(qid), table, config) for qid, run in runs.items()
    }
    reranking.write_run(output, args.output, tag=args.tag)
    print(f"reranked {len(output)} queries -> {args.output}")
    return 0


def cmd_tune(args) -> int:
    runs = reranking.parse_run(args.run)
    queries = reranking.parse_annotations(args.annotations)
    table = load_embeddings(args.embeddings)
    qrels = evaluation.parse_qrels(args.qrels)
    if args.folds:
        folds = tuning.load_folds(args.folds)
    else:
        folds = tuning.make_folds(qrels.queries(), k=args.num_folds, seed=args.seed)
    config = tuning.TuneConfig(
        restarts=args.restarts, cutoff=args.cutoff, seed=args.seed, gain=args.gain
    )
    rerank_cfg = reranking.RerankConfig(
        lam=0.0, top_k=args.top_k, normalize_base=args.normalize_base
    )
    result = tuning.tune_lambda(runs, queries, qrels, table, folds, config, rerank_cfg)
    reranking.write_run(result.cv_run, args.output, tag=args.tag)
    tuning.write_lambda_report(result, args.lambda_output)
    print(f"lambda = {result.mean_lambda:.2f} ± {result.sd_lambda:.2f} over {folds.k} folds")
    print(f"cross-validated run -> {args.output}; per-fold report -> {args.lambda_output}")
    return 0


def cmd_eval(args) -> int:
    runs = reranking.parse_run(args.run)
    qrels = evaluation.parse_qrels(args.qrels)
    result = evaluation.evaluate_run(runs, qrels, args.cutoffs, gain=args.gain)
    if args.output:
        evaluation.write_eval_report(result, args.output)
        print(f"evaluation report -> {args.output}")
    for k in args.cutoffs:
        print(f"ndcg_cut_{k}\tALL\t{result.mean[k]:.6f}")
    return 0


def cmd_compare(args) -> int:
    runs_a = reranking.parse_run(args.run_a)
    runs_b = reranking.parse_run(args.run_b)
    qrels = evaluation.parse_qrels(args.qrels)
    result_a = evaluation.evaluate_run(runs_a, qrels, args.cutoffs, gain=args.gain)
    result_b = evaluation.evaluate_run(runs_b, qrels, args.cutoffs, gain=args.gain)
    queries = qrels.queries()
    lines = ["measure\tmean_a\tmean_b\tt\tp\tsignificant"]
    for k in args.cutoffs:
        scores_a = [result_a.per_query[k][q] for q in queries]
        scores_b = [result_b.per_query[k][q] for q in queries]
        t, p = evaluation.paired_t_test(scores_b, scores_a)
        marker = "*" if p < 0.05 else "-"
        lines.append(
            f"ndcg_cut_{k}\t{result_a.mean[k]:.6f}\t{result_b.mean[k]:.6f}"
            f"\t{fmt_g6(t)}\t{fmt_g6(p)}\t{marker}"
        )
    for line in lines:
        print(line)
    if args.output:
        with atomic_write(args.output) as out:
            out.write("\n".join(lines) + "\n")
    if args.gain_report:
        cutoff = args.cutoffs[-1]
        rows = analysis.query_gain_report(runs_a, runs_b, qrels, cutoff)
        analysis.write_gain_report(rows, cutoff, args.gain_report)
        print(f"per-query gains at cutoff {cutoff} -> {args.gain_report}")
    return 0


def cmd_analyze(args) -> int:
    table = load_embeddings(args.embeddings)
    qrels = evaluation.parse_qrels(args.qrels)
    cfg = analysis.CoherenceConfig(tau=args.tau, min_cluster_size=args.min_cluster_size)
    rows = analysis.per_query_coherence(qrels, table, cfg)
    if args.coherence_output:
        analysis.write_coherence_rows(rows, args.coherence_output)
        print(f"coherence rows ({len(rows)} queries) -> {args.coherence_output}")
    mean_coherence = float(np.mean([row[2] for row in rows])) if rows else float("nan")
    print(f"mean coherence at tau={fmt_g6(args.tau)}: {fmt_g6(mean_coherence)}")

    clusters = analysis.clusters_from_qrels(qrels, table)
    if args.summary_output:
        with atomic_write(args.summary_output) as out:
            out.write(f"clusters\t{len(clusters)}\n")
            out.write(f"qualifying_queries\t{len(rows)}\n")
            out.write(f"coherence_tau\t{fmt_g6(args.tau)}\n")
            out.write(f"coherence_mean\t{fmt_g6(mean_coherence)}\n")
            if len(clusters) >= 2:
                out.write(f"davies_bouldin\t{fmt_g6(analysis.davies_bouldin(clusters))}\n")
                out.write(f"silhouette\t{fmt_g6(analysis.silhouette(clusters))}\n")
        print(f"cluster summary -> {args.summary_output}")
    if args.projection_output:
        analysis.export_projection(clusters, args.projection_output)
        print(f"projection export -> {args.projection_output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embrank",
        description="Joint word/entity embeddings for entity-retrieval reranking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="build the joint word/entity vocabulary")
    p.add_argument("--corpus", required=True, help="corpus file in line-record format")
    p.add_argument("--output", required=True, help="vocabulary file to write")
    p.add_argument("--min-word-count", type=int, default=0)
    p.add_argument("--min-entity-count", type=int, default=0)
    p.add_argument("--disambiguation", type=_bool_flag, default=True, metavar="true|false",
                   help="keep disambiguation pages (default true)")
    p.add_argument("--assessed", help="qrels file whose entities are checked for coverage")
    p.add_argument("--coverage-output", help="where to write the coverage report")
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train joint embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True, help="vocabulary file from the vocab subcommand")
    p.add_argument("--output", required=True, help="embedding file to write")
    p.add_argument("--stats-output", help="optional per-epoch loss/pair-count TSV")
    p.add_argument("--dimension", type=int, default=100)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.025)
    p.add_argument("--min-lr", type=float, default=1e-4)
    p.add_argument("--link-graph", type=_bool_flag, default=True, metavar="true|false",
                   help="include link-graph pairs (default true)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--subsample", type=float, default=1e-4,
                   help="frequent-word subsampling threshold; 0 disables")
    p.add_argument("--workers", type=int, default=1,
                   help="training threads; more than 1 trades determinism for speed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="blend a run with embedding similarity")
    p.add_argument("--run", required=True, help="TREC-format base run")
    p.add_argument("--annotations", required=True, help="query entity-link TSV")
    p.add_argument("--embeddings", required=True, help="embedding file")
    p.add_argument("--output", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="interpolation weight in [0, 1]")
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--normalize-base", type=_bool_flag, default=True, metavar="true|false")
    p.add_argument("--missing-score", type=float, default=0.0,
                   help="per-term score when an embedding is missing")
    p.add_argument("--tag", default=reranking.DEFAULT_RUN_TAG)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("tune", help="cross-validate the interpolation weight")
    p.add_argument("--run", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--folds", help="fold assignment TSV; generated when omitted")
    p.add_argument("--num-folds", type=int, default=5)
    p.add_argument("--output", required=True, help="cross-validated run to write")
    p.add_argument("--lambda-output", required=True, help="per-fold weight report")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--cutoff", type=int, default=100)
    p.add_argument("--gain", choices=("linear", "exp"), default="linear")
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--normalize-base", type=_bool_flag, default=True, metavar="true|false")
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--tag", default=reranking.DEFAULT_RUN_TAG)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="evaluate a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs", type=_cutoff_list, default=[10, 100],
                   help="comma-separated rank cutoffs (default 10,100)")
    p.add_argument("--gain", choices=("linear", "exp"), default="linear")
    p.add_argument("--output", help="optional per-query report TSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired significance test between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs", type=_cutoff_list, default=[10, 100])
    p.add_argument("--gain", choices=("linear", "exp"), default="linear")
    p.add_argument("--output", help="optional summary TSV")
    p.add_argument("--gain-report", help="optional per-query delta report (last cutoff)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="cluster diagnostics over embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--tau", type=float, default=0.8, help="similarity threshold")
    p.add_argument("--min-cluster-size", type=int, default=11)
    p.add_argument("--coherence-output", help="per-query coherence TSV")
    p.add_argument("--summary-output", help="cluster validity summary TSV")
    p.add_argument("--projection-output", help="labeled vector TSV for projection tools")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
