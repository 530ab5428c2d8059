"""Run the whole toolchain end to end on a generated two-community benchmark.

Generates corpus/qrels/annotations/baseline-run files, then drives every CLI
stage in order: vocabulary, training, reranking at a fixed weight, per-fold
weight tuning, evaluation, baseline-vs-tuned comparison, and cluster
diagnostics. All artifacts land in the chosen working directory.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from embrank.cli import main as cli  # noqa: E402
from embrank.synthetic import SyntheticConfig, write_benchmark  # noqa: E402


def step(argv):
    print(f"$ embrank {' '.join(argv)}")
    code = cli(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {argv}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="pipeline_out", help="where artifacts are written")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dimension", type=int, default=16)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--rerank-lambda", type=float, default=0.5)
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    print(f"generating benchmark under {work}/")
    paths = write_benchmark(work, SyntheticConfig(seed=args.seed))

    vocab = work / "vocab.tsv"
    emb = work / "embeddings.txt"
    step(["vocab", "--corpus", str(paths["corpus"]), "--output", str(vocab),
          "--assessed", str(paths["qrels"]), "--coverage-output", str(work / "coverage.tsv")])
    step(["train", "--corpus", str(paths["corpus"]), "--vocab", str(vocab),
          "--output", str(emb), "--stats-output", str(work / "train_stats.tsv"),
          "--dimension", str(args.dimension), "--epochs", str(args.epochs),
          "--seed", str(args.seed), "--subsample", "0"])
    step(["rerank", "--run", str(paths["run"]), "--annotations", str(paths["annotations"]),
          "--embeddings", str(emb), "--output", str(work / "reranked.txt"),
          "--lambda", str(args.rerank_lambda)])
    step(["tune", "--run", str(paths["run"]), "--annotations", str(paths["annotations"]),
          "--embeddings", str(emb), "--qrels", str(paths["qrels"]),
          "--num-folds", "2", "--output", str(work / "cv_run.txt"),
          "--lambda-output", str(work / "lambdas.tsv")])
    step(["eval", "--run", str(work / "cv_run.txt"), "--qrels", str(paths["qrels"]),
          "--output", str(work / "eval_cv.tsv")])
    step(["compare", "--run-a", str(paths["run"]), "--run-b", str(work / "cv_run.txt"),
          "--qrels", str(paths["qrels"]), "--output", str(work / "compare.tsv"),
          "--gain-report", str(work / "gains.tsv")])
    step(["analyze", "--embeddings", str(emb), "--qrels", str(paths["qrels"]),
          "--coherence-output", str(work / "coherence.tsv"),
          "--summary-output", str(work / "cluster_summary.tsv"),
          "--projection-output", str(work / "projection.tsv")])
    print(f"done; inspect {work}/ for all artifacts")


if __name__ == "__main__":
    main()
