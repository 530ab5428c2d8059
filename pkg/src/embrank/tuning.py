"""Cross-validated tuning of the interpolation weight.

Coordinate ascent degenerates to a single-coordinate line search here: from
each random start the weight moves in 0.05 steps toward strict improvements in
mean NDCG over the training folds, halving the step whenever neither direction
helps, until the step drops below 1e-3. The winning weight of each fold is
applied to that fold's held-out queries and the per-fold rankings are
concatenated into one cross-validated run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable
from .evaluation import Qrels, ndcg_at_k
from .reranking import LinkedQuery, PreparedQuery, Ranking, RerankConfig, apply_interpolation, prepare_rerank
from .util import ParseError, ValidationError, atomic_write, fmt_g6


@dataclass
class FoldAssignment:
    assignment: dict[str, int]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("fold count must be >= 1")
        used = set(self.assignment.values())
        if any(fold < 0 or fold >= self.k for fold in used):
            raise ValidationError(f"fold indices must lie in 0..{self.k - 1}")
        if used != set(range(self.k)):
            raise ValidationError("every fold must hold at least one query")

    def members(self, fold: int) -> list[str]:
        return sorted(q for q, f in self.assignment.items() if f == fold)


def make_folds(query_ids, k: int, seed: int) -> FoldAssignment:
    """Seeded shuffle then round-robin assignment; deterministic for a fixed seed."""
    ids = sorted(set(query_ids))
    if k < 1:
        raise ValidationError("fold count must be >= 1")
    if k > len(ids):
        raise ValidationError(f"cannot split {len(ids)} queries into {k} folds")
    random.Random(seed).shuffle(ids)
    return FoldAssignment({qid: i % k for i, qid in enumerate(ids)}, k)


def load_folds(path) -> FoldAssignment:
    assignment: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise ParseError(path, line_no, f"fold line needs 2 fields, got {len(fields)}")
            query_id, fold_text = fields
            try:
                fold = int(fold_text)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer fold {fold_text!r}") from None
            if fold < 0:
                raise ParseError(path, line_no, f"negative fold index {fold}")
            if query_id in assignment:
                raise ParseError(path, line_no, f"query {query_id!r} assigned twice")
            assignment[query_id] = fold
    if not assignment:
        raise ValidationError(f"{path}: empty fold file")
    return FoldAssignment(assignment, max(assignment.values()) + 1)


def save_folds(folds: FoldAssignment, path) -> None:
    with atomic_write(path) as out:
        for query_id in sorted(folds.assignment):
            out.write(f"{query_id}\t{folds.assignment[query_id]}\n")


@dataclass
class TuneConfig:
    restarts: int = 3
    cutoff: int = 100
    initial_step: float = 0.05
    min_step: float = 1e-3
    seed: int = 13
    gain: str = "linear"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.cutoff < 1:
            raise ValidationError("cutoff must be >= 1")
        if not 0 < self.min_step <= self.initial_step:
            raise ValidationError("need 0 < min_step <= initial_step")


@dataclass
class TuneResult:
    fold_lambdas: list[float]
    cv_run: dict[str, Ranking]
    mean_lambda: float
    sd_lambda: float


def _ascend(objective, start: float, initial_step: float, min_step: float) -> tuple[float, float]:
    """Step-halving line search from one start; returns (weight, objective value)."""
    lam = min(1.0, max(0.0, start))
    best = objective(lam)
    step = initial_step
    while step >= min_step:
        moved = False
        for candidate in (lam + step, lam - step):
            candidate = min(1.0, max(0.0, candidate))
            if candidate == lam:
                continue
            value = objective(candidate)
            if value > best:
                lam, best = candidate, value
                moved = True
                break
        if not moved:
            step /= 2.0
    return lam, best


def tune_lambda(
    base_runs: dict[str, Ranking],
    queries: dict[str, LinkedQuery],
    qrels: Qrels,
    embeddings: EmbeddingTable,
    folds: FoldAssignment,
    cfg: TuneConfig,
    rerank_cfg: RerankConfig | None = None,
) -> TuneResult:
    """Pick one interpolation weight per fold on its training queries, score the held-out fold.

    ``rerank_cfg`` supplies truncation/normalization settings; its weight field
    is ignored. Every judged query must carry a fold assignment.
    """
    rerank_cfg = rerank_cfg or RerankConfig(lam=0.0)
    judged = qrels.queries()
    missing = [q for q in judged if q not in folds.assignment]
    if missing:
        raise ValidationError(f"queries judged but not assigned to any fold: {missing[:5]}")

    prepared: dict[str, PreparedQuery] = {
        qid: prepare_rerank(run, queries.get(qid), embeddings, rerank_cfg)
        for qid, run in base_runs.items()
    }

    rng = random.Random(cfg.seed)
    fold_lambdas: list[float] = []
    cv_run: dict[str, Ranking] = {}
    for fold in range(folds.k):
        train_queries = [q for q in judged if folds.assignment[q] != fold]
        if not train_queries:
            raise ValidationError(f"fold {fold} leaves no training queries")

        cache: dict[float, float] = {}

        def objective(lam: float) -> float:
            if lam in cache:
                return cache[lam]
            total = 0.0
            for qid in train_queries:
                pq = prepared.get(qid)
                if pq is not None:
                    total += ndcg_at_k(apply_interpolation(pq, lam), qrels, cfg.cutoff, cfg.gain)
            value = total / len(train_queries)
            cache[lam] = value
            return value

        best_lam, best_value = None, -1.0
        for _ in range(cfg.restarts):
            lam, value = _ascend(objective, rng.random(), cfg.initial_step, cfg.min_step)
            if value > best_value:
                best_lam, best_value = lam, value
        fold_lambdas.append(best_lam)

        for qid in folds.members(fold):
            pq = prepared.get(qid)
            if pq is not None:
                cv_run[qid] = apply_interpolation(pq, best_lam)

    lams = np.array(fold_lambdas)
    return TuneResult(
        fold_lambdas=fold_lambdas,
        cv_run=cv_run,
        mean_lambda=float(lams.mean()),
        sd_lambda=float(lams.std(ddof=0)),
    )


def write_lambda_report(result: TuneResult, path) -> None:
    """One row per fold plus a mean +/- sd summary line (two decimals, like common reporting)."""
    with atomic_write(path) as out:
        for fold, lam in enumerate(result.fold_lambdas):
            out.write(f"lambda\t{fold}\t{fmt_g6(lam)}\n")
        out.write(f"MEAN\t{result.mean_lambda:.2f} ± {result.sd_lambda:.2f}\n")
