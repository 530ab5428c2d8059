"""Graded relevance evaluation: NDCG at cutoffs and paired significance testing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .util import ParseError, ValidationError, atomic_write

VALID_GRADES = (0, 1, 2)


@dataclass
class Qrels:
    """Graded judgments keyed by (query_id, entity_id); grades are 0, 1, or 2."""

    judgments: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for key, grade in self.judgments.items():
            if grade not in VALID_GRADES:
                raise ValidationError(f"grade for {key} must be one of {VALID_GRADES}, got {grade}")

    def queries(self) -> list[str]:
        return sorted({qid for qid, _ in self.judgments})

    def grades_for(self, query_id: str) -> dict[str, int]:
        return {e: g for (q, e), g in self.judgments.items() if q == query_id}

    def grade(self, query_id: str, entity: str) -> int:
        return self.judgments.get((query_id, entity), 0)

    def relevant_entities(self, query_id: str) -> dict[str, int]:
        return {e: g for e, g in self.grades_for(query_id).items() if g > 0}


def parse_qrels(path) -> Qrels:
    judgments: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise ParseError(path, line_no, f"qrels line needs 4 columns, got {len(fields)}")
            query_id, _, entity, grade_text = fields
            try:
                grade = int(grade_text)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer grade {grade_text!r}") from None
            if grade not in VALID_GRADES:
                raise ParseError(path, line_no, f"grade must be one of {VALID_GRADES}, got {grade}")
            if (query_id, entity) in judgments:
                raise ParseError(path, line_no, f"duplicate judgment for ({query_id}, {entity})")
            judgments[(query_id, entity)] = grade
    return Qrels(judgments)


def write_qrels(qrels: Qrels, path) -> None:
    with atomic_write(path) as out:
        for (query_id, entity), grade in sorted(qrels.judgments.items()):
            out.write(f"{query_id} 0 {entity} {grade}\n")


def _gain(grade: int, kind: str) -> float:
    if kind == "exp":
        return float(2**grade - 1)
    return float(grade)


def ndcg_at_k(ranking, qrels: Qrels, k: int, gain: str = "linear") -> float:
    """NDCG at cutoff k with linear gain grade/log2(rank+1) by default.

    The ideal ranking sorts the query's grades descending. Queries with no
    relevant entity score 0 by convention.
    """
    if k < 1:
        raise ValidationError("cutoff must be >= 1")
    if gain not in ("linear", "exp"):
        raise ValidationError(f"unknown gain function {gain!r}")
    grades = qrels.grades_for(ranking.query_id)
    dcg = 0.0
    for position, entry in enumerate(ranking.entries[:k], start=1):
        dcg += _gain(grades.get(entry.entity, 0), gain) / math.log2(position + 1)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(_gain(g, gain) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


@dataclass
class EvalResult:
    """Per-query and mean NDCG values, keyed by cutoff."""

    per_query: dict[int, dict[str, float]]
    mean: dict[int, float]


def evaluate_run(run: dict[str, "object"], qrels: Qrels, cutoffs: list[int], gain: str = "linear") -> EvalResult:
    """Score every judged query at each cutoff; queries missing from the run score 0."""
    per_query: dict[int, dict[str, float]] = {k: {} for k in cutoffs}
    mean: dict[int, float] = {}
    queries = qrels.queries()
    for k in cutoffs:
        for query_id in queries:
            ranking = run.get(query_id)
            per_query[k][query_id] = 0.0 if ranking is None else ndcg_at_k(ranking, qrels, k, gain)
        mean[k] = float(np.mean(list(per_query[k].values()))) if queries else 0.0
    return EvalResult(per_query=per_query, mean=mean)


def write_eval_report(result: EvalResult, path) -> None:
    """trec_eval-like TSV: measure, query id (or ALL for the mean), value."""
    with atomic_write(path) as out:
        for k in sorted(result.per_query):
            measure = f"ndcg_cut_{k}"
            for query_id in sorted(result.per_query[k]):
                out.write(f"{measure}\t{query_id}\t{result.per_query[k][query_id]:.6f}\n")
            out.write(f"{measure}\tALL\t{result.mean[k]:.6f}\n")


def paired_t_test(scores_a, scores_b) -> tuple[float, float]:
    """Two-sided paired t-test on aligned per-query scores.

    Zero-variance differences degenerate: all-zero gives (0, 1), a constant
    nonzero shift gives (+/-inf, 0).
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"score lists differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValidationError("paired t-test needs at least 2 aligned scores")
    diff = a - b
    sd = float(diff.std(ddof=1))
    mean = float(diff.mean())
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t), n - 1))
    return t, p
