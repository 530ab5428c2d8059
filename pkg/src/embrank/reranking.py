"""Second-stage entity reranking.

Scores each retrieval candidate by its embedding similarity to the entities
linked in the query, then blends that signal with the first-stage score via a
convex interpolation weight. Splitting preparation from the final blend lets
the tuner sweep the weight cheaply over a fixed candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .embedding import EmbeddingTable
from .util import ParseError, ValidationError, atomic_write, cosine, fmt_g6

DEFAULT_RUN_TAG = "geeer"


class RankEntry(NamedTuple):
    entity: str
    score: float
    rank: int


@dataclass
class LinkedQuery:
    """Entities an upstream linker attached to a query, with confidences in [0, 1]."""

    query_id: str
    linked: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        for entity, confidence in self.linked:
            if not 0.0 <= confidence <= 1.0:
                raise ValidationError(
                    f"confidence for {entity!r} in query {self.query_id!r} outside [0, 1]: {confidence}"
                )


@dataclass
class Ranking:
    """An ordered candidate list for one query with dense 1-based ranks."""

    query_id: str
    entries: list[RankEntry]

    @classmethod
    def from_scores(cls, query_id: str, scored: Iterable[tuple[str, float]]) -> "Ranking":
        """Sort by score descending (entity id ascending on ties) and assign ranks."""
        ordered = sorted(scored, key=lambda item: (-item[1], item[0]))
        entries = [RankEntry(entity, score, rank) for rank, (entity, score) in enumerate(ordered, 1)]
        return cls(query_id, entries)

    def entities(self) -> list[str]:
        return [entry.entity for entry in self.entries]


@dataclass
class RerankConfig:
    lam: float = 0.5
    top_k: int = 1000
    normalize_base: bool = True
    missing_embedding_score: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"interpolation weight must lie in [0, 1], got {self.lam}")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")


def parse_run(path) -> dict[str, Ranking]:
    """Read a 6-column TREC run file into per-query rankings.

    Ranks and scores in the file are untrusted; entries are re-sorted by
    (score desc, entity asc) and re-ranked densely from 1.
    """
    per_query: dict[str, list[tuple[str, float]]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise ParseError(path, line_no, f"run line needs 6 columns, got {len(fields)}")
            query_id, _, entity, _, score_text, _ = fields
            try:
                score = float(score_text)
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric score {score_text!r}") from None
            if (query_id, entity) in seen:
                raise ParseError(path, line_no, f"duplicate entry for ({query_id}, {entity})")
            seen.add((query_id, entity))
            per_query.setdefault(query_id, []).append((entity, score))
    return {qid: Ranking.from_scores(qid, rows) for qid, rows in per_query.items()}


def write_run(run: dict[str, Ranking], path, tag: str = DEFAULT_RUN_TAG) -> None:
    with atomic_write(path) as out:
        for query_id in sorted(run):
            for entry in run[query_id].entries:
                out.write(
                    f"{query_id} Q0 {entry.entity} {entry.rank} {fmt_g6(entry.score)} {tag}\n"
                )


def parse_annotations(path) -> dict[str, LinkedQuery]:
    """Read the query->linked-entity TSV; repeated (query, entity) rows keep the max confidence."""
    confidences: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise ParseError(path, line_no, f"annotation line needs 3 fields, got {len(fields)}")
            query_id, entity, conf_text = fields
            if any(ch.isspace() for ch in entity) or not entity:
                raise ParseError(path, line_no, f"bad entity id {entity!r}")
            try:
                confidence = float(conf_text)
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric confidence {conf_text!r}") from None
            if not 0.0 <= confidence <= 1.0:
                raise ParseError(path, line_no, f"confidence outside [0, 1]: {confidence}")
            bucket = confidences.setdefault(query_id, {})
            bucket[entity] = max(confidence, bucket.get(entity, confidence))
    return {
        qid: LinkedQuery(qid, sorted(linked.items()))
        for qid, linked in confidences.items()
    }


def write_annotations(queries: dict[str, LinkedQuery], path) -> None:
    with atomic_write(path) as out:
        for query_id in sorted(queries):
            for entity, confidence in queries[query_id].linked:
                out.write(f"{query_id}\t{entity}\t{fmt_g6(confidence)}\n")


def esim(
    query: LinkedQuery,
    candidate: str,
    embeddings: EmbeddingTable,
    missing_embedding_score: float = 0.0,
) -> float:
    """Confidence-weighted cosine similarity between a candidate and the query's linked entities.

    Every (candidate, linked-entity) term where either side lacks an embedding
    contributes ``missing_embedding_score`` instead of a cosine.
    """
    candidate_vec = embeddings.entity_vector(candidate)
    total = 0.0
    for entity, confidence in query.linked:
        linked_vec = embeddings.entity_vector(entity)
        if candidate_vec is None or linked_vec is None:
            total += missing_embedding_score
        else:
            total += confidence * cosine(candidate_vec, linked_vec)
    return total


def interpolate(base: float, f: float, lam: float) -> float:
    """Convex blend (1 - lam) * base + lam * f."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"interpolation weight must lie in [0, 1], got {lam}")
    return (1.0 - lam) * base + lam * f


@dataclass
class PreparedQuery:
    """Per-candidate base and similarity scores, fixed across interpolation weights."""

    query_id: str
    entities: list[str]
    base: np.ndarray
    sim: np.ndarray


def prepare_rerank(
    run: Ranking, query: LinkedQuery | None, embeddings: EmbeddingTable, cfg: RerankConfig
) -> PreparedQuery:
    """Truncate to top_k, normalize base scores, and precompute similarity scores."""
    kept = run.entries[: cfg.top_k]
    entities = [entry.entity for entry in kept]
    base = np.array([entry.score for entry in kept], dtype=float)
    if cfg.normalize_base and base.size:
        lo, hi = base.min(), base.max()
        # a constant column carries no ordering information; map it to 1.0
        base = np.ones_like(base) if hi == lo else (base - lo) / (hi - lo)
    if query is None or not query.linked:
        sim = np.zeros(len(entities))
    else:
        sim = np.array(
            [esim(query, entity, embeddings, cfg.missing_embedding_score) for entity in entities]
        )
    return PreparedQuery(run.query_id, entities, base, sim)


def apply_interpolation(prepared: PreparedQuery, lam: float) -> Ranking:
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"interpolation weight must lie in [0, 1], got {lam}")
    blended = (1.0 - lam) * prepared.base + lam * prepared.sim
    return Ranking.from_scores(prepared.query_id, zip(prepared.entities, blended.tolist()))


def rerank(
    run: Ranking, query: LinkedQuery | None, embeddings: EmbeddingTable, cfg: RerankConfig
) -> Ranking:
    """Blend base and embedding-similarity scores and re-sort one query's candidates."""
    return apply_interpolation(prepare_rerank(run, query, embeddings, cfg), cfg.lam)
