"""Cluster-structure diagnostics over trained embeddings.

Groups the relevant entities of each query into a labeled cluster and measures
how tightly they sit in embedding space: a pairwise-similarity coherence
score, Davies-Bouldin and Silhouette validity indices, and a TSV export for
external projection tools. Also includes a per-query gain report for
comparing two runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable
from .evaluation import Qrels, ndcg_at_k
from .util import ParseError, ValidationError, atomic_write, cosine, fmt_g6

__all__ = [
    "CoherenceConfig",
    "EntityCluster",
    "clusters_from_qrels",
    "coherence",
    "cosine",
    "davies_bouldin",
    "export_projection",
    "load_projection",
    "per_query_coherence",
    "query_gain_report",
    "silhouette",
    "write_coherence_rows",
    "write_gain_report",
]

PROJECTION_HEADER = "query_id\tentity_id\tvector"


@dataclass
class EntityCluster:
    """Vectors of the entities relevant to one query, labeled by the query id."""

    label: str
    members: list[tuple[str, np.ndarray]]

    def __post_init__(self):
        if not self.members:
            raise ValidationError(f"cluster {self.label!r} has no members")
        seen = set()
        dim = len(self.members[0][1])
        for entity, vector in self.members:
            if entity in seen:
                raise ValidationError(f"cluster {self.label!r} lists {entity!r} twice")
            seen.add(entity)
            if len(vector) != dim:
                raise ValidationError(f"cluster {self.label!r} mixes vector dimensions")

    @property
    def size(self) -> int:
        return len(self.members)

    def matrix(self) -> np.ndarray:
        return np.vstack([vector for _, vector in self.members])


@dataclass
class CoherenceConfig:
    tau: float = 0.8
    min_cluster_size: int = 11

    def __post_init__(self):
        if not -1.0 <= self.tau <= 1.0:
            raise ValidationError(f"similarity threshold must lie in [-1, 1], got {self.tau}")
        if self.min_cluster_size < 2:
            raise ValidationError("min_cluster_size must be >= 2")


def coherence(cluster: EntityCluster, tau: float) -> float:
    """Fraction of unordered member pairs whose cosine similarity reaches ``tau``."""
    m = cluster.size
    if m < 2:
        raise ValidationError(f"cluster {cluster.label!r} needs >= 2 members, has {m}")
    hits = 0
    vectors = [vector for _, vector in cluster.members]
    for i in range(m):
        for j in range(i + 1, m):
            if cosine(vectors[i], vectors[j]) >= tau:
                hits += 1
    return hits / (m * (m - 1) / 2)


def clusters_from_qrels(
    qrels: Qrels, embeddings: EmbeddingTable, min_grade: int = 1
) -> list[EntityCluster]:
    """One cluster per query from its relevant entities that have embeddings.

    Queries whose relevant entities all lack embeddings produce no cluster.
    """
    clusters = []
    for query_id in qrels.queries():
        members = []
        for entity, grade in sorted(qrels.grades_for(query_id).items()):
            if grade < min_grade:
                continue
            vector = embeddings.entity_vector(entity)
            if vector is not None:
                members.append((entity, np.asarray(vector, dtype=float)))
        if members:
            clusters.append(EntityCluster(query_id, members))
    return clusters


def per_query_coherence(
    qrels: Qrels, embeddings: EmbeddingTable, cfg: CoherenceConfig
) -> list[tuple[str, int, float]]:
    """(query_id, cluster size, coherence) rows, smallest clusters first."""
    rows = []
    for cluster in clusters_from_qrels(qrels, embeddings):
        if cluster.size >= cfg.min_cluster_size:
            rows.append((cluster.label, cluster.size, coherence(cluster, cfg.tau)))
    rows.sort(key=lambda row: (row[1], row[0]))
    return rows


def write_coherence_rows(rows: list[tuple[str, int, float]], path) -> None:
    with atomic_write(path) as out:
        out.write("query_id\tsize\tcoherence\n")
        for query_id, size, value in rows:
            out.write(f"{query_id}\t{size}\t{fmt_g6(value)}\n")


def _centroids_and_dispersions(clusters: list[EntityCluster]) -> tuple[np.ndarray, np.ndarray]:
    centroids = np.vstack([cluster.matrix().mean(axis=0) for cluster in clusters])
    dispersions = np.array(
        [
            float(np.linalg.norm(cluster.matrix() - centroid, axis=1).mean())
            for cluster, centroid in zip(clusters, centroids)
        ]
    )
    return centroids, dispersions


def davies_bouldin(clusters: list[EntityCluster]) -> float:
    """Davies-Bouldin index with Euclidean distances; lower means tighter, better-separated clusters."""
    if len(clusters) < 2:
        raise ValidationError("Davies-Bouldin needs at least 2 clusters")
    centroids, dispersions = _centroids_and_dispersions(clusters)
    worst = np.zeros(len(clusters))
    for i in range(len(clusters)):
        for j in range(len(clusters)):
            if i == j:
                continue
            gap = float(np.linalg.norm(centroids[i] - centroids[j]))
            if gap == 0.0:
                raise ValidationError(
                    f"clusters {clusters[i].label!r} and {clusters[j].label!r} share a centroid"
                )
            worst[i] = max(worst[i], (dispersions[i] + dispersions[j]) / gap)
    return float(worst.mean())


def silhouette(clusters: list[EntityCluster]) -> float:
    """Mean silhouette over all points, Euclidean; singleton-cluster points score 0."""
    if len(clusters) < 2:
        raise ValidationError("silhouette needs at least 2 clusters")
    matrices = [cluster.matrix() for cluster in clusters]
    scores = []
    for i, own in enumerate(matrices):
        for row in own:
            if len(own) == 1:
                scores.append(0.0)
                continue
            distances = np.linalg.norm(own - row, axis=1)
            a = float(distances.sum() / (len(own) - 1))  # excludes the zero self-distance
            b = min(
                float(np.linalg.norm(other - row, axis=1).mean())
                for j, other in enumerate(matrices)
                if j != i
            )
            scores.append((b - a) / max(a, b))
    if not scores:
        raise ValidationError("silhouette needs at least one point")
    return float(np.mean(scores))


def export_projection(clusters: list[EntityCluster], path) -> None:
    """TSV of labeled vectors for an external projection tool (one row per member)."""
    with atomic_write(path) as out:
        out.write(PROJECTION_HEADER + "\n")
        for cluster in clusters:
            for entity, vector in cluster.members:
                rendered = " ".join(fmt_g6(x) for x in vector)
                out.write(f"{cluster.label}\t{entity}\t{rendered}\n")


def load_projection(path) -> list[EntityCluster]:
    grouped: dict[str, list[tuple[str, np.ndarray]]] = {}
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        if header != PROJECTION_HEADER:
            raise ParseError(path, 1, f"expected header {PROJECTION_HEADER!r}")
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise ParseError(path, line_no, f"projection line needs 3 fields, got {len(fields)}")
            label, entity, rendered = fields
            try:
                vector = np.array([float(x) for x in rendered.split()])
            except ValueError:
                raise ParseError(path, line_no, "non-numeric vector component") from None
            grouped.setdefault(label, []).append((entity, vector))
    return [EntityCluster(label, members) for label, members in grouped.items()]


def query_gain_report(
    run_a: dict[str, "object"], run_b: dict[str, "object"], qrels: Qrels, cutoff: int
) -> list[tuple[str, float]]:
    """Per-query NDCG@cutoff difference (second run minus first), biggest gains first."""
    rows = []
    for query_id in qrels.queries():
        before = 0.0 if query_id not in run_a else ndcg_at_k(run_a[query_id], qrels, cutoff)
        after = 0.0 if query_id not in run_b else ndcg_at_k(run_b[query_id], qrels, cutoff)
        rows.append((query_id, after - before))
    rows.sort(key=lambda row: (-row[1], row[0]))
    return rows


def write_gain_report(rows: list[tuple[str, float]], cutoff: int, path) -> None:
    with atomic_write(path) as out:
        out.write(f"qid\tdelta@{cutoff}\n")
        for query_id, delta in rows:
            out.write(f"{query_id}\t{delta:.6f}\n")
