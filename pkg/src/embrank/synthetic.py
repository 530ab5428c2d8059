"""Synthetic two-community benchmark generator.

Produces a small corpus with two topical communities of entities: documents
draw tokens from community-specific word pools (plus a shared pool), anchors
and dense link records stay within a community, and the matching retrieval
files (qrels, annotations, shuffled candidate run) define one query per
community. The defaults keep the word channel deliberately noisy (documents
are mostly shared-pool tokens) so that full community structure is only
recoverable through the link graph, which makes the corpus a controlled
testbed for link-graph ablations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .util import atomic_write, fmt_g6


@dataclass
class SyntheticConfig:
    entities_per_community: int = 30
    documents: int = 200
    min_doc_length: int = 7
    max_doc_length: int = 13
    specific_words: int = 40
    shared_words: int = 20
    specific_share: float = 0.4
    link_probability: float = 0.6
    max_anchors_per_doc: int = 1
    linked_per_query: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.entities_per_community < 2 or self.documents < 1:
            raise ValueError("need at least 2 entities per community and 1 document")
        if not 0.0 <= self.link_probability <= 1.0:
            raise ValueError("link_probability must lie in [0, 1]")
        if not 0.0 <= self.specific_share <= 1.0:
            raise ValueError("specific_share must lie in [0, 1]")


COMMUNITIES = ("A", "B")


def _entities(cfg: SyntheticConfig, community: str) -> list[str]:
    return [f"{community}_{i:02d}" for i in range(cfg.entities_per_community)]


def _pool(cfg: SyntheticConfig, community: str) -> list[str]:
    stem = {"A": "alpha", "B": "beta"}[community]
    return [f"{stem}{i:02d}" for i in range(cfg.specific_words)]


def _shared_pool(cfg: SyntheticConfig) -> list[str]:
    return [f"common{i:02d}" for i in range(cfg.shared_words)]


def corpus_text(cfg: SyntheticConfig) -> str:
    rng = random.Random(cfg.seed)
    shared = _shared_pool(cfg)
    lines = ["# synthetic two-community corpus"]

    for d in range(cfg.documents):
        community = COMMUNITIES[d % 2]
        entities = _entities(cfg, community)
        pool = _pool(cfg, community)
        doc_entity = rng.choice(entities)
        length = rng.randint(cfg.min_doc_length, cfg.max_doc_length)
        tokens = [
            rng.choice(pool) if rng.random() < cfg.specific_share else rng.choice(shared)
            for _ in range(length)
        ]
        lines.append(f"DOC\t{doc_entity}\t{' '.join(tokens)}")
        n_anchors = rng.randint(1, cfg.max_anchors_per_doc)
        for start in sorted(rng.sample(range(length), n_anchors)):
            lines.append(f"ANCHOR\t{rng.choice(entities)}\t{start}\t1")

    for community in COMMUNITIES:
        entities = _entities(cfg, community)
        for src in entities:
            for dst in entities:
                if src != dst and rng.random() < cfg.link_probability:
                    lines.append(f"LINK\t{src}\t{dst}")

    return "\n".join(lines) + "\n"


def qrels_text(cfg: SyntheticConfig) -> str:
    lines = []
    for community in COMMUNITIES:
        for entity in _entities(cfg, community):
            lines.append(f"Q_{community} 0 {entity} 1")
    return "\n".join(lines) + "\n"


def annotations_text(cfg: SyntheticConfig) -> str:
    rng = random.Random(cfg.seed + 1)
    lines = []
    for community in COMMUNITIES:
        linked = rng.sample(_entities(cfg, community), cfg.linked_per_query)
        for entity in sorted(linked):
            lines.append(f"Q_{community}\t{entity}\t1")
    return "\n".join(lines) + "\n"


def run_text(cfg: SyntheticConfig) -> str:
    """A shuffled candidate list over all entities, identical for both queries.

    Scores decrease with the shuffled position, so the baseline ordering
    carries no community information beyond chance.
    """
    rng = random.Random(cfg.seed + 2)
    candidates = [e for community in COMMUNITIES for e in _entities(cfg, community)]
    rng.shuffle(candidates)
    lines = []
    for community in COMMUNITIES:
        for position, entity in enumerate(candidates):
            score = 1.0 - position / (2 * len(candidates))
            lines.append(f"Q_{community} Q0 {entity} {position + 1} {fmt_g6(score)} base")
    return "\n".join(lines) + "\n"


def write_benchmark(out_dir, cfg: SyntheticConfig | None = None) -> dict[str, Path]:
    """Write corpus, qrels, annotations, and baseline run files; returns their paths."""
    cfg = cfg or SyntheticConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out_dir / "corpus.txt",
        "qrels": out_dir / "qrels.txt",
        "annotations": out_dir / "annotations.tsv",
        "run": out_dir / "run.txt",
    }
    for key, text in (
        ("corpus", corpus_text(cfg)),
        ("qrels", qrels_text(cfg)),
        ("annotations", annotations_text(cfg)),
        ("run", run_text(cfg)),
    ):
        with atomic_write(paths[key]) as out:
            out.write(text)
    return paths
