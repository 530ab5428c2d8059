"""Corpus ingestion: line-record parsing, alias resolution, joint vocabulary, coverage.

The corpus is a UTF-8 text file with one tab-separated record per line:

    DOC<TAB><doc_entity|-><TAB><space-separated tokens>
    ANCHOR<TAB><target><TAB><start><TAB><length>   (attaches to the most recent DOC)
    LINK<TAB><src><TAB><dst>
    ALIAS<TAB><from><TAB><to>
    DISAMBIG<TAB><id>

Lines starting with ``#`` are comments; blank lines are ignored. Records may
appear in any order except ANCHOR attachment.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .util import ParseError, ValidationError, atomic_write

EntityId = str


@dataclass
class Anchor:
    """A linked span of tokens: ``length`` tokens starting at ``start`` point at ``target``."""

    target: EntityId
    start: int
    length: int


@dataclass
class Document:
    """One corpus page: an optional subject entity, its token sequence, and anchors."""

    doc_entity: EntityId | None
    tokens: list[str]
    anchors: list[Anchor] = field(default_factory=list)


@dataclass
class KnowledgeGraphCorpus:
    """Parsed corpus: documents plus the entity link graph and redirect map.

    ``link_graph`` maps each entity to the set of entities that link to it
    (incoming neighbors), merging declared LINK edges with page->anchor-target
    edges; self-loops are dropped. ``alias_map`` is chain-compressed so every
    value is a fixed point. ``declared_links`` keeps the LINK-record edges
    separately because vocabulary frequencies count them apart from anchor
    occurrences. ``mentioned`` is the full set of entity ids that occur in
    DOC/ANCHOR/LINK/DISAMBIG records (canonical forms), used to split missing
    assessed entities into "no embedding" vs "no page".
    """

    documents: list[Document]
    link_graph: dict[EntityId, set[EntityId]]
    alias_map: dict[EntityId, EntityId]
    declared_links: set[tuple[EntityId, EntityId]] = field(default_factory=set)
    disambiguation_ids: set[EntityId] = field(default_factory=set)
    mentioned: set[EntityId] = field(default_factory=set)


@dataclass
class VocabConfig:
    """Filters applied when building the joint vocabulary."""

    min_word_count: int = 0
    min_entity_count: int = 0
    include_disambiguation: bool = True
    disambiguation_ids: frozenset[EntityId] | None = None

    def __post_init__(self):
        if self.min_word_count < 0 or self.min_entity_count < 0:
            raise ValidationError("vocabulary count thresholds must be >= 0")
        if not self.include_disambiguation and self.disambiguation_ids is None:
            raise ValidationError(
                "excluding disambiguation pages requires an explicit id set (may be empty)"
            )


@dataclass
class Vocabulary:
    """Joint word/entity vocabulary with one dense, 0-based index space.

    Words occupy indices ``0..n_words-1`` and entities
    ``n_words..n_words+n_entities-1``; within each block, members are ordered
    by descending frequency, ties broken lexicographically. Word frequency is
    the corpus token count; entity frequency is the number of incoming anchor
    occurrences plus declared incoming links.
    """

    words: dict[str, int]
    entities: dict[EntityId, int]
    config_echo: VocabConfig

    def __post_init__(self):
        self._word_list = list(self.words)
        self._entity_list = list(self.entities)
        self._word_pos = {w: i for i, w in enumerate(self._word_list)}
        self._entity_pos = {e: i for i, e in enumerate(self._entity_list)}

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    def __len__(self) -> int:
        return len(self.words) + len(self.entities)

    def word_index(self, token: str) -> int | None:
        return self._word_pos.get(token)

    def entity_index(self, entity: EntityId) -> int | None:
        pos = self._entity_pos.get(entity)
        return None if pos is None else self.n_words + pos

    def item(self, index: int) -> tuple[str, str, int]:
        """Return ``(kind, identifier, frequency)`` for a global index."""
        if 0 <= index < self.n_words:
            token = self._word_list[index]
            return "word", token, self.words[token]
        if self.n_words <= index < len(self):
            entity = self._entity_list[index - self.n_words]
            return "entity", entity, self.entities[entity]
        raise IndexError(index)

    def fingerprint(self) -> str:
        """Stable digest of members, frequencies, and the producing config."""
        h = hashlib.sha256()
        cfg = self.config_echo
        disamb = sorted(cfg.disambiguation_ids) if cfg.disambiguation_ids is not None else None
        h.update(
            f"cfg\t{cfg.min_word_count}\t{cfg.min_entity_count}\t"
            f"{cfg.include_disambiguation}\t{disamb}\n".encode()
        )
        for token, freq in self.words.items():
            h.update(f"w\t{token}\t{freq}\n".encode())
        for entity, freq in self.entities.items():
            h.update(f"e\t{entity}\t{freq}\n".encode())
        return h.hexdigest()


@dataclass
class MissingEntityReport:
    """Partition of an assessed entity set by embedding coverage."""

    covered: list[EntityId]
    no_emb: list[EntityId]
    no_page: list[EntityId]


def _check_entity_id(raw: str, path, line_no: int) -> EntityId:
    if not raw or any(ch.isspace() for ch in raw):
        raise ParseError(path, line_no, f"invalid entity id {raw!r} (empty or contains whitespace)")
    return raw


def _compress_aliases(raw: dict[EntityId, EntityId]) -> dict[EntityId, EntityId]:
    """Collapse redirect chains to their terminal target; cycles are fatal."""
    resolved: dict[EntityId, EntityId] = {}
    for start in raw:
        if start in resolved:
            continue
        chain: list[EntityId] = []
        node = start
        while node in raw and node not in resolved:
            if node in chain:
                cycle = chain[chain.index(node):]
                raise ValidationError("redirect cycle: " + " -> ".join(cycle + [node]))
            chain.append(node)
            node = raw[node]
        target = resolved.get(node, node)
        for member in chain:
            resolved[member] = target
    return resolved


def parse_corpus(path) -> KnowledgeGraphCorpus:
    """Parse a corpus file into a validated :class:`KnowledgeGraphCorpus`.

    Entity ids everywhere in the result are canonical (alias-resolved), even
    when ALIAS records appear after the records that use the aliased id. The
    link graph is the deduplicated union of declared LINK edges and
    doc-entity -> anchor-target edges, with self-loops dropped.
    """
    path = Path(path)
    docs: list[tuple[int, Document]] = []
    raw_aliases: dict[EntityId, EntityId] = {}
    raw_links: list[tuple[EntityId, EntityId]] = []
    raw_disambig: set[EntityId] = set()

    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            kind = fields[0]
            if kind == "DOC":
                if len(fields) != 3:
                    raise ParseError(path, line_no, f"DOC record needs 3 fields, got {len(fields)}")
                doc_entity = None if fields[1] == "-" else _check_entity_id(fields[1], path, line_no)
                docs.append((line_no, Document(doc_entity, fields[2].split())))
            elif kind == "ANCHOR":
                if len(fields) != 4:
                    raise ParseError(path, line_no, f"ANCHOR record needs 4 fields, got {len(fields)}")
                if not docs:
                    raise ParseError(path, line_no, "ANCHOR record before any DOC record")
                target = _check_entity_id(fields[1], path, line_no)
                try:
                    start, length = int(fields[2]), int(fields[3])
                except ValueError:
                    raise ParseError(path, line_no, "ANCHOR start/length must be integers") from None
                doc = docs[-1][1]
                if length < 1 or start < 0 or start + length > len(doc.tokens):
                    raise ParseError(
                        path, line_no,
                        f"anchor span [{start}, {start + length}) outside document of {len(doc.tokens)} tokens",
                    )
                doc.anchors.append(Anchor(target, start, length))
            elif kind == "LINK":
                if len(fields) != 3:
                    raise ParseError(path, line_no, f"LINK record needs 3 fields, got {len(fields)}")
                raw_links.append(
                    (_check_entity_id(fields[1], path, line_no), _check_entity_id(fields[2], path, line_no))
                )
            elif kind == "ALIAS":
                if len(fields) != 3:
                    raise ParseError(path, line_no, f"ALIAS record needs 3 fields, got {len(fields)}")
                src = _check_entity_id(fields[1], path, line_no)
                dst = _check_entity_id(fields[2], path, line_no)
                if src in raw_aliases and raw_aliases[src] != dst:
                    raise ParseError(path, line_no, f"conflicting ALIAS for {src!r}")
                raw_aliases[src] = dst
            elif kind == "DISAMBIG":
                if len(fields) != 2:
                    raise ParseError(path, line_no, f"DISAMBIG record needs 2 fields, got {len(fields)}")
                raw_disambig.add(_check_entity_id(fields[1], path, line_no))
            else:
                raise ParseError(path, line_no, f"unknown record type {kind!r}")

    alias_map = _compress_aliases(raw_aliases)
    resolve = lambda e: alias_map.get(e, e)  # noqa: E731

    mentioned: set[EntityId] = set()
    documents: list[Document] = []
    for line_no, doc in docs:
        if doc.doc_entity is not None:
            doc.doc_entity = resolve(doc.doc_entity)
            mentioned.add(doc.doc_entity)
        spans = []
        for anchor in doc.anchors:
            anchor.target = resolve(anchor.target)
            mentioned.add(anchor.target)
            spans.append((anchor.start, anchor.start + anchor.length))
        spans.sort()
        for (a_start, a_end), (b_start, _) in zip(spans, spans[1:]):
            if b_start < a_end:
                name = doc.doc_entity or f"document at line {line_no}"
                raise ValidationError(f"overlapping anchors in {name}")
        documents.append(doc)

    declared_links: set[tuple[EntityId, EntityId]] = set()
    for src, dst in raw_links:
        src, dst = resolve(src), resolve(dst)
        mentioned.update((src, dst))
        if src != dst:
            declared_links.add((src, dst))

    disambiguation_ids = {resolve(e) for e in raw_disambig}
    mentioned |= disambiguation_ids
    # redirect targets name real pages even when nothing else references them
    mentioned |= set(alias_map.values())

    link_graph: dict[EntityId, set[EntityId]] = {}
    for src, dst in declared_links:
        link_graph.setdefault(dst, set()).add(src)
    for doc in documents:
        if doc.doc_entity is None:
            continue
        for anchor in doc.anchors:
            if anchor.target != doc.doc_entity:
                link_graph.setdefault(anchor.target, set()).add(doc.doc_entity)

    return KnowledgeGraphCorpus(
        documents=documents,
        link_graph=link_graph,
        alias_map=alias_map,
        declared_links=declared_links,
        disambiguation_ids=disambiguation_ids,
        mentioned=mentioned,
    )


def resolve_entity_id(entity: EntityId, corpus: KnowledgeGraphCorpus) -> EntityId:
    """Map an id through the redirect table; unknown ids pass through unchanged."""
    return corpus.alias_map.get(entity, entity)


def entity_frequencies(corpus: KnowledgeGraphCorpus) -> Counter:
    """Incoming anchor occurrences plus declared incoming links, per mentioned entity.

    Every mentioned entity appears in the result, with frequency 0 when nothing
    points at it (e.g. link sources or bare page subjects).
    """
    freq: Counter = Counter({e: 0 for e in corpus.mentioned})
    for doc in corpus.documents:
        for anchor in doc.anchors:
            freq[anchor.target] += 1
    for _, dst in corpus.declared_links:
        freq[dst] += 1
    return freq


def build_vocabulary(corpus: KnowledgeGraphCorpus, config: VocabConfig) -> Vocabulary:
    """Apply the configured filters and assign deterministic indices.

    Words are kept when their corpus frequency reaches ``min_word_count``;
    entities when their incoming anchor+link count reaches ``min_entity_count``
    and they survive the disambiguation filter. Index order within each block
    is frequency-descending with lexicographic tie-breaks, so identical inputs
    always produce identical vocabularies.
    """
    word_freq = Counter(token for doc in corpus.documents for token in doc.tokens)
    kept_words = sorted(
        ((t, f) for t, f in word_freq.items() if f >= config.min_word_count),
        key=lambda item: (-item[1], item[0]),
    )

    ent_freq = entity_frequencies(corpus)
    excluded = frozenset() if config.include_disambiguation else config.disambiguation_ids
    kept_entities = sorted(
        ((e, f) for e, f in ent_freq.items() if f >= config.min_entity_count and e not in excluded),
        key=lambda item: (-item[1], item[0]),
    )

    return Vocabulary(words=dict(kept_words), entities=dict(kept_entities), config_echo=config)


def coverage_report(
    vocab: Vocabulary, assessed: set[EntityId], corpus: KnowledgeGraphCorpus
) -> MissingEntityReport:
    """Partition assessed entities into covered / no_emb / no_page.

    Each id is alias-resolved first; "no_emb" means the canonical id exists in
    the corpus but was filtered out of the vocabulary, "no_page" means the
    corpus does not mention it at all.
    """
    covered, no_emb, no_page = [], [], []
    for entity in sorted(assessed):
        canonical = resolve_entity_id(entity, corpus)
        if canonical in vocab.entities:
            covered.append(entity)
        elif canonical in corpus.mentioned:
            no_emb.append(entity)
        else:
            no_page.append(entity)
    return MissingEntityReport(covered=covered, no_emb=no_emb, no_page=no_page)


def write_coverage_report(report: MissingEntityReport, path) -> None:
    """Write ``category<TAB>entity`` lines plus a TOTAL summary line."""
    with atomic_write(path) as out:
        for category, members in (
            ("covered", report.covered),
            ("no_emb", report.no_emb),
            ("no_page", report.no_page),
        ):
            for entity in members:
                out.write(f"{category}\t{entity}\n")
        out.write(f"TOTAL\t{len(report.covered)}\t{len(report.no_emb)}\t{len(report.no_page)}\n")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    """Serialize a vocabulary: config header, DISAMBIG rows, then members in index order."""
    cfg = vocab.config_echo
    with atomic_write(path) as out:
        out.write(
            f"VOCAB\t{cfg.min_word_count}\t{cfg.min_entity_count}\t"
            f"{'true' if cfg.include_disambiguation else 'false'}\n"
        )
        if not cfg.include_disambiguation:
            for entity in sorted(cfg.disambiguation_ids):
                out.write(f"DISAMBIG\t{entity}\n")
        for token, freq in vocab.words.items():
            out.write(f"WORD\t{token}\t{freq}\n")
        for entity, freq in vocab.entities.items():
            out.write(f"ENTITY\t{entity}\t{freq}\n")


def load_vocabulary(path) -> Vocabulary:
    path = Path(path)
    words: dict[str, int] = {}
    entities: dict[EntityId, int] = {}
    disambig: set[EntityId] = set()
    header: tuple[int, int, bool] | None = None
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            fields = line.rstrip("\n").split("\t")
            if fields[0] == "VOCAB":
                if header is not None or len(fields) != 4 or fields[3] not in ("true", "false"):
                    raise ParseError(path, line_no, "bad VOCAB header")
                header = (int(fields[1]), int(fields[2]), fields[3] == "true")
            elif fields[0] == "DISAMBIG" and len(fields) == 2:
                disambig.add(fields[1])
            elif fields[0] in ("WORD", "ENTITY") and len(fields) == 3:
                table = words if fields[0] == "WORD" else entities
                if fields[1] in table:
                    raise ParseError(path, line_no, f"duplicate vocabulary entry {fields[1]!r}")
                try:
                    table[fields[1]] = int(fields[2])
                except ValueError:
                    raise ParseError(path, line_no, "frequency must be an integer") from None
            else:
                raise ParseError(path, line_no, f"unrecognized vocabulary record {fields[0]!r}")
    if header is None:
        raise ValidationError(f"{path}: missing VOCAB header")
    min_wc, min_ec, incl = header
    config = VocabConfig(
        min_word_count=min_wc,
        min_entity_count=min_ec,
        include_disambiguation=incl,
        disambiguation_ids=None if incl else frozenset(disambig),
    )
    return Vocabulary(words=words, entities=entities, config_echo=config)
