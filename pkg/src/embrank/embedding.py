"""Joint word/entity embedding training.

Stochastic gradient descent with negative sampling over three pair streams:
word-window pairs, entity link-graph pairs, and anchor-context pairs. The full
softmax objective the sampling approximates is kept here as an exact (and
deliberately slow) oracle for verification. Published embeddings are rows of
the target matrix.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .corpus import Document, KnowledgeGraphCorpus, Vocabulary
from .util import ParseError, ValidationError, atomic_write, fmt_g6

ENTITY_PREFIX = "ENTITY/"

# Training-pair components and the namespace their context item lives in:
# word and anchor pairs predict words, link pairs predict entities.
WORD, LINK, ANCHOR = "word", "link", "anchor"


class TrainingPair(NamedTuple):
    center: int
    context: int
    component: str


@dataclass
class TrainingConfig:
    """Knobs for one training run; defaults follow common skip-gram practice."""

    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_lr: float = 1e-4
    use_link_graph: bool = True
    seed: int = 1
    subsample_threshold: float = 1e-4
    parallel_workers: int = 1
    symmetric_link_context: bool = True
    probe_pairs: int = 200

    def __post_init__(self):
        if self.dimension < 1 or self.window < 1 or self.negatives < 1:
            raise ValidationError("dimension, window, and negatives must all be >= 1")
        if self.epochs < 0 or self.parallel_workers < 1:
            raise ValidationError("epochs must be >= 0 and parallel_workers >= 1")
        if self.learning_rate <= 0 or self.min_lr <= 0 or self.min_lr > self.learning_rate:
            raise ValidationError("need 0 < min_lr <= learning_rate")
        if self.subsample_threshold < 0:
            raise ValidationError("subsample_threshold must be >= 0")


@dataclass
class TrainingStats:
    """Exact probe losses at epoch boundaries plus processed-pair bookkeeping.

    Loss lists have ``epochs + 1`` entries; index 0 is measured on the freshly
    initialized model. ``loss_total`` is always the sum of the three parts on
    the same fixed probe sample.
    """

    loss_w: list[float] = field(default_factory=list)
    loss_e: list[float] = field(default_factory=list)
    loss_a: list[float] = field(default_factory=list)
    loss_total: list[float] = field(default_factory=list)
    pair_counts: dict[str, int] = field(default_factory=lambda: {WORD: 0, LINK: 0, ANCHOR: 0})
    wall_seconds: float = 0.0


@dataclass
class EmbeddingModel:
    """Target and context matrices over one joint word+entity index space."""

    target_matrix: np.ndarray
    context_matrix: np.ndarray
    dimension: int
    n_words: int
    n_entities: int
    vocab_echo: str = ""

    @classmethod
    def initialize(cls, vocab: Vocabulary, dimension: int, rng: np.random.Generator) -> "EmbeddingModel":
        """Standard skip-gram start: small uniform target rows, zero context rows."""
        size = len(vocab)
        target = (rng.random((size, dimension)) - 0.5) / dimension
        context = np.zeros((size, dimension))
        return cls(
            target_matrix=target,
            context_matrix=context,
            dimension=dimension,
            n_words=vocab.n_words,
            n_entities=vocab.n_entities,
            vocab_echo=vocab.fingerprint(),
        )

    def context_namespace(self, component: str) -> tuple[int, int]:
        """Index range ``[start, stop)`` that a pair's context competes against."""
        if component == LINK:
            return self.n_words, self.n_words + self.n_entities
        return 0, self.n_words


def _sequence_pairs(seq: list[int], window: int) -> Iterator[TrainingPair]:
    for t in range(len(seq)):
        for j in range(max(0, t - window), min(len(seq), t + window + 1)):
            if j != t:
                yield TrainingPair(seq[t], seq[j], WORD)


def word_pairs(doc: Document, window: int, vocab: Vocabulary) -> Iterator[TrainingPair]:
    """Skip-gram pairs over the in-vocabulary token sequence.

    Out-of-vocabulary tokens are removed before windowing, so they do not
    occupy window slots.
    """
    seq = [i for i in (vocab.word_index(t) for t in doc.tokens) if i is not None]
    return _sequence_pairs(seq, window)


def anchor_pairs(doc: Document, window: int, vocab: Vocabulary) -> Iterator[TrainingPair]:
    """Entity-to-word pairs from up to ``window`` in-vocab words on each side of an anchor span."""
    indices = [vocab.word_index(t) for t in doc.tokens]
    for anchor in doc.anchors:
        entity = vocab.entity_index(anchor.target)
        if entity is None:
            continue
        left = [i for i in indices[: anchor.start] if i is not None][-window:]
        right = [i for i in indices[anchor.start + anchor.length :] if i is not None][:window]
        for w in left + right:
            yield TrainingPair(entity, w, ANCHOR)


def link_pairs(
    corpus: KnowledgeGraphCorpus, vocab: Vocabulary, symmetric: bool = True
) -> Iterator[TrainingPair]:
    """Entity-to-entity pairs from link-graph neighborhoods.

    With ``symmetric`` (the default) every directed edge contributes pairs in
    both orientations, so entities with only outgoing links still receive
    link-context updates; otherwise only incoming neighbors act as context.
    """
    neighbors: dict[int, set[int]] = {}
    for dst, srcs in corpus.link_graph.items():
        di = vocab.entity_index(dst)
        if di is None:
            continue
        for src in srcs:
            si = vocab.entity_index(src)
            if si is None or si == di:
                continue
            neighbors.setdefault(di, set()).add(si)
            if symmetric:
                neighbors.setdefault(si, set()).add(di)
    for center in sorted(neighbors):
        for context in sorted(neighbors[center]):
            yield TrainingPair(center, context, LINK)


def exact_loss(model: EmbeddingModel, pairs: Iterable[TrainingPair]) -> float:
    """Summed negative log-softmax of the given pairs, normalized over the full namespace.

    Verification oracle: cost grows with vocabulary size, so only use it on
    probe samples or toy models. Overflow is guarded by max-subtraction.
    """
    if not np.isfinite(model.target_matrix).all() or not np.isfinite(model.context_matrix).all():
        raise ValidationError("model contains non-finite entries")
    total = 0.0
    for pair in pairs:
        start, stop = model.context_namespace(pair.component)
        logits = model.context_matrix[start:stop] @ model.target_matrix[pair.center]
        shifted = logits - logits.max()
        log_denom = math.log(np.exp(shifted).sum())
        total += log_denom - shifted[pair.context - start]
    return total


def exact_gradient(
    model: EmbeddingModel, pairs: Iterable[TrainingPair]
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`exact_loss` w.r.t. both matrices (dense, oracle-sized)."""
    if not np.isfinite(model.target_matrix).all() or not np.isfinite(model.context_matrix).all():
        raise ValidationError("model contains non-finite entries")
    grad_target = np.zeros_like(model.target_matrix)
    grad_context = np.zeros_like(model.context_matrix)
    for pair in pairs:
        start, stop = model.context_namespace(pair.component)
        block = model.context_matrix[start:stop]
        logits = block @ model.target_matrix[pair.center]
        shifted = np.exp(logits - logits.max())
        probs = shifted / shifted.sum()
        grad_target[pair.center] += probs @ block - block[pair.context - start]
        grad_context[start:stop] += np.outer(probs, model.target_matrix[pair.center])
        grad_context[pair.context] -= model.target_matrix[pair.center]
    return grad_target, grad_context


class NoiseDistribution:
    """Per-namespace negative-sampling tables (unigram frequency ** 3/4)."""

    def __init__(self, vocab: Vocabulary, power: float = 0.75):
        word_mass = np.array([float(f) for f in vocab.words.values()]) ** power
        entity_mass = np.array([float(f) for f in vocab.entities.values()]) ** power
        # a namespace whose counts are all zero falls back to uniform noise
        if word_mass.size and word_mass.sum() == 0.0:
            word_mass[:] = 1.0
        if entity_mass.size and entity_mass.sum() == 0.0:
            entity_mass[:] = 1.0
        self._mass = {WORD: word_mass, "entity": entity_mass}
        self._cum = {WORD: np.cumsum(word_mass), "entity": np.cumsum(entity_mass)}
        self._offset = {WORD: 0, "entity": vocab.n_words}

    def sample(self, kind: str, k: int, exclude: int, rng: np.random.Generator) -> list[int]:
        """Draw up to ``k`` negatives, redrawing any that hit ``exclude``.

        Returns fewer than ``k`` (possibly none) when the namespace has no
        sampling mass besides the excluded item.
        """
        cum = self._cum[kind]
        if cum.size == 0:
            return []
        total = float(cum[-1])
        offset = self._offset[kind]
        local_exclude = exclude - offset
        exclude_mass = self._mass[kind][local_exclude] if 0 <= local_exclude < cum.size else 0.0
        if total - exclude_mass <= 0.0:
            return []
        out = []
        for _ in range(k):
            for _ in range(100):  # rejection bound; practically never reached
                idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
                idx = min(idx, cum.size - 1)
                if idx != local_exclude:
                    out.append(idx + offset)
                    break
        return out


def _sigmoid(x: float) -> float:
    x = min(30.0, max(-30.0, x))
    return 1.0 / (1.0 + math.exp(-x))


def sgd_step(
    model: EmbeddingModel,
    pair: TrainingPair,
    noise: NoiseDistribution,
    k: int,
    lr: float,
    rng: np.random.Generator,
) -> None:
    """One in-place skip-gram-with-negative-sampling update.

    The positive context and ``k`` noise draws from the matching namespace
    (entities for link pairs, words otherwise) are updated against the center's
    target row; the center row collects the accumulated context-side gradient.
    """
    if lr < 0:
        raise ValidationError("learning rate must be >= 0")
    target = model.target_matrix
    context = model.context_matrix
    center_row = target[pair.center]
    kind = "entity" if pair.component == LINK else WORD

    dot = float(center_row @ context[pair.context])
    if not math.isfinite(dot):
        raise ValidationError(f"non-finite activation while updating pair {pair}")
    gain = lr * (1.0 - _sigmoid(dot))
    accum = gain * context[pair.context]
    context[pair.context] += gain * center_row

    for negative in noise.sample(kind, k, exclude=pair.context, rng=rng):
        dot = float(center_row @ context[negative])
        if not math.isfinite(dot):
            raise ValidationError(f"non-finite activation while updating pair {pair}")
        gain = -lr * _sigmoid(dot)
        accum += gain * context[negative]
        context[negative] += gain * center_row

    if not np.isfinite(accum).all():
        raise ValidationError(f"non-finite update for pair {pair}")
    target[pair.center] += accum


def _probe_sample(streams: dict[str, list[TrainingPair]], limit: int) -> dict[str, list[TrainingPair]]:
    return {component: pairs[:limit] for component, pairs in streams.items()}


def train(
    corpus: KnowledgeGraphCorpus,
    vocab: Vocabulary,
    config: TrainingConfig,
    initial_model: EmbeddingModel | None = None,
) -> tuple[EmbeddingModel, TrainingStats]:
    """Run the full training loop and return the model with its stats.

    Each epoch walks the documents in order emitting word pairs (with
    frequency subsampling when enabled) and anchor pairs, appends link pairs
    when the link graph is in use, then visits the combined stream in a
    seed-driven shuffled order under a linearly decaying learning rate. With
    ``parallel_workers == 1`` the result is bit-reproducible for a fixed seed;
    more workers share the matrices without locks, which trades determinism
    for throughput.
    """
    if len(vocab) == 0:
        raise ValidationError("cannot train on an empty vocabulary")
    rng = np.random.default_rng(config.seed)
    if initial_model is None:
        model = EmbeddingModel.initialize(vocab, config.dimension, rng)
    else:
        model = initial_model
        if model.dimension != config.dimension:
            raise ValidationError(
                f"model dimension {model.dimension} does not match config dimension {config.dimension}"
            )
        if model.vocab_echo != vocab.fingerprint():
            raise ValidationError("model was initialized from a different vocabulary")

    word_sequences = [
        [i for i in (vocab.word_index(t) for t in doc.tokens) if i is not None]
        for doc in corpus.documents
    ]
    anchor_streams = [list(anchor_pairs(doc, config.window, vocab)) for doc in corpus.documents]
    links = (
        list(link_pairs(corpus, vocab, symmetric=config.symmetric_link_context))
        if config.use_link_graph
        else []
    )

    full_word_count = sum(
        sum(1 for _ in _sequence_pairs(seq, config.window)) for seq in word_sequences
    )
    per_epoch = full_word_count + sum(len(s) for s in anchor_streams) + len(links)
    total_scheduled = max(1, per_epoch * config.epochs)

    keep_prob = _subsample_keep_probabilities(vocab, config.subsample_threshold)
    noise = NoiseDistribution(vocab)

    probe = _probe_sample(
        {
            WORD: [p for seq in word_sequences for p in _sequence_pairs(seq, config.window)],
            LINK: links,
            ANCHOR: [p for stream in anchor_streams for p in stream],
        },
        config.probe_pairs,
    )

    stats = TrainingStats()
    started = time.perf_counter()
    _record_probe_losses(model, probe, stats)

    step_base = 0
    for epoch in range(config.epochs):
        pairs: list[TrainingPair] = []
        for seq, anchors in zip(word_sequences, anchor_streams):
            if keep_prob is not None:
                seq = [i for i in seq if rng.random() < keep_prob[i]]
            pairs.extend(_sequence_pairs(seq, config.window))
            pairs.extend(anchors)
        pairs.extend(links)

        order = rng.permutation(len(pairs))
        # lr is a function of the scheduled slot, not completion order, so the
        # schedule stays well-defined under racy multi-worker execution
        def lr_at(position: int) -> float:
            done = min(1.0, (step_base + position) / total_scheduled)
            return config.learning_rate + (config.min_lr - config.learning_rate) * done

        if config.parallel_workers == 1:
            for position, pair_idx in enumerate(order):
                sgd_step(model, pairs[pair_idx], noise, config.negatives, lr_at(position), rng)
        else:
            _hogwild_epoch(model, pairs, order, noise, config, lr_at, epoch)

        for pair in pairs:
            stats.pair_counts[pair.component] += 1
        step_base += len(pairs)
        _record_probe_losses(model, probe, stats)

    stats.wall_seconds = time.perf_counter() - started
    return model, stats


def _subsample_keep_probabilities(vocab: Vocabulary, threshold: float) -> np.ndarray | None:
    """Per-word-index keep probability ``sqrt(t / f)`` (capped at 1), or None when disabled."""
    if threshold <= 0 or vocab.n_words == 0:
        return None
    counts = np.array([float(f) for f in vocab.words.values()])
    total = counts.sum()
    if total == 0:
        return None
    rel = counts / total
    with np.errstate(divide="ignore"):
        keep = np.sqrt(threshold / rel)
    return np.minimum(keep, 1.0)


def _record_probe_losses(
    model: EmbeddingModel, probe: dict[str, list[TrainingPair]], stats: TrainingStats
) -> None:
    loss_w = exact_loss(model, probe[WORD])
    loss_e = exact_loss(model, probe[LINK])
    loss_a = exact_loss(model, probe[ANCHOR])
    stats.loss_w.append(loss_w)
    stats.loss_e.append(loss_e)
    stats.loss_a.append(loss_a)
    stats.loss_total.append(loss_w + loss_e + loss_a)


def _hogwild_epoch(model, pairs, order, noise, config, lr_at, epoch) -> None:
    """Lock-free shared-model epoch: workers race on rows, which is accepted as approximate."""
    chunks = np.array_split(np.arange(len(order)), config.parallel_workers)
    seeds = np.random.SeedSequence(entropy=(config.seed, epoch)).spawn(config.parallel_workers)

    def work(positions: np.ndarray, worker_rng: np.random.Generator) -> None:
        for position in positions:
            sgd_step(model, pairs[order[position]], noise, config.negatives, lr_at(int(position)), worker_rng)

    threads = [
        threading.Thread(target=work, args=(chunk, np.random.default_rng(seed)))
        for chunk, seed in zip(chunks, seeds)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def embedding_of(
    model: EmbeddingModel, ident: str, vocab: Vocabulary, kind: str = "entity"
) -> np.ndarray | None:
    """Published vector (target-matrix row) for an id, or None when out of vocabulary."""
    index = vocab.entity_index(ident) if kind == "entity" else vocab.word_index(ident)
    return None if index is None else model.target_matrix[index].copy()


class EmbeddingTable:
    """Read-only id -> vector lookup shared by reranking and analysis.

    Built either from a trained model or from an embedding file; the training
    matrices and vocabulary bookkeeping are not needed downstream.
    """

    def __init__(self, matrix: np.ndarray, word_rows: dict[str, int], entity_rows: dict[str, int]):
        self.matrix = matrix
        self.word_rows = word_rows
        self.entity_rows = entity_rows

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def from_model(cls, model: EmbeddingModel, vocab: Vocabulary) -> "EmbeddingTable":
        word_rows = {token: vocab.word_index(token) for token in vocab.words}
        entity_rows = {entity: vocab.entity_index(entity) for entity in vocab.entities}
        return cls(model.target_matrix, word_rows, entity_rows)

    @classmethod
    def from_vectors(
        cls,
        entities: dict[str, np.ndarray] | None = None,
        words: dict[str, np.ndarray] | None = None,
    ) -> "EmbeddingTable":
        entities = entities or {}
        words = words or {}
        rows = [np.asarray(v, dtype=float) for v in list(words.values()) + list(entities.values())]
        matrix = np.vstack(rows) if rows else np.zeros((0, 0))
        word_rows = {token: i for i, token in enumerate(words)}
        entity_rows = {entity: len(words) + i for i, entity in enumerate(entities)}
        return cls(matrix, word_rows, entity_rows)

    def word_vector(self, token: str) -> np.ndarray | None:
        row = self.word_rows.get(token)
        return None if row is None else self.matrix[row]

    def entity_vector(self, entity: str) -> np.ndarray | None:
        row = self.entity_rows.get(entity)
        return None if row is None else self.matrix[row]

    def save(self, path) -> None:
        ids = [None] * self.matrix.shape[0]
        for token, row in self.word_rows.items():
            ids[row] = token
        for entity, row in self.entity_rows.items():
            ids[row] = ENTITY_PREFIX + entity
        _write_embedding_file(path, ids, self.matrix)


def save_embeddings(model: EmbeddingModel, vocab: Vocabulary, path) -> None:
    """Write published vectors as text: a count/dimension header, then one id per row."""
    ids = []
    for index in range(len(vocab)):
        kind, ident, _ = vocab.item(index)
        ids.append(ENTITY_PREFIX + ident if kind == "entity" else ident)
    _write_embedding_file(path, ids, model.target_matrix)


def _write_embedding_file(path, ids: list[str], matrix: np.ndarray) -> None:
    with atomic_write(path) as out:
        out.write(f"{len(ids)} {matrix.shape[1]}\n")
        for ident, row in zip(ids, matrix):
            out.write(ident + " " + " ".join(fmt_g6(x) for x in row) + "\n")


def load_embeddings(path) -> EmbeddingTable:
    """Read an embedding file back into an :class:`EmbeddingTable`, validating the header."""
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ParseError(path, 1, "header must be '<count> <dimension>'")
        try:
            count, dimension = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError(path, 1, "header must be '<count> <dimension>'") from None

        rows = np.zeros((count, dimension))
        word_rows: dict[str, int] = {}
        entity_rows: dict[str, int] = {}
        row = 0
        for line_no, line in enumerate(handle, start=2):
            fields = line.split()
            if not fields:
                continue
            if row >= count:
                raise ParseError(path, line_no, f"more rows than the declared count {count}")
            if len(fields) != dimension + 1:
                raise ParseError(path, line_no, f"expected {dimension} values, got {len(fields) - 1}")
            ident = fields[0]
            try:
                vector = np.array([float(x) for x in fields[1:]])
            except ValueError:
                raise ParseError(path, line_no, "non-numeric vector component") from None
            if not np.isfinite(vector).all():
                raise ParseError(path, line_no, "non-finite vector component")
            table = entity_rows if ident.startswith(ENTITY_PREFIX) else word_rows
            key = ident[len(ENTITY_PREFIX):] if ident.startswith(ENTITY_PREFIX) else ident
            if key in table:
                raise ParseError(path, line_no, f"duplicate id {ident!r}")
            table[key] = row
            rows[row] = vector
            row += 1
    if row != count:
        raise ValidationError(f"{path}: header declares {count} rows but file has {row}")
    return EmbeddingTable(rows, word_rows, entity_rows)
