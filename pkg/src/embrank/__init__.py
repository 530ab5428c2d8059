"""Graph-embedding toolkit for entity retrieval.

Parses a knowledge-graph corpus, trains joint word/entity embeddings, reranks
retrieval runs with an embedding similarity signal, tunes the interpolation
weight by cross-validated coordinate ascent, and audits how well relevant
entities cluster in the learned space.
"""

__version__ = "0.1.0"
