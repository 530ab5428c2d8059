"""Shared error types, atomic file writing, and numeric text rendering."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """Malformed record in an input file; message carries path and line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(ValueError):
    """Structurally well-formed input that violates a documented invariant."""


def fmt_g6(x: float) -> str:
    """Render a float with 6 significant digits, the precision used by all text outputs."""
    return f"{x:.6g}"


@contextmanager
def atomic_write(path):
    """Open a text file for writing via a temp file, renamed into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def cosine(a, b) -> float:
    """Cosine similarity clipped to [-1, 1]; zero-norm vectors score 0 by convention."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.clip(float(a @ b) / norm, -1.0, 1.0))
