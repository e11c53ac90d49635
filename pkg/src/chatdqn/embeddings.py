"""Word-vector tables and mean-vector text representations.

Sentences are represented by the arithmetic mean of their in-vocabulary
word vectors (zero vector when nothing is in vocabulary); dialogue
histories by a fixed-length stack of sentence vectors, zero-padded
after the first `filled` rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "WordEmbeddingTable",
    "SentenceVector",
    "StateMatrix",
    "load_embeddings",
    "tokenize",
    "embed_sentence",
    "embed_history",
]

# Characters stripped from token edges after whitespace splitting.
_EDGE_PUNCT = '.,!?;:"()'


class WordEmbeddingTable:
    """Immutable token -> vector table backed by one (n, dim) float64 matrix.

    Safe to share across threads after construction; lookups never mutate.
    """

    def __init__(self, dim: int, entries: Mapping[str, Iterable[float]]):
        if dim <= 0:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self._dim = int(dim)
        tokens = list(entries.keys())
        matrix = np.zeros((len(tokens), self._dim), dtype=np.float64)
        for i, tok in enumerate(tokens):
            if not tok:
                raise ValueError("empty token in embedding table")
            vec = np.asarray(list(entries[tok]), dtype=np.float64)
            if vec.shape != (self._dim,):
                raise ValueError(
                    f"token {tok!r} has {vec.size} coefficients, expected {self._dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"token {tok!r} has non-finite coefficients")
            matrix[i] = vec
        matrix.setflags(write=False)
        self._matrix = matrix
        self._index = {tok: i for i, tok in enumerate(tokens)}
        self._tokens = tuple(tokens)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def lookup(self, token: str) -> np.ndarray | None:
        """Vector for `token`, or None when out of vocabulary."""
        i = self._index.get(token)
        return None if i is None else self._matrix[i]

    @classmethod
    def _from_matrix(cls, dim: int, tokens: list[str], matrix: np.ndarray) -> "WordEmbeddingTable":
        table = cls.__new__(cls)
        table._dim = dim
        matrix.setflags(write=False)
        table._matrix = matrix
        table._index = {tok: i for i, tok in enumerate(tokens)}
        table._tokens = tuple(tokens)
        return table


@dataclass(eq=False)
class SentenceVector:
    """Mean word vector of a sentence; word_count counts in-vocabulary tokens."""

    values: np.ndarray
    word_count: int


@dataclass(eq=False)
class StateMatrix:
    """Fixed-size stack of sentence vectors; rows past `filled` are zero."""

    rows: np.ndarray  # (max_len, dim)
    filled: int

    @property
    def max_len(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def load_embeddings(path: str, dim: int) -> WordEmbeddingTable:
    """Parse a GloVe-style text file: `token v1 v2 ... v_dim` per line.

    Blank lines are skipped. Any malformed line fails the whole load with
    its 1-based line number.
    """
    if dim <= 0:
        raise ValueError(f"embedding dim must be positive, got {dim}")
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, coeffs = parts[0], parts[1:]
            if len(coeffs) != dim:
                raise ValueError(f"wrong coefficient count at line {lineno}")
            try:
                vec = np.array([float(c) for c in coeffs], dtype=np.float64)
            except ValueError:
                raise ValueError(f"non-numeric coefficient at line {lineno}") from None
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite coefficient at line {lineno}")
            if token in seen:
                raise ValueError(f"duplicate token at line {lineno}")
            seen.add(token)
            tokens.append(token)
            rows.append(vec)
    matrix = (
        np.stack(rows).astype(np.float64)
        if rows
        else np.zeros((0, dim), dtype=np.float64)
    )
    return WordEmbeddingTable._from_matrix(dim, tokens, matrix)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges.

    Interior punctuation (apostrophes, hyphens, embedded periods) is kept.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_EDGE_PUNCT)
        if tok:
            out.append(tok)
    return out


def embed_sentence(tokens: Sequence[str], table: WordEmbeddingTable) -> SentenceVector:
    """Mean of the in-vocabulary token vectors; zero vector if none are known."""
    found = [table.lookup(t) for t in tokens]
    found = [v for v in found if v is not None]
    if not found:
        return SentenceVector(np.zeros(table.dim, dtype=np.float64), 0)
    return SentenceVector(np.mean(found, axis=0), len(found))


def embed_history(
    history: Sequence[str], table: WordEmbeddingTable, max_len: int = 50
) -> StateMatrix:
    """Embed the most recent `max_len` sentences into a padded state matrix."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    recent = list(history)[-max_len:]
    rows = np.zeros((max_len, table.dim), dtype=np.float64)
    for i, sentence in enumerate(recent):
        rows[i] = embed_sentence(tokenize(sentence), table).values
    return StateMatrix(rows=rows, filled=len(recent))
