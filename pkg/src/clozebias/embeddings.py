"""Static word-embedding store: text-format loading and similarity queries.

Supports the two common text formats: word2vec text (`count dim` header
line) and GloVe/fasttext `.vec` style (headerless). Vectors are float64
and round-trip the file's decimal values exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from clozebias import kernels
from clozebias.errors import (
    DegenerateInputError,
    FormatError,
    LineParseError,
    OOVError,
)

WORD2VEC_TEXT = "word2vec-text"
GLOVE_TEXT = "glove-text"
FORMATS = (WORD2VEC_TEXT, GLOVE_TEXT)


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable word -> vector map with dimension metadata."""

    dimension: int
    source_path: str
    format: str
    case_fold: bool
    entries: Mapping[str, np.ndarray]
    duplicate_count: int = 0
    warnings: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return self._key(word) in self.entries

    def _key(self, word: str) -> str:
        return word.lower() if self.case_fold else word

    def lookup(self, word: str) -> np.ndarray | None:
        """Vector for `word` (case-folded per table config), or None."""
        return self.entries.get(self._key(word))


class SimilarityResult(NamedTuple):
    value: float  # clamp(raw_cosine, 0, 1); 0.0 when a side is fully OOV
    raw_cosine: float
    oov_terms: tuple[str, ...]


class CombinedVector(NamedTuple):
    vector: np.ndarray
    oov_terms: tuple[str, ...]


def _looks_like_header(line: bytes) -> tuple[int, int] | None:
    parts = line.split()
    if len(parts) != 2:
        return None
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        return None


def load_embeddings(
    path: str | Path,
    format_hint: str | None = None,
    case_fold: bool = True,
) -> EmbeddingTable:
    """Load a text-format embedding file into an immutable table.

    The format is auto-detected unless `format_hint` is given: a first
    line of exactly two integer tokens is taken as a word2vec `count dim`
    header, anything else as headerless GloVe-style data. Duplicate words
    keep their first occurrence; the count is recorded on the table.
    """
    if format_hint is not None and format_hint not in FORMATS:
        raise FormatError(f"unknown embedding format hint: {format_hint!r}")
    path = Path(path)
    data = path.read_bytes()
    if not data.strip():
        raise FormatError(f"empty embedding file: {path}")

    first_line, _, rest = data.partition(b"\n")
    header = _looks_like_header(first_line.rstrip(b"\r"))
    if format_hint == WORD2VEC_TEXT and header is None:
        raise FormatError(f"missing word2vec `count dim` header in {path}")
    if format_hint == GLOVE_TEXT:
        header = None
    use_header = header is not None

    warnings: list[str] = []
    if use_header:
        declared_count, dim = header
        body, first_lineno = rest, 2
        fmt = WORD2VEC_TEXT
    else:
        declared_count = None
        dim = len(first_line.split()) - 1
        body, first_lineno = data, 1
        fmt = GLOVE_TEXT
    if dim < 1:
        raise FormatError(f"no vector values at line 1 of {path}")

    try:
        words, matrix = kernels.parse_vectors(body, dim, first_lineno)
    except LineParseError as err:
        if err.kind == "dimension":
            raise FormatError(f"dimension mismatch at line {err.lineno} of {path}: {err.detail}") from None
        if err.kind == "encoding":
            raise FormatError(f"invalid UTF-8 at line {err.lineno} of {path}") from None
        raise FormatError(f"unparseable float at line {err.lineno} of {path}: {err.detail}") from None

    if not words:
        raise FormatError(f"no embedding rows in {path}")

    matrix.flags.writeable = False
    entries: dict[str, np.ndarray] = {}
    duplicates = 0
    duplicate_examples: list[str] = []
    for i, word in enumerate(words):
        key = word.lower() if case_fold else word
        if key in entries:
            duplicates += 1
            if len(duplicate_examples) < 8:
                duplicate_examples.append(key)
        else:
            entries[key] = matrix[i]
    if duplicates:
        warnings.append(
            f"{duplicates} duplicate words in {path.name} (first occurrence kept): "
            + ", ".join(duplicate_examples)
        )
    if declared_count is not None and declared_count != len(words):
        warnings.append(
            f"header declares {declared_count} words but {path.name} contains {len(words)}"
        )

    return EmbeddingTable(
        dimension=dim,
        source_path=str(path),
        format=fmt,
        case_fold=case_fold,
        entries=MappingProxyType(entries),
        duplicate_count=duplicates,
        warnings=tuple(warnings),
    )


def _as_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(v, dtype=np.float64)


def norm(u: Sequence[float] | np.ndarray) -> float:
    u = _as_vector(u)
    return math.sqrt(kernels.dot(u, u))


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; clamped to absorb float error."""
    u, v = _as_vector(u), _as_vector(v)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = norm(u), norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector is undefined")
    raw = kernels.dot(u, v) / (nu * nv)
    return min(1.0, max(-1.0, raw))


def combine_vectors(table: EmbeddingTable, words: Sequence[str]) -> CombinedVector:
    """Element-wise mean of the resolved word vectors, L2-renormalized.

    Unresolved words are reported in oov_terms; if nothing resolves an
    OOVError is raised listing every queried word.
    """
    resolved: list[np.ndarray] = []
    oov: list[str] = []
    for w in words:
        vec = table.lookup(w)
        if vec is None:
            oov.append(w)
        else:
            resolved.append(vec)
    if not resolved:
        raise OOVError(f"no embedding for any of: {', '.join(words)}")
    dim = table.dimension
    mean = np.empty(dim, dtype=np.float64)
    k = len(resolved)
    for j in range(dim):
        mean[j] = math.fsum(vec[j] for vec in resolved) / k
    n = norm(mean)
    if n == 0.0:
        raise DegenerateInputError(f"word vectors of {list(words)} cancel to the zero vector")
    return CombinedVector(mean / n, tuple(oov))


def similarity(
    table: EmbeddingTable, left: Sequence[str], right: Sequence[str]
) -> SimilarityResult:
    """Similarity term used as the score exponent: clamp(cos, 0, 1).

    A fully out-of-vocabulary side yields value 0.0 (the score update
    becomes a no-op) rather than an error.
    """
    l_oov = tuple(w for w in left if w not in table)
    r_oov = tuple(w for w in right if w not in table)
    oov = l_oov + r_oov
    if len(l_oov) == len(left) or len(r_oov) == len(right):
        return SimilarityResult(0.0, 0.0, oov)
    lvec = combine_vectors(table, left).vector
    rvec = combine_vectors(table, right).vector
    raw = cosine(lvec, rvec)
    return SimilarityResult(min(1.0, max(0.0, raw)), raw, oov)
