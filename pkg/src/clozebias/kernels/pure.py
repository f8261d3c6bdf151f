"""Pure-Python kernel backend.

Mirrors the C backend in clozebias.kernels._speed bit for bit: value
tokens are restricted to plain decimal/scientific syntax (on which
CPython's float() and C strtod are both correctly rounded and therefore
agree exactly), and dot products use exact (correctly rounded) summation,
so results are order- and backend-independent.
"""

from __future__ import annotations

import math

import numpy as np

from clozebias.errors import LineParseError

# chars permitted in a value token; excludes hex floats, inf/nan spellings
# and digit-group underscores, where float() and strtod would diverge
_FLOAT_CHARS = frozenset(b"0123456789+-.eE")


def parse_vectors(data: bytes, dim: int, first_lineno: int) -> tuple[list[str], np.ndarray]:
    """Parse `word f1 ... fdim` lines into (words, float64 matrix).

    Blank lines are skipped; \\r\\n endings tolerated. Raises
    LineParseError (kinds: dimension, float, encoding) with 1-based line
    numbers starting at first_lineno.
    """
    words: list[str] = []
    rows: list[np.ndarray] = []
    lineno = first_lineno - 1
    for raw in data.split(b"\n"):
        lineno += 1
        line = raw.rstrip(b"\r")
        if not line.strip():
            continue
        parts = [p for p in line.replace(b"\t", b" ").split(b" ") if p]
        values = parts[1:]
        if len(values) != dim:
            raise LineParseError(lineno, "dimension", f"expected {dim} values, found {len(values)}")
        try:
            word = parts[0].decode("utf-8")
        except UnicodeDecodeError:
            raise LineParseError(lineno, "encoding", "invalid UTF-8 in word") from None
        row = np.empty(dim, dtype=np.float64)
        for j, tok in enumerate(values):
            if not set(tok) <= _FLOAT_CHARS:
                raise LineParseError(lineno, "float", tok.decode("utf-8", "replace"))
            try:
                val = float(tok.decode("ascii"))
            except ValueError:
                raise LineParseError(lineno, "float", tok.decode("ascii")) from None
            if not math.isfinite(val):
                raise LineParseError(lineno, "float", "non-finite value")
            row[j] = val
        words.append(word)
        rows.append(row)
    if rows:
        matrix = np.vstack(rows)
    else:
        matrix = np.empty((0, dim), dtype=np.float64)
    return words, matrix


def dot(u: np.ndarray, v: np.ndarray) -> float:
    """Exact dot product: correctly rounded sum of elementwise products."""
    return math.fsum(np.multiply(u, v))
