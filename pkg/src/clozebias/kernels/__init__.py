"""Hot-kernel dispatch: the compiled extension when built, pure Python otherwise.

Both backends implement the same two primitives with bit-identical
results (see pure.py for the contract):

- parse_vectors(data, dim, first_lineno): embedding text lines -> matrix
- dot(u, v): exactly rounded dot product

Set CLOZEBIAS_PURE_PYTHON=1 to force the fallback (used by the benchmark).
"""

from __future__ import annotations

import os

from clozebias.kernels import pure as _pure

_FORCED_PURE = os.environ.get("CLOZEBIAS_PURE_PYTHON", "") not in ("", "0")

try:
    if _FORCED_PURE:
        raise ImportError("pure backend forced via CLOZEBIAS_PURE_PYTHON")
    from clozebias.kernels import _speed as _impl  # type: ignore[attr-defined]

    BACKEND = "c"
except ImportError:
    _impl = _pure
    BACKEND = "python"

parse_vectors = _impl.parse_vectors
dot = _impl.dot


def available_backends() -> dict[str, object]:
    """Importable backend modules keyed by name (for tests and benchmarks)."""
    backends: dict[str, object] = {"python": _pure}
    try:
        from clozebias.kernels import _speed  # type: ignore[attr-defined]

        backends["c"] = _speed
    except ImportError:
        pass
    return backends
