"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation-type errors exit 1,
transport errors exit 2, degenerate-input errors exit 3.
"""

from __future__ import annotations


class ClozeBiasError(Exception):
    """Base class for all toolkit errors."""

    #: pipeline stage that raised, filled in by report.run()
    stage: str | None = None


class FormatError(ClozeBiasError):
    """An input file (embeddings, logprob records, corpus JSON) is malformed."""


class ValidationError(ClozeBiasError):
    """Input content is well-formed but violates a documented contract."""


class MissingScoreError(ClozeBiasError):
    """A file-backed LM provider has no record for a requested sentence."""


class TransportError(ClozeBiasError):
    """The HTTP LM provider failed after exhausting retries."""

    def __init__(self, message: str, url: str = "", retries: int = 0):
        super().__init__(message)
        self.url = url
        self.retries = retries


class InvalidSpanError(ClozeBiasError):
    """A pronoun span does not align with the provider's token boundaries."""


class ModeError(ClozeBiasError):
    """The requested scoring mode is incompatible with the instance."""


class DegenerateInputError(ClozeBiasError):
    """Mathematically degenerate input (zero vector, empty result set, ...)."""


class OOVError(DegenerateInputError):
    """Every queried word is missing from the embedding table."""


class LineParseError(Exception):
    """Internal: a kernel backend rejected one line of an embedding file.

    Carries enough structure for the loader to build a user-facing
    FormatError; both kernel backends raise it identically.
    """

    def __init__(self, lineno: int, kind: str, detail: str = ""):
        super().__init__(f"{kind} at line {lineno}" + (f": {detail}" if detail else ""))
        self.lineno = lineno
        self.kind = kind  # "dimension" | "float"
        self.detail = detail


# CLI exit codes (process contract, see docs/formats.md)
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TRANSPORT = 2
EXIT_DEGENERATE = 3


def exit_code_for(exc: BaseException) -> int:
    """Exit code the CLI uses for a toolkit exception."""
    if isinstance(exc, TransportError):
        return EXIT_TRANSPORT
    if isinstance(exc, DegenerateInputError):
        return EXIT_DEGENERATE
    if isinstance(exc, ClozeBiasError):
        return EXIT_VALIDATION
    raise exc
