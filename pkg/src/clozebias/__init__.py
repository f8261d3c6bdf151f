"""clozebias: contextual bias scoring for language-model cloze completions."""

__version__ = "0.1.0"
