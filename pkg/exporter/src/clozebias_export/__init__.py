"""clozebias-export: per-token logprob records from causal language models."""

__version__ = "0.1.0"
