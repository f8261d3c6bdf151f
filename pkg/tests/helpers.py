"""Shared test helpers."""

import math

from clozebias.scoring import BiasResult, VariantScore


def make_result(instance_id, pairs, context_kind="verb", mode="cloze-last"):
    """Assemble a BiasResult from {label: (base, sim)} via the definition."""
    values = {label: base ** (1.0 - sim) for label, (base, sim) in pairs.items()}
    total = math.fsum(values.values())
    variants = tuple(
        VariantScore(label, f"s-{label}", base, sim, values[label], values[label] / total)
        for label, (base, sim) in pairs.items()
    )
    best = max(values.values())
    top = [label for label, v in values.items() if v == best]
    return BiasResult(
        instance_id=instance_id,
        mode=mode,
        context_kind=context_kind,
        variants=variants,
        winner=top[0] if len(top) == 1 else None,
        tie=len(top) > 1,
    )
