"""Cloze-completion bias scores: base probability exponentiated by 1 - similarity.

A variant's score is base_prob ** (1 - sim), where base_prob comes from the
language model (final-pronoun probability in cloze-last mode, whole-sentence
aggregate in cloze-all mode) and sim is the embedding similarity between the
gender's query words and the context words, clamped to [0, 1]. Scores are
normalized into per-instance ratios over the compared variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from clozebias.corpus import PronounLexicon, TemplateInstance, expand_variants
from clozebias.embeddings import EmbeddingTable, similarity
from clozebias.errors import DegenerateInputError, ModeError, ValidationError
from clozebias.lm import Scorer, char_range_to_span, pronoun_prob, sentence_mean_prob

CLOZE_LAST = "cloze-last"
CLOZE_ALL = "cloze-all"
MODES = (CLOZE_LAST, CLOZE_ALL)

UNDERFLOW_FLOOR = 1e-300


@dataclass(frozen=True)
class VariantScore:
    label: str
    sentence: str
    base_prob: float
    sim: float  # effective similarity; cgs == base_prob ** (1 - sim)
    cgs: float
    ratio: float


@dataclass(frozen=True)
class BiasResult:
    instance_id: str
    mode: str
    context_kind: str
    variants: tuple[VariantScore, ...]
    winner: str | None  # unique argmax label, None on a tie
    tie: bool
    warnings: tuple[str, ...] = ()

    def variant(self, label: str) -> VariantScore:
        for v in self.variants:
            if v.label == label:
                return v
        raise ValidationError(f"result {self.instance_id!r} has no variant {label!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(v.label for v in self.variants)

    def top_labels(self) -> tuple[str, ...]:
        best = max(v.cgs for v in self.variants)
        return tuple(v.label for v in self.variants if v.cgs == best)

    def base_distribution(self) -> dict[str, float]:
        total = math.fsum(v.base_prob for v in self.variants)
        return {v.label: v.base_prob / total for v in self.variants}

    def adjusted_distribution(self) -> dict[str, float]:
        return {v.label: v.ratio for v in self.variants}


def cgs(base_prob: float, sim: float) -> float:
    """base_prob ** (1 - sim): equals base_prob at sim=0 and 1.0 at sim=1."""
    if base_prob <= 0.0:
        raise DegenerateInputError(f"base probability {base_prob} is not in (0, 1]")
    if base_prob > 1.0:
        raise ValueError(f"base probability {base_prob} exceeds 1")
    if not 0.0 <= sim <= 1.0:
        raise ValueError(f"similarity {sim} outside [0, 1]")
    return base_prob ** (1.0 - sim)


def _finish(
    instance_id: str,
    mode: str,
    context_kind: str,
    entries: Sequence[tuple[str, str, float, float]],
    warnings: list[str],
) -> BiasResult:
    """Build a BiasResult from (label, sentence, base, sim) rows."""
    scored = [
        (label, sentence, base, sim, base ** (1.0 - sim))
        for label, sentence, base, sim in entries
    ]
    total = math.fsum(s[4] for s in scored)
    variants = tuple(
        VariantScore(label, sentence, base, sim, value, value / total)
        for label, sentence, base, sim, value in scored
    )
    best = max(v.cgs for v in variants)
    top = [v.label for v in variants if v.cgs == best]
    return BiasResult(
        instance_id=instance_id,
        mode=mode,
        context_kind=context_kind,
        variants=variants,
        winner=top[0] if len(top) == 1 else None,
        tie=len(top) > 1,
        warnings=tuple(warnings),
    )


def _base_prob(score, variant, mode: str, agg: str, strict: bool, warnings: list[str]) -> float:
    if mode == CLOZE_LAST:
        span = char_range_to_span(score, variant.char_start, variant.char_end)
        base = pronoun_prob(score, span)
    elif mode == CLOZE_ALL:
        base = sentence_mean_prob(score, agg)
    else:
        raise ValueError(f"unknown mode: {mode!r}")
    if base == 0.0:
        if strict:
            raise DegenerateInputError(
                f"probability underflow for sentence {variant.sentence!r}"
            )
        warnings.append(
            f"probability underflow for sentence {variant.sentence!r}; "
            f"floored to {UNDERFLOW_FLOOR}"
        )
        base = UNDERFLOW_FLOOR
    return base


def _require_mode(inst: TemplateInstance, mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode!r}")
    if mode == CLOZE_LAST and not inst.pronoun_final():
        raise ModeError(
            f"instance {inst.id!r}: pronoun is mid-sentence; cloze-last requires a "
            "sentence-final pronoun (use cloze-all)"
        )


def _context_words(inst: TemplateInstance, kind: str) -> list[str]:
    surface = inst.context(kind)
    if surface is None:
        raise ValidationError(f"instance {inst.id!r} has no {kind} context")
    return surface.split()


def score_instance(
    inst: TemplateInstance,
    *,
    table: EmbeddingTable,
    scorer: Scorer,
    lexicon: PronounLexicon,
    genders: Sequence[str] = ("m", "w"),
    context_kind: str = "none",
    mode: str = CLOZE_LAST,
    agg: str = "mean-prob",
    strict: bool = False,
) -> BiasResult:
    """Score one instance for one context kind across the gender variants.

    context_kind "none" is the pure-LM baseline: no similarity update, the
    ratios are the normalized base probabilities.
    """
    _require_mode(inst, mode)
    words = None if context_kind == "none" else _context_words(inst, context_kind)
    variants = expand_variants(inst, lexicon, genders)
    scores = scorer.score_many([v.sentence for v in variants])
    warnings: list[str] = []
    entries = []
    for variant, score in zip(variants, scores):
        base = _base_prob(score, variant, mode, agg, strict, warnings)
        if words is None:
            sim = 0.0
        else:
            result = similarity(table, lexicon.entry(variant.label).query_words, words)
            sim = result.value
            if result.oov_terms:
                warnings.append(
                    f"instance {inst.id!r} ({variant.label}): out-of-vocabulary "
                    f"{', '.join(result.oov_terms)}"
                )
        entries.append((variant.label, variant.sentence, base, sim))
    return _finish(inst.id, mode, context_kind, entries, warnings)


def combined_score(
    inst: TemplateInstance,
    *,
    table: EmbeddingTable,
    scorer: Scorer,
    lexicon: PronounLexicon,
    genders: Sequence[str] = ("m", "w"),
    mode: str = CLOZE_LAST,
    agg: str = "mean-prob",
    formula: str = "mean",
    strict: bool = False,
) -> BiasResult:
    """Fold every declared context into one score.

    The default `mean` formula raises the base to the mean of the
    per-context exponents (reduces to score_instance for one context and
    stays within [base, 1]); `sum` multiplies the per-context updates
    instead, i.e. raises the base to the summed exponents.
    """
    if formula not in ("mean", "sum"):
        raise ValueError(f"unknown combined formula: {formula!r}")
    _require_mode(inst, mode)
    kinds = [kind for kind, _ in inst.contexts]
    if not kinds:
        raise ValidationError(f"instance {inst.id!r} declares no contexts to combine")
    variants = expand_variants(inst, lexicon, genders)
    scores = scorer.score_many([v.sentence for v in variants])
    warnings: list[str] = []
    entries = []
    for variant, score in zip(variants, scores):
        base = _base_prob(score, variant, mode, agg, strict, warnings)
        query = lexicon.entry(variant.label).query_words
        exponents = []
        for kind in kinds:
            result = similarity(table, query, _context_words(inst, kind))
            if result.oov_terms:
                warnings.append(
                    f"instance {inst.id!r} ({variant.label}, {kind}): out-of-vocabulary "
                    f"{', '.join(result.oov_terms)}"
                )
            exponents.append(1.0 - result.value)
        exponent = math.fsum(exponents)
        if formula == "mean":
            exponent /= len(exponents)
        entries.append((variant.label, variant.sentence, base, 1.0 - exponent))
    return _finish(inst.id, mode, "combined", entries, warnings)


def group_score(
    inst: TemplateInstance,
    group_specs: Sequence[tuple[str, Sequence[str]]],
    *,
    table: EmbeddingTable,
    scorer: Scorer,
    lexicon: PronounLexicon,
    mode: str = CLOZE_LAST,
    agg: str = "mean-prob",
    strict: bool = False,
) -> BiasResult:
    """Social-group bias: one neutral-pronoun sentence, per-group similarity.

    The base probability of the neutral variant (label "neutral" in the
    lexicon) is shared across groups; each group's score updates it by the
    similarity between the group's terms and the occupation. An
    out-of-vocabulary occupation degrades softly to sim = 0 with a warning.
    """
    if len(group_specs) < 2:
        raise ValidationError("group_score compares at least two groups")
    occupation = _context_words(inst, "occupation")
    _require_mode(inst, mode)
    neutral = expand_variants(inst, lexicon, ["neutral"])[0]
    score = scorer.score(neutral.sentence)
    warnings: list[str] = []
    base = _base_prob(score, neutral, mode, agg, strict, warnings)
    entries = []
    for label, terms in group_specs:
        result = similarity(table, list(terms), occupation)
        if result.oov_terms:
            warnings.append(
                f"instance {inst.id!r} (group {label}): out-of-vocabulary "
                f"{', '.join(result.oov_terms)}"
            )
        entries.append((label, neutral.sentence, base, result.value))
    return _finish(inst.id, mode, "group", entries, warnings)
