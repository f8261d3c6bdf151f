"""Aggregate bias metrics: ratios, KL bias indication, WEAT, human agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from clozebias.corpus import PronounLexicon, TemplateInstance
from clozebias.embeddings import EmbeddingTable, cosine
from clozebias.errors import DegenerateInputError, OOVError, ValidationError
from clozebias.scoring import BiasResult

KL_EPSILON = 1e-12

AGGREGATIONS = ("mean-ratio", "win-count")
KL_CONSTRUCTIONS = ("update", "pair")
KL_DIRECTIONS = ("forward", "reverse", "symmetric")


@dataclass(frozen=True)
class AggregateReportRow:
    """One report row: per-gender ratio, KL and WEAT for a context kind."""

    context_kind: str
    ratios: tuple[tuple[str, float], ...]
    kl: float
    weat: float | None
    n_instances: int
    aggregation: str

    def __post_init__(self):
        total = math.fsum(r for _, r in self.ratios)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(
                f"row {self.context_kind!r}: ratios sum to {total}, expected 1"
            )
        if self.kl < 0.0:
            raise ValidationError(f"row {self.context_kind!r}: negative KL {self.kl}")

    def ratio(self, label: str) -> float:
        for key, value in self.ratios:
            if key == label:
                return value
        raise ValidationError(f"row {self.context_kind!r} has no label {label!r}")


def _check_results(results: Sequence[BiasResult]) -> tuple[str, ...]:
    if not results:
        raise DegenerateInputError("no results to aggregate")
    labels = results[0].labels
    for r in results:
        if r.labels != labels:
            raise ValidationError(
                f"inconsistent gender sets: {r.labels} vs {labels} "
                f"(instance {r.instance_id!r})"
            )
    return labels


def _win_share(result: BiasResult, label: str) -> float:
    top = result.top_labels()
    if label not in top:
        return 0.0
    return 1.0 / len(top)  # unique winner -> 1, two-way tie -> 0.5


def bias_ratio(results: Sequence[BiasResult], label: str, aggregation: str = "mean-ratio") -> float:
    """Share of gender `label` across instances: mean ratio or win count."""
    labels = _check_results(results)
    if label not in labels:
        raise ValidationError(f"label {label!r} not among result labels {labels}")
    if aggregation == "win-count":
        return math.fsum(_win_share(r, label) for r in results) / len(results)
    if aggregation == "mean-ratio":
        return math.fsum(r.variant(label).ratio for r in results) / len(results)
    raise ValueError(f"unknown aggregation: {aggregation!r}")


def _smoothed(dist: Mapping[str, float], warnings: list[str] | None, who: str) -> list[float]:
    values = []
    for label, p in dist.items():
        if p < KL_EPSILON:
            if warnings is not None:
                warnings.append(
                    f"{who}: probability {p} for {label!r} smoothed to {KL_EPSILON}"
                )
            p = KL_EPSILON
        values.append(p)
    return values


def _kl(p: Sequence[float], q: Sequence[float]) -> float:
    return math.fsum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


def kl_bias(
    results: Sequence[BiasResult],
    direction: str = "forward",
    construction: str = "update",
    warnings: list[str] | None = None,
) -> float:
    """Mean per-instance KL divergence, in nats.

    construction "update" compares the baseline distribution (normalized
    base probabilities) against the similarity-adjusted one; "pair"
    measures the asymmetry of the adjusted gender distribution against its
    mirror (two-gender runs only).
    """
    if direction not in KL_DIRECTIONS:
        raise ValueError(f"unknown KL direction: {direction!r}")
    if construction not in KL_CONSTRUCTIONS:
        raise ValueError(f"unknown KL construction: {construction!r}")
    labels = _check_results(results)
    if construction == "pair" and len(labels) != 2:
        raise ValidationError("pair KL requires exactly two gender variants")
    divergences = []
    for r in results:
        who = f"instance {r.instance_id!r}"
        if construction == "update":
            p = _smoothed(r.base_distribution(), warnings, who)
            q = _smoothed(r.adjusted_distribution(), warnings, who)
        else:
            q = _smoothed(r.adjusted_distribution(), warnings, who)
            p, q = q, list(reversed(q))
        if direction == "forward":
            d = _kl(p, q)
        elif direction == "reverse":
            d = _kl(q, p)
        else:
            d = (_kl(p, q) + _kl(q, p)) / 2.0
        divergences.append(d)
    mean = math.fsum(divergences) / len(divergences)
    if mean < 0.0:
        if mean < -1e-12:
            raise ValidationError(f"negative mean KL {mean}: inconsistent distributions")
        mean = 0.0
    return mean


# --- WEAT ---------------------------------------------------------------------


def _resolve_set(
    table: EmbeddingTable, words: Sequence[str], name: str, warnings: list[str] | None
) -> list:
    found = []
    dropped = []
    for w in words:
        vec = table.lookup(w)
        if vec is None:
            dropped.append(w)
        else:
            found.append(vec)
    if dropped and warnings is not None:
        warnings.append(f"WEAT set {name}: dropped out-of-vocabulary {', '.join(dropped)}")
    if not words:
        raise DegenerateInputError(f"WEAT set {name} is empty")
    if not found:
        raise OOVError(f"WEAT set {name} is fully out of vocabulary: {', '.join(words)}")
    return found


def _association(w, attrs_a, attrs_b) -> float:
    mean_a = math.fsum(cosine(w, a) for a in attrs_a) / len(attrs_a)
    mean_b = math.fsum(cosine(w, b) for b in attrs_b) / len(attrs_b)
    return mean_a - mean_b


def weat(
    x_words: Sequence[str],
    y_words: Sequence[str],
    a_words: Sequence[str],
    b_words: Sequence[str],
    table: EmbeddingTable,
    effect_size: bool = False,
    warnings: list[str] | None = None,
) -> float:
    """Differential association of target sets X, Y with attribute sets A, B.

    Returns mean_x s(x,A,B) - mean_y s(y,A,B) with s(w,A,B) the difference
    of mean cosines -- the raw form, no variance denominator. Pass
    effect_size=True for the conventional standardized variant. Inputs are
    multisets: duplicates count.
    """
    xs = _resolve_set(table, x_words, "X", warnings)
    ys = _resolve_set(table, y_words, "Y", warnings)
    attrs_a = _resolve_set(table, a_words, "A", warnings)
    attrs_b = _resolve_set(table, b_words, "B", warnings)
    s_x = [_association(w, attrs_a, attrs_b) for w in xs]
    s_y = [_association(w, attrs_a, attrs_b) for w in ys]
    value = math.fsum(s_x) / len(s_x) - math.fsum(s_y) / len(s_y)
    if not effect_size:
        return value
    pooled = s_x + s_y
    mean = math.fsum(pooled) / len(pooled)
    variance = math.fsum((s - mean) ** 2 for s in pooled) / len(pooled)
    if variance == 0.0:
        raise DegenerateInputError("WEAT effect size undefined: zero association variance")
    return value / math.sqrt(variance)


class WeatSets:
    """Context-derived WEAT inputs: X/Y from the lexicon, A/B from winners."""

    def __init__(self, x: list[str], y: list[str], a: list[str], b: list[str]):
        self.x, self.y, self.a, self.b = x, y, a, b

    def __iter__(self):
        return iter((self.x, self.y, self.a, self.b))


def derive_weat_sets(
    results: Sequence[BiasResult],
    instances: Mapping[str, TemplateInstance],
    lexicon: PronounLexicon,
    labels: tuple[str, str] = ("m", "w"),
) -> WeatSets:
    """Build WEAT sets from per-instance winners.

    A collects context words of instances won by labels[0], B those won by
    labels[1]; tied instances contribute to neither. Duplicate words are
    retained as a multiset, so a context winning both ways across
    instances appears on both sides.
    """
    _check_results(results)
    x = list(lexicon.entry(labels[0]).query_words)
    y = list(lexicon.entry(labels[1]).query_words)
    a: list[str] = []
    b: list[str] = []
    for r in results:
        if r.winner is None:
            continue
        inst = instances.get(r.instance_id)
        if inst is None:
            raise ValidationError(f"no instance for result {r.instance_id!r}")
        surface = inst.context(r.context_kind)
        if surface is None:
            raise ValidationError(
                f"instance {r.instance_id!r} lacks the {r.context_kind!r} context "
                "its result was scored on"
            )
        words = surface.split()
        if r.winner == labels[0]:
            a.extend(words)
        elif r.winner == labels[1]:
            b.extend(words)
    if not a or not b:
        side = "A" if not a else "B"
        raise DegenerateInputError(
            f"derived WEAT attribute set {side} is empty (every instance won the same "
            "way); inspect the mean-ratio aggregation instead"
        )
    return WeatSets(x, y, a, b)


def human_agreement(results: Sequence[BiasResult], labels: Mapping[str, str]) -> float:
    """Fraction of labeled instances whose winner matches the human label."""
    _check_results(results)
    covered = [r for r in results if r.instance_id in labels]
    if not covered:
        raise DegenerateInputError("no overlap between results and human labels")
    credit = []
    for r in covered:
        want = labels[r.instance_id]
        top = r.top_labels()
        if r.winner == want:
            credit.append(1.0)
        elif r.winner is None and want in top:
            credit.append(1.0 / len(top))
        else:
            credit.append(0.0)
    return math.fsum(credit) / len(credit)
