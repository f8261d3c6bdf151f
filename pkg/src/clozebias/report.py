"""Pipeline orchestration: corpus + embeddings + LM source -> deterministic report.

A run scores every instance for each requested context kind, aggregates
per-kind rows (ratio / KL / WEAT), and serializes a report whose JSON form
is byte-identical across runs on the same inputs. Input files are echoed
as basename + sha256 so reports are location-independent.
"""

from __future__ import annotations

import hashlib
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from clozebias import __version__, corpus as corpus_mod, metrics as metrics_mod
from clozebias.corpus import PronounLexicon, TemplateInstance
from clozebias.embeddings import EmbeddingTable, load_embeddings
from clozebias.errors import (
    ClozeBiasError,
    DegenerateInputError,
    ValidationError,
)
from clozebias.lm import (
    ENV_LM_URL,
    FileProvider,
    HTTPProvider,
    MockProvider,
    Scorer,
    sentence_id,
)
from clozebias.scoring import BiasResult, combined_score, score_instance

FORMATS = ("json", "tsv", "markdown")

# context kinds each family can be scored on (besides none/combined)
FAMILY_KINDS = {
    "genderlex": ("occupation", "noun", "verb"),
    "genderlex-neutral": ("noun", "verb"),
    "winograd": ("occupation", "noun", "verb"),
    "crows-pairs": ("concept",),
    "jp-pairs": ("concept",),
}


@dataclass(frozen=True)
class ProviderSpec:
    kind: str  # "mock" | "file" | "http"
    path: str | None = None
    url: str | None = None
    model_id: str | None = None
    seed: int = 0

    def build(self):
        if self.kind == "mock":
            return MockProvider(seed=self.seed)
        if self.kind == "file":
            if not self.path:
                raise ValidationError("file provider needs a logprob path")
            return FileProvider(self.path)
        if self.kind == "http":
            url = self.url or os.environ.get(ENV_LM_URL, "")
            if not url:
                raise ValidationError(
                    f"http provider needs --server or the {ENV_LM_URL} environment variable"
                )
            if not self.model_id:
                raise ValidationError("http provider needs an explicit model id")
            return HTTPProvider(url, model_id=self.model_id)
        raise ValidationError(f"unknown provider kind: {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    family: str
    embeddings_path: str
    provider: ProviderSpec
    mode: str = "cloze-last"  # forced to cloze-all for mid-sentence pronouns
    agg: str = "mean-prob"
    ratio_agg: str = "mean-ratio"
    kl_construction: str = "update"
    combined_formula: str = "mean"
    lexicon: str = "english-binary"  # builtin name or a config file path
    context_kinds: tuple[str, ...] = ()  # empty -> family defaults
    genders: tuple[str, ...] = ("m", "w")
    strict: bool = False
    case_fold: bool = True


@dataclass(frozen=True)
class BiasReport:
    config: dict
    rows: tuple[metrics_mod.AggregateReportRow, ...]
    instances: tuple[dict, ...]
    human_agreement: tuple[tuple[str, float], ...]  # (context_kind, HB fraction)
    warnings: tuple[str, ...]


@contextmanager
def _stage(name: str):
    try:
        yield
    except ClozeBiasError as err:
        if err.stage is None:
            err.stage = name
        raise


def _hash_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_echo(path: str | Path) -> dict:
    return {"name": Path(path).name, "sha256": _hash_file(path)}


def _load_lexicon(spec: str) -> PronounLexicon:
    if spec in corpus_mod.BUILTIN_LEXICONS:
        return corpus_mod.builtin_lexicon(spec)
    return corpus_mod.load_lexicon(spec)


def _resolve_kinds(config: RunConfig, instances: Sequence[TemplateInstance]) -> tuple[str, ...]:
    family = instances[0].family
    valid = FAMILY_KINDS.get(family, ())
    if config.context_kinds:
        kinds = config.context_kinds
        for kind in kinds:
            if kind in ("none", "combined"):
                continue
            if kind not in valid:
                raise ValidationError(
                    f"context kind {kind!r} is not valid for family {family!r} "
                    f"(valid: none, combined, {', '.join(valid)})"
                )
        return kinds
    kinds = ["none", *valid]
    if len(valid) > 1:
        kinds.append("combined")
    return tuple(kinds)


def _effective_mode(config: RunConfig, instances: Sequence[TemplateInstance]) -> tuple[str, list[str]]:
    """Mid-sentence pronouns force whole-sentence scoring."""
    warnings = []
    mode = config.mode
    if mode == "cloze-last" and not all(i.pronoun_final() for i in instances):
        n = sum(1 for i in instances if not i.pronoun_final())
        warnings.append(
            f"{n} instances have mid-sentence pronouns; scoring whole sentences (cloze-all)"
        )
        mode = "cloze-all"
    return mode, warnings


def _score_all(
    instances: Sequence[TemplateInstance],
    kinds: Sequence[str],
    config: RunConfig,
    table: EmbeddingTable,
    scorer: Scorer,
    lexicon: PronounLexicon,
    mode: str,
) -> dict[str, list[BiasResult]]:
    shared = dict(
        table=table, scorer=scorer, lexicon=lexicon,
        mode=mode, agg=config.agg, strict=config.strict,
    )
    by_kind: dict[str, list[BiasResult]] = {}
    for kind in kinds:
        results = []
        for inst in sorted(instances, key=lambda i: i.id):
            if kind == "combined":
                results.append(
                    combined_score(
                        inst, genders=config.genders,
                        formula=config.combined_formula, **shared,
                    )
                )
            else:
                if kind != "none" and inst.context(kind) is None:
                    continue  # family allows the kind; this instance lacks it
                results.append(
                    score_instance(
                        inst, genders=config.genders, context_kind=kind, **shared
                    )
                )
        by_kind[kind] = results
    return by_kind


def _aggregate_row(
    kind: str,
    results: Sequence[BiasResult],
    config: RunConfig,
    table: EmbeddingTable,
    lexicon: PronounLexicon,
    instances: dict[str, TemplateInstance],
    warnings: list[str],
) -> metrics_mod.AggregateReportRow:
    if not results:
        raise DegenerateInputError(f"no instances carry the {kind!r} context")
    ratios = tuple(
        (label, metrics_mod.bias_ratio(results, label, config.ratio_agg))
        for label in config.genders
    )
    kl = metrics_mod.kl_bias(
        results, construction=config.kl_construction, warnings=warnings
    )
    weat_value = None
    if kind not in ("none", "combined") and len(config.genders) == 2:
        try:
            sets = metrics_mod.derive_weat_sets(
                results, instances, lexicon, labels=(config.genders[0], config.genders[1])
            )
            weat_value = metrics_mod.weat(*sets, table=table, warnings=warnings)
        except DegenerateInputError as err:
            warnings.append(f"WEAT unavailable for {kind!r}: {err}")
    return metrics_mod.AggregateReportRow(
        context_kind=kind,
        ratios=ratios,
        kl=kl,
        weat=weat_value,
        n_instances=len(results),
        aggregation=config.ratio_agg,
    )


def _instance_detail(result: BiasResult) -> dict:
    return {
        "instance_id": result.instance_id,
        "context_kind": result.context_kind,
        "mode": result.mode,
        "variants": [
            {
                "label": v.label,
                "base_prob": v.base_prob,
                "sim": v.sim,
                "cgs": v.cgs,
                "ratio": v.ratio,
            }
            for v in result.variants
        ],
        "winner": result.winner,
        "tie": result.tie,
    }


def run(config: RunConfig) -> BiasReport:
    """Execute the full scoring pipeline for one configuration."""
    with _stage("corpus"):
        instances = corpus_mod.parse_corpus(config.corpus_path, config.family)
    with _stage("embeddings"):
        table = load_embeddings(config.embeddings_path, case_fold=config.case_fold)
    with _stage("lexicon"):
        lexicon = _load_lexicon(config.lexicon)
        for g in config.genders:
            lexicon.entry(g)  # must cover the requested genders
    with _stage("provider"):
        provider = config.provider.build()
        scorer = Scorer(provider)

    warnings: list[str] = list(table.warnings)
    kinds = _resolve_kinds(config, instances)
    mode, mode_warnings = _effective_mode(config, instances)
    warnings.extend(mode_warnings)

    with _stage("scoring"):
        by_kind = _score_all(instances, kinds, config, table, scorer, lexicon, mode)

    by_id = {inst.id: inst for inst in instances}
    rows = []
    details: list[dict] = []
    agreement: list[tuple[str, float]] = []
    human_labels = {
        inst.id: inst.human_label for inst in instances if inst.human_label is not None
    }
    with _stage("aggregation"):
        for kind in kinds:
            results = by_kind[kind]
            rows.append(
                _aggregate_row(kind, results, config, table, lexicon, by_id, warnings)
            )
            details.extend(_instance_detail(r) for r in results)
            for r in results:
                warnings.extend(r.warnings)
                if r.tie:
                    warnings.append(
                        f"instance {r.instance_id!r} ({kind}): tie between "
                        + ", ".join(r.top_labels())
                    )
            if human_labels:
                covered = [r for r in results if r.instance_id in human_labels]
                if covered:
                    agreement.append(
                        (kind, metrics_mod.human_agreement(results, human_labels))
                    )

    config_echo = {
        "tool_version": __version__,
        "corpus": _input_echo(config.corpus_path),
        "family": instances[0].family,
        "embeddings": _input_echo(config.embeddings_path),
        "provider": {
            "kind": config.provider.kind,
            "model_id": scorer.model_id,
            **(
                {"logprobs": _input_echo(config.provider.path)}
                if config.provider.kind == "file"
                else {}
            ),
        },
        "mode": mode,
        "agg": config.agg,
        "ratio_aggregation": config.ratio_agg,
        "kl_construction": config.kl_construction,
        "combined_formula": config.combined_formula,
        "lexicon": config.lexicon,
        "context_kinds": list(kinds),
        "genders": list(config.genders),
        "strict": config.strict,
        "n_instances": len(instances),
    }
    return BiasReport(
        config=config_echo,
        rows=tuple(rows),
        instances=tuple(details),
        human_agreement=tuple(agreement),
        warnings=tuple(warnings),
    )


# --- serialization -----------------------------------------------------------


def report_to_obj(report: BiasReport) -> dict:
    return {
        "config": report.config,
        "rows": [
            {
                "context": row.context_kind,
                "ratios": {label: value for label, value in row.ratios},
                "kl": row.kl,
                "weat": row.weat,
                "n": row.n_instances,
                "aggregation": row.aggregation,
            }
            for row in report.rows
        ],
        "human_agreement": {kind: value for kind, value in report.human_agreement},
        "instances": list(report.instances),
        "warnings": list(report.warnings),
    }


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.6f}"


def _bar(share: float, cells: int = 20) -> str:
    filled = round(share * cells)
    return "#" * filled + "-" * (cells - filled)


def emit(report: BiasReport, format: str = "json") -> bytes:
    """Serialize a report: canonical json, aggregate-row tsv, or markdown grid."""
    if format == "json":
        text = json.dumps(report_to_obj(report), sort_keys=True, ensure_ascii=False, indent=2)
        return (text + "\n").encode("utf-8")
    labels = [label for label, _ in report.rows[0].ratios] if report.rows else []
    if format == "tsv":
        lines = ["\t".join(["context", *[l.upper() for l in labels], "KL", "WEAT", "n", "aggregation"])]
        for row in report.rows:
            lines.append(
                "\t".join(
                    [
                        row.context_kind,
                        *[_fmt(row.ratio(l)) for l in labels],
                        _fmt(row.kl),
                        _fmt(row.weat),
                        str(row.n_instances),
                        row.aggregation,
                    ]
                )
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "markdown":
        cfg = report.config
        lines = [
            "# clozebias report",
            "",
            f"model `{cfg['provider']['model_id']}` | corpus `{cfg['corpus']['name']}` "
            f"({cfg['n_instances']} instances) | embeddings `{cfg['embeddings']['name']}` | "
            f"mode `{cfg['mode']}` | aggregation `{cfg['ratio_aggregation']}`",
            "",
            "| context | " + " | ".join(l.upper() for l in labels) + " | KL | WEAT |",
            "|---|" + "---|" * (len(labels) + 2),
        ]
        for row in report.rows:
            cells = [row.context_kind, *[_fmt(row.ratio(l)) for l in labels],
                     _fmt(row.kl), _fmt(row.weat)]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("## ratio bars")
        lines.append("")
        for row in report.rows:
            first = labels[0] if labels else ""
            share = row.ratio(first) if labels else 0.0
            lines.append(f"- `{row.context_kind:<12}` {first.upper()} `{_bar(share)}` {_fmt(share)}")
        if report.human_agreement:
            lines.append("")
            lines.append("## human agreement")
            lines.append("")
            for kind, value in report.human_agreement:
                lines.append(f"- `{kind}`: {_fmt(value)}")
        if report.warnings:
            lines.append("")
            lines.append(f"_{len(report.warnings)} warnings (see json report)_")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValidationError(f"unknown report format: {format!r}")


# --- sentence manifest ---------------------------------------------------------


class Manifest(tuple):
    """(records, duplicates): unique sentences plus the deduplicated count."""

    def __new__(cls, records: list[dict], duplicates: int):
        return super().__new__(cls, (records, duplicates))

    @property
    def records(self) -> list[dict]:
        return self[0]

    @property
    def duplicates(self) -> int:
        return self[1]


def export_sentences(config: RunConfig) -> Manifest:
    """Deduplicated manifest of every sentence a run will need scored.

    Manifest ids are text-only hashes (model_id ""): the scoring model is
    chosen later by whichever exporter consumes the manifest.
    """
    with _stage("corpus"):
        instances = corpus_mod.parse_corpus(config.corpus_path, config.family)
    with _stage("lexicon"):
        lexicon = _load_lexicon(config.lexicon)
    seen: dict[str, str] = {}
    duplicates = 0
    for inst in sorted(instances, key=lambda i: i.id):
        for variant in corpus_mod.expand_variants(inst, lexicon):
            sid = sentence_id("", variant.sentence)
            if sid in seen:
                duplicates += 1
            else:
                seen[sid] = variant.sentence
    records = [
        {"sentence_id": sid, "text": text}
        for sid, text in sorted(seen.items(), key=lambda kv: kv[0])
    ]
    return Manifest(records, duplicates)


def write_manifest(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
