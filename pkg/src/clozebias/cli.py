"""Command-line interface.

Subcommands: score (full pipeline), weat (standalone association test),
convert (raw corpus -> canonical JSON-lines), export-sentences (manifest
for offline logprob generation). Exit codes: 0 success, 1 validation
error, 2 transport error, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from clozebias import __version__
from clozebias.corpus import dump_instances, neutralize, parse_corpus
from clozebias.embeddings import load_embeddings
from clozebias.errors import ClozeBiasError, ValidationError, exit_code_for
from clozebias.lm import ENV_LM_URL
from clozebias.metrics import weat
from clozebias.report import (
    FORMATS,
    ProviderSpec,
    RunConfig,
    emit,
    export_sentences,
    run,
    write_manifest,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for transport failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="clozebias", description=__doc__)
    parser.add_argument("--version", action="version", version=f"clozebias {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    score = sub.add_parser("score", help="run the scoring pipeline and emit a report")
    _corpus_args(score)
    score.add_argument("--embeddings", required=True, help="embedding text file")
    provider = score.add_mutually_exclusive_group()
    provider.add_argument("--logprobs", metavar="FILE", help="JSON-lines logprob file")
    provider.add_argument("--server", metavar="URL",
                          help="logprob HTTP endpoint (default: $CLOZEBIAS_LM_URL)")
    provider.add_argument("--mock", action="store_true", help="deterministic offline mock LM")
    score.add_argument("--model-id", help="model id for --server requests")
    score.add_argument("--mock-seed", type=int, default=0)
    score.add_argument("--mode", choices=("last", "all"), default="last")
    score.add_argument("--agg", choices=("mean-prob", "geo-mean"), default="mean-prob",
                       help="whole-sentence aggregation for cloze-all")
    score.add_argument("--ratio", choices=("mean", "wins"), default="mean",
                       help="aggregate ratios by mean ratio or win count")
    score.add_argument("--kl", choices=("update", "pair"), default="update")
    score.add_argument("--combined", choices=("mean", "sum"), default="mean",
                       help="combined-context exponent: mean of updates or their sum")
    score.add_argument("--contexts", help="comma list, e.g. none,noun,verb,occupation,combined")
    score.add_argument("--no-case-fold", action="store_true",
                       help="look embeddings up case-sensitively")
    _common_args(score)

    weat_cmd = sub.add_parser("weat", help="association test on explicit word sets")
    weat_cmd.add_argument("--embeddings", required=True)
    weat_cmd.add_argument("--set-x", required=True, help="comma-separated target words")
    weat_cmd.add_argument("--set-y", required=True)
    weat_cmd.add_argument("--set-a", required=True, help="comma-separated attribute words")
    weat_cmd.add_argument("--set-b", required=True)
    weat_cmd.add_argument("--effect-size", action="store_true")
    weat_cmd.add_argument("--no-case-fold", action="store_true")
    weat_cmd.add_argument("--out", help="output path (default stdout)")

    convert = sub.add_parser("convert", help="normalize a raw corpus to canonical JSON-lines")
    _corpus_args(convert)
    convert.add_argument("--neutralize", choices=("someone", "person"),
                         help="also strip occupations into the gender-neutral family")
    convert.add_argument("--out", help="output path (default stdout)")

    manifest = sub.add_parser(
        "export-sentences", help="emit the deduplicated sentence manifest for a run"
    )
    _corpus_args(manifest)
    manifest.add_argument("--out", help="output path (default stdout)")

    return parser


def _corpus_args(cmd):
    cmd.add_argument("--corpus", required=True, help="corpus JSON-lines file")
    cmd.add_argument(
        "--family", required=True,
        choices=("genderlex", "genderlex-neutral", "winograd", "winobias",
                 "winogender", "crows-pairs", "jp-pairs", "canonical"),
    )
    cmd.add_argument("--lexicon", default="english-binary",
                     help="builtin lexicon name or JSON/TOML config path")


def _common_args(cmd):
    cmd.add_argument("--genders", default="m,w", help="comma list of lexicon labels to score")
    cmd.add_argument("--out", help="output path (default stdout)")
    cmd.add_argument("--format", choices=FORMATS, default="json")
    cmd.add_argument("--strict", action="store_true",
                     help="fail on degenerate sentences instead of flooring")


def _provider_spec(args) -> ProviderSpec:
    if args.mock:
        return ProviderSpec(kind="mock", seed=args.mock_seed)
    if args.logprobs:
        return ProviderSpec(kind="file", path=args.logprobs)
    if args.server or os.environ.get(ENV_LM_URL):
        return ProviderSpec(kind="http", url=args.server, model_id=args.model_id)
    raise ValidationError(
        f"no LM provider: pass --mock, --logprobs, --server, or set {ENV_LM_URL}"
    )


def _write_out(data: bytes, out: str | None) -> None:
    if out:
        with open(out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)


def _cmd_score(args) -> None:
    config = RunConfig(
        corpus_path=args.corpus,
        family=args.family,
        embeddings_path=args.embeddings,
        provider=_provider_spec(args),
        mode={"last": "cloze-last", "all": "cloze-all"}[args.mode],
        agg=args.agg,
        ratio_agg={"mean": "mean-ratio", "wins": "win-count"}[args.ratio],
        kl_construction=args.kl,
        combined_formula=args.combined,
        lexicon=args.lexicon,
        context_kinds=tuple(s.strip() for s in args.contexts.split(",")) if args.contexts else (),
        genders=tuple(s.strip() for s in args.genders.split(",")),
        strict=args.strict,
        case_fold=not args.no_case_fold,
    )
    report = run(config)
    _write_out(emit(report, args.format), args.out)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)


def _cmd_weat(args) -> None:
    table = load_embeddings(args.embeddings, case_fold=not args.no_case_fold)
    warnings: list[str] = []
    sets = {key: [w.strip() for w in getattr(args, f"set_{key}").split(",") if w.strip()]
            for key in ("x", "y", "a", "b")}
    value = weat(
        sets["x"], sets["y"], sets["a"], sets["b"], table,
        effect_size=args.effect_size, warnings=warnings,
    )
    payload = {"weat": value, "effect_size": args.effect_size, "sets": sets,
               "warnings": warnings}
    _write_out((json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n").encode(),
               args.out)


def _cmd_convert(args) -> None:
    instances = parse_corpus(args.corpus, args.family)
    if args.neutralize:
        instances = [neutralize(inst, args.neutralize) for inst in instances]
    _write_out(dump_instances(instances).encode("utf-8"), args.out)
    print(f"converted {len(instances)} instances", file=sys.stderr)


def _cmd_export(args) -> None:
    config = RunConfig(
        corpus_path=args.corpus,
        family=args.family,
        embeddings_path="",  # not needed for the manifest
        provider=ProviderSpec(kind="mock"),
        lexicon=args.lexicon,
    )
    records, duplicates = export_sentences(config)
    if args.out:
        write_manifest(records, args.out)
    else:
        for record in records:
            sys.stdout.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    print(
        f"exported {len(records)} unique sentences ({duplicates} duplicates removed)",
        file=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "score": _cmd_score,
        "weat": _cmd_weat,
        "convert": _cmd_convert,
        "export-sentences": _cmd_export,
    }
    try:
        handlers[args.command](args)
    except ClozeBiasError as err:
        stage = f" [{err.stage}]" if err.stage else ""
        print(f"clozebias: error{stage}: {err}", file=sys.stderr)
        return exit_code_for(err)
    return 0


if __name__ == "__main__":
    sys.exit(main())
