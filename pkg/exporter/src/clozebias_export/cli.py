"""clozebias-export command line.

Export mode scores a sentence manifest into a JSON-lines logprob file;
--serve exposes the same model behind POST /v1/logprobs instead.
"""

from __future__ import annotations

import argparse
import sys

from clozebias_export import __version__
from clozebias_export.scoring import ExportError, ExportJob, export


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clozebias-export", description=__doc__)
    parser.add_argument("--version", action="version", version=f"clozebias-export {__version__}")
    parser.add_argument("--model", "-m", required=True,
                        help="model name or local path (transformers)")
    parser.add_argument("--model-id", help="model id recorded in the output "
                        "(defaults to --model)")
    parser.add_argument("--manifest", help="sentence manifest (JSON-lines with 'text')")
    parser.add_argument("--out", help="output logprob file")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--serve", action="store_true", help="run the HTTP service instead")
    parser.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.serve:
            from clozebias_export.server import serve

            serve(args.model, args.port, model_id=args.model_id,
                  device=args.device, batch_size=args.batch_size)
            return 0
        if not args.manifest or not args.out:
            print("clozebias-export: error: --manifest and --out are required "
                  "unless --serve is given", file=sys.stderr)
            return 1
        count = export(
            ExportJob(
                manifest_path=args.manifest,
                model=args.model,
                out_path=args.out,
                model_id=args.model_id,
                batch_size=args.batch_size,
                device=args.device,
            )
        )
        print(f"wrote {count} records to {args.out}", file=sys.stderr)
    except ExportError as err:
        print(f"clozebias-export: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
