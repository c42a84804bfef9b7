"""Command-line interface for the embedding exporter.

exit codes:
  0  success
  1  unexpected runtime failure
  2  usage error
  3  missing input file
  4  invalid job (empty/duplicate texts, unknown encoder, no revision)
  5  encoder weights unavailable (download or cache failure)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import (
    ENCODERS,
    ExportError,
    ExportJob,
    ModelUnavailableError,
    run_export,
    texts_from_catalog,
    texts_from_file,
)

EXIT_MISSING = 3
EXIT_BADJOB = 4
EXIT_NOMODEL = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embtxt-export",
        description="Run a frozen pretrained sentence encoder over a text list "
        "and write an EMBTXT v1 embedding store.",
        epilog=__doc__.split("exit codes:")[1].join(["exit codes:", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--texts", help="input file, one text per line")
    source.add_argument("--catalog", help="CATALOG v1 JSON file (instructions + targets)")
    parser.add_argument(
        "--encoder", choices=sorted(ENCODERS), default="sbert_mean",
        help="frozen encoder variant (default: sbert_mean)",
    )
    parser.add_argument(
        "--revision", required=True,
        help="pinned model revision (commit hash or tag); required for reproducible stores",
    )
    parser.add_argument("--out", required=True, help="output EMBTXT path")
    parser.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.texts:
            source = Path(args.texts)
            if not source.is_file():
                print(f"error: texts file not found: {source}", file=sys.stderr)
                return EXIT_MISSING
            texts = texts_from_file(source)
        else:
            source = Path(args.catalog)
            if not source.is_file():
                print(f"error: catalog file not found: {source}", file=sys.stderr)
                return EXIT_MISSING
            texts = texts_from_catalog(source)
        job = ExportJob(
            texts=texts,
            encoder=args.encoder,
            out_path=Path(args.out),
            revision=args.revision,
            batch_size=args.batch_size,
        )
        run_export(job)
    except ModelUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOMODEL
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BADJOB
    print(f"wrote {len(texts)} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
