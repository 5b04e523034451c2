"""Command-line front-end: `sslf-export --manifest ... --out-dir ...`."""

from __future__ import annotations

import argparse
import logging
import sys

from .backbone import DEFAULT_LAYER
from .errors import BackboneError, ExporterError
from .export import ExportJob, run_export, write_log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sslf-export",
        description="Extract wav2vec2 transformer-layer hidden states into SSLF files",
    )
    parser.add_argument("--manifest", required=True, help="corpus manifest CSV")
    parser.add_argument("--out-dir", required=True, help="directory for .sslf outputs")
    parser.add_argument(
        "--backbone",
        default="hf:facebook/wav2vec2-xls-r-2b",
        help="hf:<repo>[@rev] for pretrained weights, or stub:dim=D,layers=N,seed=S",
    )
    parser.add_argument("--layer", type=int, default=DEFAULT_LAYER, help="transformer block, 1-based")
    parser.add_argument("--batch-size", type=int, default=2)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--log-json", help="where to write the export log")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    job = ExportJob(
        manifest_path=args.manifest,
        output_dir=args.out_dir,
        backbone_spec=args.backbone,
        layer_index=args.layer,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        report = run_export(job)
    except BackboneError as exc:
        print(f"backbone error: {exc}", file=sys.stderr)
        return 3
    except ExporterError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 2
    if args.log_json:
        write_log(report, args.log_json)
    print(f"wrote {report.n_ok} feature files, skipped {report.n_skipped}")
    return 0 if report.n_ok > 0 or report.n_skipped == 0 else 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
