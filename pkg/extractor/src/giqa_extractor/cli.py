"""Command-line entry point: extract image features to a GIQF file."""

from __future__ import annotations

import argparse
import sys

from .extract import MODEL_DIMS, PREPROCESSING_NOTE, ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="giqa-extract",
        description="Extract pooled CNN features from an image directory "
        "into a GIQF file.",
        epilog=PREPROCESSING_NOTE
        + "; undecodable files are skipped and listed in <out>.report.json",
    )
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--out", required=True, help="output GIQF path")
    parser.add_argument(
        "--model", choices=sorted(MODEL_DIMS), default="inception_v3"
    )
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(
            image_dir=args.images,
            output_path=args.out,
            model_name=args.model,
            batch_size=args.batch,
            device=args.device,
        )
        out = extract(job)
    except ValueError as exc:
        print(f"giqa-extract: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"giqa-extract: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
