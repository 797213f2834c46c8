"""Command line entry point: oodlens-extract --model <id> --images <dir> --out <prefix>."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import (
    DecodeError,
    EmptyInput,
    ExtractionJob,
    ExtractorError,
    ModelUnavailable,
    extract,
    registry_entries,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodlens-extract",
        description=(
            "Extract penultimate features and logits for an image folder "
            "and write OODT tensors plus a JSON manifest."
        ),
    )
    parser.add_argument(
        "--model", required=True, choices=sorted(registry_entries()),
        help="pretrained-model registry id",
    )
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--out", required=True, help="output path prefix")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--untrained", action="store_true",
        help="skip weight download; run the architecture with seeded random init",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        model_id=args.model,
        image_dir=args.images,
        out_prefix=args.out,
        batch_size=args.batch,
        device=args.device,
        pretrained=not args.untrained,
    )
    try:
        result = extract(job)
    except (ModelUnavailable, EmptyInput, DecodeError, ExtractorError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    print(
        f"wrote {result.n_rows} rows (feature dim {result.feature_dim}) to "
        f"{result.features_path} / {result.logits_path}"
    )
    if result.failures:
        print(f"{len(result.failures)} file(s) failed to decode; see manifest")
    return 0


if __name__ == "__main__":
    sys.exit(main())
