"""Command line entry points: text / entities / images / provider."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from rfextract.config import (
    DEFAULT_IMAGE_ENCODER,
    DEFAULT_TEXT_ENCODER,
    ExtractorConfig,
    ExtractorError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfextract", description="Embedding extraction for meme role labeling"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--dataset", required=True)
        sp.add_argument("--output", required=True)
        sp.add_argument("--device", default="cpu")
        sp.add_argument("--batch-size", type=int, default=16)
        sp.add_argument("--seed", type=int, default=0)

    for name in ("text", "entities"):
        sp = sub.add_parser(name, help=f"embed meme {name}")
        add_common(sp)
        sp.add_argument("--encoder", default=DEFAULT_TEXT_ENCODER)
        sp.add_argument("--pooling", choices=["first", "mean"], default="first")
        sp.add_argument("--max-length", type=int, default=512)

    sp = sub.add_parser("images", help="embed meme images")
    add_common(sp)
    sp.add_argument("--encoder", default=DEFAULT_IMAGE_ENCODER)
    sp.add_argument("--kind", choices=["vit", "efficientnet"], default="vit")
    sp.add_argument("--image-root")

    sp = sub.add_parser("provider", help="run the substitution provider loop")
    sp.add_argument("--model", default=DEFAULT_TEXT_ENCODER)
    sp.add_argument("--device", default="cpu")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "provider":
            from rfextract.provider import run_provider

            run_provider(args.model, args.device)
            return 0
        config = ExtractorConfig(
            dataset=Path(args.dataset),
            output=Path(args.output),
            image_root=Path(args.image_root) if getattr(args, "image_root", None) else None,
            text_encoder=getattr(args, "encoder", DEFAULT_TEXT_ENCODER),
            image_encoder=getattr(args, "encoder", DEFAULT_IMAGE_ENCODER),
            image_kind=getattr(args, "kind", "vit"),
            pooling=getattr(args, "pooling", "first"),
            max_length=getattr(args, "max_length", 512),
            batch_size=args.batch_size,
            device=args.device,
            seed=args.seed,
        )
        from rfextract import extract

        op = {
            "text": extract.extract_text,
            "entities": extract.extract_entities,
            "images": extract.extract_images,
        }[args.command]
        count = op(config)
        print(f"wrote {count} rows to {config.output}")
        return 0
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
