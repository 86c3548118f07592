"""promptfuse-export: encode real inputs into engine-readable files."""

from __future__ import annotations

import argparse
import sys

from .encoders import load_encoder
from .errors import ExporterError
from .export import export_bank, export_patch_features
from .manifest import load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptfuse-export",
        description="Encode category descriptions and example images into "
        "prompt-bank and patch-features files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bank = sub.add_parser("bank", help="export a prompt bank from a manifest")
    p_bank.add_argument("manifest")
    p_bank.add_argument("--out", required=True)
    p_bank.set_defaults(func=cmd_bank)

    p_patches = sub.add_parser("patches", help="export per-image patch features")
    p_patches.add_argument("images", nargs="+")
    p_patches.add_argument("--encoder", default="hash:64")
    p_patches.add_argument("--patches", type=int, default=4)
    p_patches.add_argument("--out", required=True)
    p_patches.set_defaults(func=cmd_patches)
    return parser


def cmd_bank(args) -> int:
    manifest = load_manifest(args.manifest)
    encoder = load_encoder(manifest.encoder)
    out = export_bank(manifest, encoder, args.out)
    print(f"wrote bank with {len(manifest.categories)} categories to {out}")
    return 0


def cmd_patches(args) -> int:
    encoder = load_encoder(args.encoder)
    written = export_patch_features(args.images, encoder, args.patches, args.out)
    print(f"wrote {len(written)} patch-features file(s) under {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
