"""Command-line entry point for the bank exporter.

Exit codes: 0 success, 2 invalid arguments (bad parameters or unknown
model), 3 unusable input data (missing root, empty class folder, degenerate
embeddings).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .augment import MODES, MODE_WEAK
from .export import DEFAULT_TEMPLATE, ExportError, export_bank

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


def _configure_logging() -> None:
    level_name = os.environ.get("PM_LOG", "warning").strip().lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING, "error": logging.ERROR}.get(
                 level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bankexport",
        description="Export a PMEB v1 embedding bank from a folder of "
                    "class-named image subfolders.")
    parser.add_argument("--images", required=True,
                        help="root directory; one subfolder per class")
    parser.add_argument("--out", required=True, help="output bank directory")
    parser.add_argument("--model", default="toy",
                        help="encoder id, e.g. 'toy' or 'toy:128'")
    parser.add_argument("--augs", type=int, default=3,
                        help="augmentations per image")
    parser.add_argument("--mode", choices=MODES, default=MODE_WEAK,
                        help="augmentation menu")
    parser.add_argument("--template", default=DEFAULT_TEMPLATE,
                        help="class text template containing [CLASS]")
    parser.add_argument("--pseudo-names", action="store_true",
                        help="use C1..Cn placeholders instead of folder names")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        summary = export_bank(
            images_root=args.images, out=args.out, model_id=args.model,
            augs_per_image=args.augs, aug_mode=args.mode,
            template=args.template, pseudo_names=args.pseudo_names,
            seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    suffix = f" ({summary.skipped} files skipped)" if summary.skipped else ""
    print(f"wrote bank: {summary.classes} classes, {summary.originals} "
          f"originals, {summary.augmentations} augmentations, dim "
          f"{summary.dim} -> {summary.out}{suffix}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
