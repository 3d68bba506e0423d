"""kinexport command line: run a video through detector + segmenter."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .backends import ExportError
from .export import ExportConfig, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinexport")
    sub = parser.add_subparsers(dest="command", required=True)
    p_export = sub.add_parser("export", help="emit a .kin.jsonl interchange stream")
    p_export.add_argument("--video", required=True, help="input video path")
    p_export.add_argument("--out", required=True, help="output .kin.jsonl path")
    p_export.add_argument("--detector", default="yolov8n", help="detector variant or weights path")
    p_export.add_argument("--segmenter", default="sam_b", help="segmenter variant or weights path")
    p_export.add_argument("--device", default="cpu")
    p_export.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    config = ExportConfig(
        video=args.video,
        output=args.out,
        detector=args.detector,
        segmenter=args.segmenter,
        device=args.device,
    )
    try:
        stats = export(config)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {stats.frames} frames ({stats.detections} detections) to {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
