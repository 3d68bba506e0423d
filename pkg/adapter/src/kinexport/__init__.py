"""Export detector + segmenter output over a video to .kin.jsonl."""

__version__ = "0.1.0"

from .backends import Detection, ExportError, build_detector, build_segmenter
from .export import ExportConfig, ExportStats, export

__all__ = [
    "Detection",
    "ExportConfig",
    "ExportError",
    "ExportStats",
    "build_detector",
    "build_segmenter",
    "export",
]
