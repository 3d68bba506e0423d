"""Deterministic movement analytics over per-frame dancer detection streams."""

__version__ = "0.1.0"

from .mask_geometry import (
    BBox,
    MaskError,
    MaskStats,
    RleMask,
    bbox_center,
    bbox_iou,
    mask_iou,
    mask_stats,
    mask_xor_union,
    rle_decode,
    rle_encode,
)
from .ingestion import (
    DetectionRecord,
    FrameRecord,
    ParseError,
    PipelineConfig,
    parse_stream,
    preprocess,
    validate_detection,
    validate_frame,
)
from .tracker import Observation, Track, TrackState, Tracker, greedy_match, run_tracking

__all__ = [
    "BBox",
    "DetectionRecord",
    "FrameRecord",
    "MaskError",
    "MaskStats",
    "Observation",
    "ParseError",
    "PipelineConfig",
    "RleMask",
    "Track",
    "TrackState",
    "Tracker",
    "bbox_center",
    "bbox_iou",
    "greedy_match",
    "mask_iou",
    "mask_stats",
    "mask_xor_union",
    "parse_stream",
    "preprocess",
    "rle_decode",
    "rle_encode",
    "run_tracking",
    "validate_detection",
    "validate_frame",
]
