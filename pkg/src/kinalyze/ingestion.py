"""Interchange-stream parsing, confidence filtering, sampling, mask sanity checks.

The interchange format (``.kin.jsonl``) is UTF-8 JSON Lines, one object per
frame::

    {"frame": int, "fps": float, "w": int, "h": int,
     "dets": [{"bbox": [x1,y1,x2,y2], "conf": float,
               "mask": {"h":..,"w":..,"runs":[..]} | null}]}

Frames must be ascending by ``frame`` with constant dimensions and fps, and
boxes must lie within the frame. Parsing is generator based: frames are
delivered downstream strictly in index order, and laziness provides the
back pressure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from .mask_geometry import BBox, MaskError, RleMask, mask_stats


class ParseError(ValueError):
    """Malformed interchange input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable thresholds for the full pipeline.

    The first block mirrors the documented defaults; the second block holds
    advanced knobs (mask sanity bounds, classification split) that normally
    stay at their defaults.
    """

    confidence_threshold: float = 0.4
    iou_threshold: float = 0.3
    track_cooldown_frames: int = 5
    motion_threshold: float = 0.01
    step_threshold: float = 0.03
    step_cooldown_frames: int = 5
    sampling_stride: int = 5
    pixels_per_meter: Optional[float] = None
    # advanced: mask sanity checks (fractions of bbox area / bbox side)
    mask_min_area_fraction: float = 0.05
    mask_max_area_fraction: float = 1.0
    centroid_margin_fraction: float = 0.10
    # advanced: a non-primary dancer is "secondary" when its cumulative
    # motion reaches this fraction of the primary's
    secondary_fraction: float = 0.5

    def __post_init__(self) -> None:
        for name in (
            "confidence_threshold",
            "iou_threshold",
            "motion_threshold",
            "step_threshold",
            "mask_min_area_fraction",
            "mask_max_area_fraction",
            "centroid_margin_fraction",
            "secondary_fraction",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("track_cooldown_frames", "step_cooldown_frames"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sampling_stride < 1:
            raise ValueError("sampling_stride must be >= 1")
        if self.pixels_per_meter is not None and self.pixels_per_meter <= 0:
            raise ValueError("pixels_per_meter must be > 0 when set")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "confidence_threshold": self.confidence_threshold,
            "iou_threshold": self.iou_threshold,
            "track_cooldown_frames": self.track_cooldown_frames,
            "motion_threshold": self.motion_threshold,
            "step_threshold": self.step_threshold,
            "step_cooldown_frames": self.step_cooldown_frames,
            "sampling_stride": self.sampling_stride,
            "pixels_per_meter": self.pixels_per_meter,
            "mask_min_area_fraction": self.mask_min_area_fraction,
            "mask_max_area_fraction": self.mask_max_area_fraction,
            "centroid_margin_fraction": self.centroid_margin_fraction,
            "secondary_fraction": self.secondary_fraction,
        }

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "PipelineConfig":
        known = set(cls().to_dict())
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class DetectionRecord:
    """One detected person in one frame; ``det_index`` is its position in the
    source frame's ``dets`` array (kept so reports can reference the input)."""

    bbox: BBox
    confidence: float
    mask: Optional[RleMask] = None
    det_index: int = 0


@dataclass
class FrameRecord:
    frame_index: int
    fps: float
    width: int
    height: int
    detections: List[DetectionRecord] = field(default_factory=list)

    @property
    def timestamp(self) -> float:
        return self.frame_index / self.fps


def _require(obj: Dict[str, Any], key: str, line_no: int) -> Any:
    if key not in obj:
        raise ParseError(line_no, f"missing field '{key}'")
    return obj[key]


def _parse_bbox(raw: Any, width: int, height: int, line_no: int, where: str) -> BBox:
    if (
        not isinstance(raw, list)
        or len(raw) != 4
        or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in raw)
    ):
        raise ParseError(line_no, f"{where}: bbox must be four finite numbers")
    x1, y1, x2, y2 = (float(v) for v in raw)
    if x2 < x1 or y2 < y1:
        raise ParseError(line_no, f"{where}: inverted bbox {raw}")
    if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
        raise ParseError(line_no, f"{where}: bbox {raw} outside {width}x{height} frame")
    return BBox(x1, y1, x2, y2)


def _parse_detection(
    raw: Any, det_index: int, width: int, height: int, line_no: int
) -> DetectionRecord:
    where = f"dets[{det_index}]"
    if not isinstance(raw, dict):
        raise ParseError(line_no, f"{where}: detection must be an object")
    bbox = _parse_bbox(_require(raw, "bbox", line_no), width, height, line_no, where)
    conf = _require(raw, "conf", line_no)
    if not isinstance(conf, (int, float)) or not (0.0 <= conf <= 1.0):
        raise ParseError(line_no, f"{where}: conf must be in [0, 1], got {conf!r}")
    mask_obj = raw.get("mask")
    mask = None
    if mask_obj is not None:
        try:
            mask = RleMask.from_wire(mask_obj)
        except MaskError as exc:
            raise ParseError(line_no, f"{where}: {exc}") from exc
        if (mask.height, mask.width) != (height, width):
            raise ParseError(
                line_no,
                f"{where}: mask is {mask.height}x{mask.width}, frame is {height}x{width}",
            )
    return DetectionRecord(bbox=bbox, confidence=float(conf), mask=mask, det_index=det_index)


def parse_frame_object(obj: Any, line_no: int) -> FrameRecord:
    """Parse one decoded JSON object into a FrameRecord (shared by GT parsing)."""
    if not isinstance(obj, dict):
        raise ParseError(line_no, "frame must be a JSON object")
    frame_index = _require(obj, "frame", line_no)
    if not isinstance(frame_index, int) or frame_index < 0:
        raise ParseError(line_no, f"frame index must be a non-negative integer, got {frame_index!r}")
    fps = _require(obj, "fps", line_no)
    if not isinstance(fps, (int, float)) or not math.isfinite(fps) or fps <= 0:
        raise ParseError(line_no, f"fps must be a positive number, got {fps!r}")
    width = _require(obj, "w", line_no)
    height = _require(obj, "h", line_no)
    if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
        raise ParseError(line_no, f"frame dimensions must be positive integers, got {width!r}x{height!r}")
    dets_raw = _require(obj, "dets", line_no)
    if not isinstance(dets_raw, list):
        raise ParseError(line_no, "'dets' must be an array")
    detections = [
        _parse_detection(d, i, width, height, line_no) for i, d in enumerate(dets_raw)
    ]
    return FrameRecord(
        frame_index=frame_index,
        fps=float(fps),
        width=width,
        height=height,
        detections=detections,
    )


def iter_json_lines(source: Iterable[Union[str, bytes]]) -> Iterator[Tuple[int, Any]]:
    """Yield (line_no, decoded object) for non-blank lines; malformed JSON raises."""
    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(line_no, f"invalid UTF-8: {exc}") from exc
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
        yield line_no, obj


def parse_stream(source: Iterable[Union[str, bytes]]) -> Iterator[FrameRecord]:
    """Yield FrameRecords from a JSON-Lines interchange stream, in frame order.

    Raises ParseError (with the offending line number) for malformed lines,
    non-monotonic frame indices, or mid-stream dimension/fps changes.
    """
    prev_index: Optional[int] = None
    stream_shape: Optional[Tuple[float, int, int]] = None
    for line_no, obj in iter_json_lines(source):
        frame = parse_frame_object(obj, line_no)
        if prev_index is not None and frame.frame_index <= prev_index:
            raise ParseError(
                line_no,
                f"frame index {frame.frame_index} not increasing (previous {prev_index})",
            )
        shape = (frame.fps, frame.width, frame.height)
        if stream_shape is None:
            stream_shape = shape
        elif shape[1:] != stream_shape[1:]:
            raise ParseError(
                line_no,
                f"frame dimensions changed mid-stream: {shape[1]}x{shape[2]} "
                f"vs {stream_shape[1]}x{stream_shape[2]}",
            )
        elif shape[0] != stream_shape[0]:
            raise ParseError(line_no, f"fps changed mid-stream: {shape[0]} vs {stream_shape[0]}")
        prev_index = frame.frame_index
        yield frame


def preprocess(frames: Iterable[FrameRecord], config: PipelineConfig) -> Iterator[FrameRecord]:
    """Temporal sampling plus confidence filtering.

    Keeps frames whose index is 0 mod ``sampling_stride`` (phase 0), then
    drops detections below ``confidence_threshold``. The cut is inclusive:
    a detection at exactly the threshold survives.
    """
    for frame in frames:
        if frame.frame_index % config.sampling_stride != 0:
            continue
        kept = [d for d in frame.detections if d.confidence >= config.confidence_threshold]
        yield FrameRecord(
            frame_index=frame.frame_index,
            fps=frame.fps,
            width=frame.width,
            height=frame.height,
            detections=kept,
        )


def validate_detection(det: DetectionRecord, config: PipelineConfig) -> DetectionRecord:
    """Mask sanity checks with bbox fallback.

    The mask is discarded (never the whole detection) when its area is an
    implausible fraction of the bbox area or its centroid falls outside the
    bbox expanded by the configured margin per side. Bbox and confidence are
    never touched.
    """
    if det.mask is None:
        return det
    stats = mask_stats(det.mask)
    if stats.area == 0:
        return replace(det, mask=None)
    box_area = det.bbox.area
    if stats.area < config.mask_min_area_fraction * box_area:
        return replace(det, mask=None)
    if stats.area > config.mask_max_area_fraction * box_area:
        return replace(det, mask=None)
    cx, cy = stats.centroid
    margin_x = config.centroid_margin_fraction * (det.bbox.x2 - det.bbox.x1)
    margin_y = config.centroid_margin_fraction * (det.bbox.y2 - det.bbox.y1)
    inside = (
        det.bbox.x1 - margin_x <= cx <= det.bbox.x2 + margin_x
        and det.bbox.y1 - margin_y <= cy <= det.bbox.y2 + margin_y
    )
    if not inside:
        return replace(det, mask=None)
    return det


def validate_frame(frame: FrameRecord, config: PipelineConfig) -> FrameRecord:
    """Apply validate_detection to every detection of a frame."""
    return FrameRecord(
        frame_index=frame.frame_index,
        fps=frame.fps,
        width=frame.width,
        height=frame.height,
        detections=[validate_detection(d, config) for d in frame.detections],
    )
