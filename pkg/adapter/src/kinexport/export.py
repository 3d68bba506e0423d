"""Frame-sequential export of detections and masks to the interchange stream.

One JSONL line per source frame, no sampling and no confidence filtering:
all such policy belongs to the analytics engine, so a single export serves
any engine configuration. Per-detection segmentation failures degrade to a
null mask (the engine falls back to the bounding box); only model loading
and video decoding abort the export.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import cv2
import numpy as np

from . import backends
from .backends import Detector, ExportError, Segmenter
from .rle import encode_mask

logger = logging.getLogger(__name__)

FALLBACK_FPS = 30.0


@dataclass
class ExportConfig:
    video: str
    output: str
    detector: str = "yolov8n"
    segmenter: str = "sam_b"
    device: str = "cpu"


@dataclass
class ExportStats:
    frames: int = 0
    detections: int = 0
    mask_failures: int = 0


def _read_video(path: str) -> Tuple[cv2.VideoCapture, float]:
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ExportError(f"cannot open video: {path}")
    fps = capture.get(cv2.CAP_PROP_FPS)
    if not fps or fps <= 0 or math.isnan(fps):
        logger.warning("video reports no frame rate, assuming %.1f fps", FALLBACK_FPS)
        fps = FALLBACK_FPS
    return capture, float(fps)


def _frames(capture: cv2.VideoCapture) -> Iterator[np.ndarray]:
    try:
        while True:
            ok, frame = capture.read()
            if not ok:
                return
            yield frame
    finally:
        capture.release()


def _clip_bbox(
    bbox: Tuple[float, float, float, float], width: int, height: int
) -> Tuple[float, float, float, float]:
    x1 = min(max(bbox[0], 0.0), float(width))
    y1 = min(max(bbox[1], 0.0), float(height))
    x2 = min(max(bbox[2], 0.0), float(width))
    y2 = min(max(bbox[3], 0.0), float(height))
    if x2 < x1:
        x1 = x2 = (x1 + x2) / 2.0
    if y2 < y1:
        y1 = y2 = (y1 + y2) / 2.0
    return x1, y1, x2, y2


def _segment_or_none(
    segmenter: Segmenter,
    frame: np.ndarray,
    bbox: Tuple[float, float, float, float],
    stats: ExportStats,
) -> Optional[np.ndarray]:
    center = ((bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)
    try:
        mask = segmenter.segment(frame, bbox, center)
    except Exception as exc:
        logger.warning("segmentation failed, falling back to bbox: %s", exc)
        stats.mask_failures += 1
        return None
    if mask is None:
        stats.mask_failures += 1
        return None
    mask = np.asarray(mask)
    if mask.shape != frame.shape[:2]:
        logger.warning(
            "segmenter returned %s mask for a %s frame, falling back to bbox",
            mask.shape,
            frame.shape[:2],
        )
        stats.mask_failures += 1
        return None
    return mask.astype(bool)


def export(
    config: ExportConfig,
    detector: Optional[Detector] = None,
    segmenter: Optional[Segmenter] = None,
) -> ExportStats:
    """Run the export; backends may be injected (tests, pre-loaded models)."""
    capture, fps = _read_video(config.video)  # cheap check before loading models
    if detector is None:
        detector = backends.build_detector(config.detector, config.device)
    if segmenter is None:
        segmenter = backends.build_segmenter(config.segmenter, config.device)
    stats = ExportStats()
    out_path = Path(config.output)
    with open(out_path, "w", encoding="utf-8", newline="\n") as out:
        for index, frame in enumerate(_frames(capture)):
            height, width = frame.shape[:2]
            dets = []
            for det in detector.detect(frame):
                bbox = _clip_bbox(det.bbox, width, height)
                mask = _segment_or_none(segmenter, frame, bbox, stats)
                dets.append(
                    {
                        "bbox": list(bbox),
                        "conf": min(max(float(det.confidence), 0.0), 1.0),
                        "mask": encode_mask(mask) if mask is not None else None,
                    }
                )
                stats.detections += 1
            line = {"frame": index, "fps": fps, "w": width, "h": height, "dets": dets}
            out.write(json.dumps(line, separators=(",", ":")) + "\n")
            stats.frames += 1
    logger.info(
        "exported %d frames, %d detections (%d mask fallbacks) to %s",
        stats.frames,
        stats.detections,
        stats.mask_failures,
        out_path,
    )
    return stats
