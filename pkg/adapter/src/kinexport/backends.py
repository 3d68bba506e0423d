"""Detector and segmenter backends.

The export loop only needs two duck-typed objects: a detector with
``detect(frame_bgr) -> [Detection]`` returning person detections, and a
segmenter with ``segment(frame_bgr, bbox, center) -> bool array | None``.
The real backends wrap pretrained weights and are imported lazily so the
package works (and its tests run) without the model stack installed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np

COCO_PERSON_CLASS = 0

# simple variant names accepted on the CLI; anything else is treated as a
# weights path and handed to the loader as-is
DETECTOR_VARIANTS = {
    "yolov8n": "yolov8n.pt",
    "yolo11n": "yolo11n.pt",
    "yolov11n": "yolo11n.pt",
}
SEGMENTER_VARIANTS = {
    "sam_b": "sam_b.pt",
    "sam_l": "sam_l.pt",
    "mobile_sam": "mobile_sam.pt",
}


class ExportError(RuntimeError):
    """Model loading or video decoding failure."""


@dataclass(frozen=True)
class Detection:
    bbox: Tuple[float, float, float, float]  # x1, y1, x2, y2
    confidence: float


class Detector(Protocol):
    def detect(self, frame_bgr: np.ndarray) -> List[Detection]: ...


class Segmenter(Protocol):
    def segment(
        self,
        frame_bgr: np.ndarray,
        bbox: Tuple[float, float, float, float],
        center: Tuple[float, float],
    ) -> Optional[np.ndarray]: ...


class UltralyticsDetector:
    """Person detections from a pretrained single-stage detector."""

    def __init__(self, weights: str, device: str = "cpu") -> None:
        try:
            from ultralytics import YOLO
        except ImportError as exc:
            raise ExportError(
                "ultralytics is not installed; install the 'models' extra to run real exports"
            ) from exc
        try:
            self._model = YOLO(weights)
        except Exception as exc:
            raise ExportError(f"cannot load detector weights {weights!r}: {exc}") from exc
        self._device = device

    def detect(self, frame_bgr: np.ndarray) -> List[Detection]:
        results = self._model.predict(frame_bgr, device=self._device, verbose=False)
        detections: List[Detection] = []
        for result in results:
            boxes = result.boxes
            if boxes is None:
                continue
            for box in boxes:
                if int(box.cls[0]) != COCO_PERSON_CLASS:
                    continue
                x1, y1, x2, y2 = (float(v) for v in box.xyxy[0])
                detections.append(Detection(bbox=(x1, y1, x2, y2), confidence=float(box.conf[0])))
        return detections


class SamSegmenter:
    """Promptable segmentation driven by a box plus its center point."""

    def __init__(self, weights: str, device: str = "cpu") -> None:
        try:
            from ultralytics import SAM
        except ImportError as exc:
            raise ExportError(
                "ultralytics is not installed; install the 'models' extra to run real exports"
            ) from exc
        try:
            self._model = SAM(weights)
        except Exception as exc:
            raise ExportError(f"cannot load segmenter weights {weights!r}: {exc}") from exc
        self._device = device

    def segment(self, frame_bgr, bbox, center):
        results = self._model.predict(
            frame_bgr,
            bboxes=[list(bbox)],
            points=[[center[0], center[1]]],
            labels=[1],
            device=self._device,
            verbose=False,
        )
        if not results:
            return None
        masks = results[0].masks
        if masks is None or len(masks.data) == 0:
            return None
        return masks.data[0].cpu().numpy().astype(bool)


def build_detector(name: str, device: str = "cpu") -> Detector:
    return UltralyticsDetector(DETECTOR_VARIANTS.get(name, name), device)


def build_segmenter(name: str, device: str = "cpu") -> Segmenter:
    return SamSegmenter(SEGMENTER_VARIANTS.get(name, name), device)
