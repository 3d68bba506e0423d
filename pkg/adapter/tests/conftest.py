import cv2
import numpy as np
import pytest

from kinexport.backends import Detection


@pytest.fixture
def tiny_video(tmp_path):
    path = tmp_path / "clip.avi"
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 30.0, (64, 48))
    if not writer.isOpened():
        pytest.skip("no video writer backend available")
    for i in range(10):
        writer.write(np.full((48, 64, 3), 20 + 5 * i, np.uint8))
    writer.release()
    return path


class ScriptedDetector:
    """Plays back per-frame detections keyed by call order."""

    def __init__(self, script):
        self.script = script
        self.frame = 0

    def detect(self, frame):
        dets = [Detection(bbox=b, confidence=c) for b, c in self.script.get(self.frame, [])]
        self.frame += 1
        return dets


class BoxSegmenter:
    """Fills the integer interior of the prompted box."""

    def segment(self, frame, bbox, center):
        h, w = frame.shape[:2]
        mask = np.zeros((h, w), dtype=bool)
        x1, y1, x2, y2 = (int(round(v)) for v in bbox)
        mask[y1:y2, x1:x2] = True
        return mask


class FlakySegmenter(BoxSegmenter):
    """Raises on scripted segment() call indices."""

    def __init__(self, fail_on):
        self.fail_on = set(fail_on)
        self.calls = 0

    def segment(self, frame, bbox, center):
        index = self.calls
        self.calls += 1
        if index in self.fail_on:
            raise RuntimeError("scripted segmentation failure")
        return super().segment(frame, bbox, center)
