import json

import numpy as np

from conftest import BoxSegmenter, FlakySegmenter, ScriptedDetector
from kinexport.export import ExportConfig, export


def read_lines(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def run_export(tmp_path, video, detector, segmenter):
    out = tmp_path / "out.kin.jsonl"
    stats = export(ExportConfig(video=str(video), output=str(out)), detector, segmenter)
    return out, stats


def test_one_line_per_source_frame(tmp_path, tiny_video):
    script = {f: [((4.0, 4.0, 20.0, 28.0), 0.9)] for f in range(10)}
    out, stats = run_export(tmp_path, tiny_video, ScriptedDetector(script), BoxSegmenter())
    lines = read_lines(out)
    assert stats.frames == 10
    assert [line["frame"] for line in lines] == list(range(10))
    assert all((line["w"], line["h"]) == (64, 48) for line in lines)
    assert len({line["fps"] for line in lines}) == 1


def test_frame_without_persons_has_empty_dets(tmp_path, tiny_video):
    script = {3: [((4.0, 4.0, 20.0, 28.0), 0.8)]}
    out, _ = run_export(tmp_path, tiny_video, ScriptedDetector(script), BoxSegmenter())
    lines = read_lines(out)
    assert lines[0]["dets"] == []
    assert len(lines[3]["dets"]) == 1


def test_mask_covers_prompted_box(tmp_path, tiny_video):
    script = {0: [((4.0, 4.0, 20.0, 28.0), 0.8)]}
    out, _ = run_export(tmp_path, tiny_video, ScriptedDetector(script), BoxSegmenter())
    det = read_lines(out)[0]["dets"][0]
    mask = det["mask"]
    assert (mask["h"], mask["w"]) == (48, 64)
    assert sum(mask["runs"]) == 48 * 64
    foreground = sum(mask["runs"][1::2])
    assert foreground == 16 * 24


def test_bbox_clipped_and_confidence_clamped(tmp_path, tiny_video):
    script = {0: [((-5.0, -3.0, 70.0, 60.0), 1.4)]}
    out, _ = run_export(tmp_path, tiny_video, ScriptedDetector(script), BoxSegmenter())
    det = read_lines(out)[0]["dets"][0]
    assert det["bbox"] == [0.0, 0.0, 64.0, 48.0]
    assert det["conf"] == 1.0


def test_segmenter_failure_degrades_to_null_mask(tmp_path, tiny_video):
    script = {f: [((4.0, 4.0, 20.0, 28.0), 0.9)] for f in range(10)}
    out, stats = run_export(tmp_path, tiny_video, ScriptedDetector(script), FlakySegmenter({4}))
    lines = read_lines(out)
    masks = [line["dets"][0]["mask"] for line in lines]
    assert masks[4] is None
    assert all(m is not None for i, m in enumerate(masks) if i != 4)
    assert stats.mask_failures == 1
    assert stats.detections == 10


def test_wrong_shape_mask_degrades_to_null(tmp_path, tiny_video):
    class WrongShape:
        def segment(self, frame, bbox, center):
            return np.ones((4, 4), dtype=bool)

    script = {0: [((4.0, 4.0, 20.0, 28.0), 0.9)]}
    out, stats = run_export(tmp_path, tiny_video, ScriptedDetector(script), WrongShape())
    assert read_lines(out)[0]["dets"][0]["mask"] is None
    assert stats.mask_failures == 1
