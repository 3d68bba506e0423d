import json
import math

import numpy as np
import pytest

from kinalyze.ingestion import (
    DetectionRecord,
    ParseError,
    PipelineConfig,
    parse_stream,
    preprocess,
    validate_detection,
    validate_frame,
)
from kinalyze.mask_geometry import BBox, rle_encode


def frame_line(frame, dets=(), fps=30.0, w=64, h=48):
    return json.dumps({"frame": frame, "fps": fps, "w": w, "h": h, "dets": list(dets)})


def det_obj(bbox=(0, 0, 10, 10), conf=0.9, mask=None):
    return {"bbox": list(bbox), "conf": conf, "mask": mask}


def block_wire(h, w, top, left, bh, bw):
    grid = np.zeros((h, w), dtype=bool)
    grid[top : top + bh, left : left + bw] = True
    return rle_encode(grid).to_wire()


class TestParseStream:
    def test_empty_input(self):
        assert list(parse_stream([])) == []

    def test_blank_lines_skipped(self):
        frames = list(parse_stream(["\n", frame_line(0), "   \n", frame_line(1)]))
        assert [f.frame_index for f in frames] == [0, 1]

    def test_three_frames_in_order(self):
        lines = [frame_line(i, [det_obj(conf=0.5)]) for i in range(3)]
        frames = list(parse_stream(lines))
        assert [f.frame_index for f in frames] == [0, 1, 2]
        assert all(len(f.detections) == 1 for f in frames)
        assert frames[1].timestamp == pytest.approx(1 / 30.0)

    def test_detection_fields(self):
        mask = block_wire(48, 64, 4, 4, 8, 8)
        frames = list(parse_stream([frame_line(0, [det_obj((2, 3, 12, 19), 0.75, mask)])]))
        det = frames[0].detections[0]
        assert det.bbox == BBox(2, 3, 12, 19)
        assert det.confidence == 0.75
        assert det.mask is not None and det.mask.area == 64
        assert det.det_index == 0

    def test_run_sum_mismatch_names_line(self):
        bad_mask = {"h": 48, "w": 64, "runs": [48 * 64 - 1]}
        lines = [frame_line(0), frame_line(1, [det_obj(mask=bad_mask)]), frame_line(2)]
        with pytest.raises(ParseError) as err:
            list(parse_stream(lines))
        assert err.value.line_no == 2
        assert "line 2" in str(err.value)

    def test_invalid_json_names_line(self):
        with pytest.raises(ParseError) as err:
            list(parse_stream([frame_line(0), "{not json"]))
        assert err.value.line_no == 2

    def test_non_monotonic_frame_index(self):
        with pytest.raises(ParseError, match="not increasing"):
            list(parse_stream([frame_line(3), frame_line(3)]))

    def test_dimension_change_mid_stream(self):
        with pytest.raises(ParseError, match="dimensions changed"):
            list(parse_stream([frame_line(0), frame_line(1, w=128)]))

    def test_fps_change_mid_stream(self):
        with pytest.raises(ParseError, match="fps changed"):
            list(parse_stream([frame_line(0), frame_line(1, fps=25.0)]))

    def test_mask_dimension_mismatch(self):
        mask = block_wire(10, 10, 0, 0, 2, 2)
        with pytest.raises(ParseError, match="mask is"):
            list(parse_stream([frame_line(0, [det_obj(mask=mask)])]))

    def test_confidence_out_of_range(self):
        with pytest.raises(ParseError, match="conf"):
            list(parse_stream([frame_line(0, [det_obj(conf=1.5)])]))

    def test_bbox_outside_frame(self):
        with pytest.raises(ParseError, match="outside"):
            list(parse_stream([frame_line(0, [det_obj(bbox=(0, 0, 70, 10))])]))

    def test_inverted_bbox(self):
        with pytest.raises(ParseError, match="inverted"):
            list(parse_stream([frame_line(0, [det_obj(bbox=(10, 0, 5, 10))])]))

    def test_bytes_input(self):
        frames = list(parse_stream([frame_line(0).encode("utf-8")]))
        assert frames[0].frame_index == 0


class TestPreprocess:
    def test_stride_five_keeps_multiples(self):
        frames = parse_stream([frame_line(i) for i in range(15)])
        kept = list(preprocess(frames, PipelineConfig(sampling_stride=5)))
        assert [f.frame_index for f in kept] == [0, 5, 10]

    def test_stride_one_is_identity(self):
        frames = list(parse_stream([frame_line(i, [det_obj(conf=0.9)]) for i in range(4)]))
        kept = list(preprocess(iter(frames), PipelineConfig(sampling_stride=1, confidence_threshold=0.0)))
        assert [f.frame_index for f in kept] == [0, 1, 2, 3]
        assert [len(f.detections) for f in kept] == [1, 1, 1, 1]

    def test_confidence_threshold_is_inclusive(self):
        dets = [det_obj(conf=0.39), det_obj(conf=0.40), det_obj(conf=0.9)]
        frames = parse_stream([frame_line(0, dets)])
        kept = list(preprocess(frames, PipelineConfig(sampling_stride=1, confidence_threshold=0.4)))
        assert [d.confidence for d in kept[0].detections] == [0.40, 0.9]

    def test_frame_count_is_ceil_of_stride(self):
        for n in range(0, 23):
            for stride in (1, 2, 5, 7):
                frames = parse_stream([frame_line(i) for i in range(n)])
                kept = list(preprocess(frames, PipelineConfig(sampling_stride=stride)))
                assert len(kept) == math.ceil(n / stride)


class TestValidateDetection:
    config = PipelineConfig()

    def make_det(self, mask_wire, bbox=(10, 10, 30, 40)):
        frames = list(parse_stream([frame_line(0, [det_obj(bbox, 0.9, mask_wire)])]))
        return frames[0].detections[0]

    def test_reasonable_mask_retained(self):
        # mask covers 60% of the bbox, centroid at the bbox center
        mask = block_wire(48, 64, 13, 14, 24, 15)  # 360 px in a 600 px box
        det = self.make_det(mask)
        assert validate_detection(det, self.config).mask is not None

    def test_empty_mask_discarded(self):
        empty = {"h": 48, "w": 64, "runs": [48 * 64]}
        det = self.make_det(empty)
        assert validate_detection(det, self.config).mask is None

    def test_mask_outside_bbox_discarded(self):
        # block disjoint from the bbox: centroid far outside
        mask = block_wire(48, 64, 0, 40, 10, 20)
        det = self.make_det(mask)
        assert validate_detection(det, self.config).mask is None

    def test_tiny_mask_discarded(self):
        # 4 px in a 600 px box: under the 5% floor
        mask = block_wire(48, 64, 20, 20, 2, 2)
        det = self.make_det(mask)
        assert validate_detection(det, self.config).mask is None

    def test_oversized_mask_discarded(self):
        mask = block_wire(48, 64, 0, 0, 48, 64)
        det = self.make_det(mask, bbox=(10, 10, 30, 40))
        assert validate_detection(det, self.config).mask is None

    def test_centroid_margin_accepts_near_edge(self):
        # centroid just outside the box but within the 10% margin
        mask = block_wire(48, 64, 12, 28, 20, 4)  # centroid x = 29.5, box x2 = 30
        det = self.make_det(mask)
        validated = validate_detection(det, self.config)
        assert validated.mask is not None

    def test_never_mutates_bbox_or_confidence(self):
        mask = block_wire(48, 64, 0, 40, 10, 20)
        det = self.make_det(mask)
        validated = validate_detection(det, self.config)
        assert validated.bbox == det.bbox
        assert validated.confidence == det.confidence
        assert validated.det_index == det.det_index

    def test_no_mask_passthrough(self):
        det = DetectionRecord(bbox=BBox(0, 0, 5, 5), confidence=0.5, mask=None)
        assert validate_detection(det, self.config) is det

    def test_validate_frame_maps_all(self):
        good = block_wire(48, 64, 13, 14, 24, 15)
        bad = {"h": 48, "w": 64, "runs": [48 * 64]}
        dets = [det_obj((10, 10, 30, 40), mask=good), det_obj((10, 10, 30, 40), mask=bad)]
        frames = list(parse_stream([frame_line(0, dets)]))
        validated = validate_frame(frames[0], self.config)
        assert validated.detections[0].mask is not None
        assert validated.detections[1].mask is None


class TestPipelineConfig:
    def test_defaults_match_documentation(self):
        config = PipelineConfig()
        assert config.confidence_threshold == 0.4
        assert config.iou_threshold == 0.3
        assert config.track_cooldown_frames == 5
        assert config.motion_threshold == 0.01
        assert config.step_threshold == 0.03
        assert config.step_cooldown_frames == 5
        assert config.sampling_stride == 5
        assert config.pixels_per_meter is None

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PipelineConfig(sampling_stride=0)
        with pytest.raises(ValueError):
            PipelineConfig(confidence_threshold=-0.1)
        with pytest.raises(ValueError):
            PipelineConfig(pixels_per_meter=0.0)

    def test_dict_round_trip(self):
        config = PipelineConfig(sampling_stride=2, pixels_per_meter=50.0)
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config"):
            PipelineConfig.from_dict({"sampling_strides": 3})
