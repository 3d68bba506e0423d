import json

import numpy as np
import pytest

from kinalyze.cli import run_pipeline
from kinalyze.ingestion import PipelineConfig, parse_stream
from kinalyze.kinetics import detect_steps, motion_series
from kinalyze.mask_geometry import RleMask, rle_encode
from kinalyze.synthetic import (
    DancerSpec,
    GeneratedScenario,
    ScenarioError,
    ScenarioSpec,
    _rect_runs,
    _step_displacement,
    generate,
)
from kinalyze.tracker import TrackState

CONFIG = PipelineConfig(sampling_stride=5)


def lines(objs):
    return [json.dumps(o) for o in objs]


def stationary(gt_id, x, y, body=(12, 20), schedule=(), absences=()):
    return DancerSpec(
        gt_id=gt_id,
        body=body,
        trajectory=[(x, y)],
        step_schedule=list(schedule),
        absences=list(absences),
    )


def spec_with(dancers, frames=60, w=160, h=120, seed=0):
    return ScenarioSpec(frame_count=frames, fps=30.0, width=w, height=h, dancers=dancers, seed=seed)


class TestRectRuns:
    def test_matches_dense_encoding(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            w = int(rng.integers(1, 30))
            h = int(rng.integers(1, 30))
            bw = int(rng.integers(1, w + 1))
            bh = int(rng.integers(1, h + 1))
            left = int(rng.integers(0, w - bw + 1))
            top = int(rng.integers(0, h - bh + 1))
            grid = np.zeros((h, w), dtype=bool)
            grid[top : top + bh, left : left + bw] = True
            runs = _rect_runs(w, h, left, top, bw, bh)
            mask = RleMask(height=h, width=w, runs=tuple(runs))
            mask.check()
            assert mask == rle_encode(grid)

    def test_full_frame_body(self):
        runs = _rect_runs(8, 6, 0, 0, 8, 6)
        assert tuple(runs) == (0, 48)


class TestStepDisplacement:
    def test_closed_form_matches_dense_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            w = int(rng.integers(2, 40))
            h = int(rng.integers(1, 40))
            d = int(rng.integers(1, w))
            a = np.zeros((h, w + d), dtype=bool)
            b = np.zeros((h, w + d), dtype=bool)
            a[:, :w] = True
            b[:, d : d + w] = True
            xor = int(np.logical_xor(a, b).sum())
            union = int(np.logical_or(a, b).sum())
            assert xor / union == pytest.approx(2 * d * h / (w * h + d * h), abs=1e-12)

    def test_ten_by_ten_shift_five(self):
        assert 2 * 5 * 10 / (10 * 10 + 5 * 10) == pytest.approx(2 / 3)

    def test_displacement_reaches_threshold(self):
        for w in (5, 12, 40, 200):
            for thr in (0.01, 0.03, 0.2, 0.6):
                d = _step_displacement(w, thr)
                assert 2 * d / (w + d) >= thr
                assert d < w

    def test_infeasible_displacement(self):
        with pytest.raises(ScenarioError, match="does not fit"):
            _step_displacement(2, 0.8)


class TestGenerate:
    def test_stationary_dancer_no_steps(self):
        scenario = generate(spec_with([stationary("a", 40.0, 40.0)]), CONFIG)
        assert scenario.expected["step_counts"] == {"a": 0}
        assert scenario.expected["expected_tracks"] == 1
        tracks = run_pipeline(parse_stream(lines(scenario.interchange)), CONFIG).tracks
        assert len(tracks) == 1
        assert len(tracks[0].history) == 12  # 60 frames at stride 5
        assert tracks[0].state is TrackState.ACTIVE

    def test_four_jitters_four_steps(self):
        dancer = stationary("a", 40.0, 40.0, schedule=(10, 40, 70, 100))
        scenario = generate(spec_with([dancer], frames=120), CONFIG)
        assert scenario.expected["step_counts"] == {"a": 4}
        result = run_pipeline(parse_stream(lines(scenario.interchange)), CONFIG)
        assert len(result.tracks) == 1
        series = motion_series(result.tracks[0], CONFIG)
        assert len(detect_steps(series, CONFIG)) == 4

    def test_pipeline_matches_resimulation_on_random_scenarios(self):
        rng = np.random.default_rng(123)
        for trial in range(20):
            dancers = []
            for i in range(int(rng.integers(1, 4))):
                schedule = sorted(
                    rng.choice(np.arange(5, 115, 5), size=int(rng.integers(0, 4)), replace=False)
                )
                schedule = [int(f) for f in schedule]
                # enforce the spacing invariant
                spaced = []
                for f in schedule:
                    if not spaced or f - spaced[-1] >= CONFIG.step_cooldown_frames:
                        spaced.append(f)
                dancers.append(stationary(f"d{i}", 20.0 + 45.0 * i, 40.0, schedule=spaced))
            scenario = generate(spec_with(dancers, frames=120, w=200), CONFIG)
            result = run_pipeline(parse_stream(lines(scenario.interchange)), CONFIG)
            assert len(result.tracks) == len(dancers)
            counts = sorted(
                len(detect_steps(motion_series(t, CONFIG), CONFIG)) for t in result.tracks
            )
            assert counts == sorted(scenario.expected["step_counts"].values())

    def test_absence_beyond_cooldown_splits_track(self):
        dancer = stationary("a", 40.0, 40.0, absences=[(15, 44)])  # six sampled frames
        scenario = generate(spec_with([dancer], frames=90), CONFIG)
        assert scenario.expected["expected_tracks"] == 2
        tracks = run_pipeline(parse_stream(lines(scenario.interchange)), CONFIG).tracks
        assert len(tracks) == 2
        assert tracks[0].state is TrackState.TERMINATED

    def test_absence_within_cooldown_keeps_track(self):
        dancer = stationary("a", 40.0, 40.0, absences=[(15, 29)])  # three sampled frames
        scenario = generate(spec_with([dancer], frames=90), CONFIG)
        assert scenario.expected["expected_tracks"] == 1
        tracks = run_pipeline(parse_stream(lines(scenario.interchange)), CONFIG).tracks
        assert len(tracks) == 1

    def test_all_lines_pass_the_parser(self):
        dancer = stationary("a", 40.0, 40.0, schedule=(10, 40))
        moving = DancerSpec(
            gt_id="b", body=(10, 16), trajectory=[(100.0, 30.0), (100.0, 80.0)]
        )
        scenario = generate(spec_with([dancer, moving], frames=80, w=200), CONFIG)
        frames = list(parse_stream(lines(scenario.interchange)))
        assert len(frames) == 80
        gt_lines = lines(scenario.ground_truth)
        from kinalyze.evaluation import parse_gt_stream

        ground_truth = parse_gt_stream(gt_lines)
        assert len(ground_truth.frames) == 80

    def test_determinism_under_fixed_seed(self):
        dancer = stationary("a", 40.0, 40.0, schedule=(10, 40, 70))
        first = generate(spec_with([dancer], frames=90, seed=11), CONFIG)
        second = generate(spec_with([dancer], frames=90, seed=11), CONFIG)
        assert lines(first.interchange) == lines(second.interchange)
        assert lines(first.ground_truth) == lines(second.ground_truth)
        assert first.expected == second.expected

    def test_out_of_bounds_trajectory_rejected(self):
        dancer = DancerSpec(gt_id="a", body=(12, 20), trajectory=[(5.0, 5.0)])
        with pytest.raises(ScenarioError, match="leaves"):
            generate(spec_with([dancer]), CONFIG)

    def test_schedule_validation(self):
        with pytest.raises(ScenarioError, match="increasing"):
            generate(spec_with([stationary("a", 40.0, 40.0, schedule=(20, 10))]), CONFIG)
        with pytest.raises(ScenarioError, match="cooldown"):
            generate(spec_with([stationary("a", 40.0, 40.0, schedule=(10, 12))]), CONFIG)
        with pytest.raises(ScenarioError, match="outside"):
            generate(spec_with([stationary("a", 40.0, 40.0, schedule=(500,))]), CONFIG)

    def test_spec_from_dict(self):
        obj = {
            "frames": 40,
            "fps": 30.0,
            "w": 160,
            "h": 120,
            "seed": 3,
            "dancers": [
                {
                    "gt_id": "a",
                    "body": [12, 20],
                    "trajectory": [[40.0, 40.0], [100.0, 40.0]],
                    "step_schedule": [10, 20],
                    "absences": [[30, 35]],
                }
            ],
        }
        spec = ScenarioSpec.from_dict(obj)
        assert spec.frame_count == 40
        assert spec.dancers[0].absences == [(30, 35)]
        with pytest.raises(ScenarioError):
            ScenarioSpec.from_dict({"frames": 10})
