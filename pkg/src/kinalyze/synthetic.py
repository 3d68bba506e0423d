"""Scripted multi-dancer scenario generation with exact expectations.

Dancers are solid rectangles gliding along waypoint trajectories; scheduled
"step" frames displace the rectangle horizontally just far enough that the
mask-difference intensity clears the step threshold (for a w x h rectangle
shifted by d < w the intensity is 2dh / (wh + dh), solved for d). Expected
step counts are produced by an independent re-simulation over dense pixel
grids, so generated scenarios double as an oracle for the analysis path.

The oracle is exact for scenarios whose dancers do not cross and whose
disappearance gaps either exceed the track cooldown (a clean split) or
leave the reappearing box overlapping the old one (a clean reactivation).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ingestion import PipelineConfig


class ScenarioError(ValueError):
    """Invalid scenario specification."""


@dataclass
class DancerSpec:
    gt_id: str
    body: Tuple[int, int]  # (width, height) px
    trajectory: List[Tuple[float, float]]  # waypoint centers, visited uniformly
    step_schedule: List[int] = field(default_factory=list)
    absences: List[Tuple[int, int]] = field(default_factory=list)  # inclusive frame ranges

    def present(self, frame: int) -> bool:
        return not any(a <= frame <= b for a, b in self.absences)


@dataclass
class ScenarioSpec:
    frame_count: int
    fps: float
    width: int
    height: int
    dancers: List[DancerSpec]
    seed: int = 0

    @classmethod
    def from_dict(cls, obj: Dict) -> "ScenarioSpec":
        try:
            dancers = [
                DancerSpec(
                    gt_id=str(d["gt_id"]),
                    body=(int(d["body"][0]), int(d["body"][1])),
                    trajectory=[(float(x), float(y)) for x, y in d["trajectory"]],
                    step_schedule=[int(f) for f in d.get("step_schedule", [])],
                    absences=[(int(a), int(b)) for a, b in d.get("absences", [])],
                )
                for d in obj["dancers"]
            ]
            return cls(
                frame_count=int(obj["frames"]),
                fps=float(obj["fps"]),
                width=int(obj["w"]),
                height=int(obj["h"]),
                dancers=dancers,
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ScenarioError(f"invalid scenario spec: {exc}") from exc


@dataclass
class GeneratedScenario:
    interchange: List[Dict]  # one frame object per source frame
    ground_truth: List[Dict]
    expected: Dict


def _interpolate(waypoints: Sequence[Tuple[float, float]], frame: int, frame_count: int) -> Tuple[float, float]:
    if len(waypoints) == 1 or frame_count == 1:
        return waypoints[0]
    u = frame / (frame_count - 1) * (len(waypoints) - 1)
    seg = min(int(u), len(waypoints) - 2)
    t = u - seg
    (x0, y0), (x1, y1) = waypoints[seg], waypoints[seg + 1]
    return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))


def _step_displacement(body_width: int, step_threshold: float) -> int:
    """Smallest integer shift whose intensity 2d/(w+d) reaches the threshold."""
    if step_threshold >= 1.0:
        raise ScenarioError("step threshold >= 1 cannot be reached by a partial shift")
    d = max(1, math.ceil(step_threshold * body_width / (2.0 - step_threshold)))
    if d >= body_width:
        raise ScenarioError(
            f"required displacement {d} px does not fit a {body_width} px wide body"
        )
    return d


def _rect_runs(width: int, height: int, left: int, top: int, bw: int, bh: int) -> List[int]:
    """RLE runs for a solid rectangle, merging zero-length gaps."""
    segments: List[Tuple[bool, int]] = [(False, top * width + left)]
    for row in range(bh):
        segments.append((True, bw))
        if row < bh - 1:
            segments.append((False, width - bw))
    segments.append((False, (height - top - bh) * width + (width - left - bw)))

    runs: List[int] = []
    value = False
    for seg_value, seg_len in segments:
        if seg_len == 0:
            continue
        if runs and seg_value == value:
            runs[-1] += seg_len
            continue
        if not runs and seg_value:
            runs.append(0)  # leading background run may be empty
        runs.append(seg_len)
        value = seg_value
    return runs


@dataclass
class _Placement:
    left: int
    top: int
    bw: int
    bh: int

    def bbox(self) -> List[int]:
        return [self.left, self.top, self.left + self.bw, self.top + self.bh]

    def dense(self, width: int, height: int) -> np.ndarray:
        grid = np.zeros((height, width), dtype=bool)
        grid[self.top : self.top + self.bh, self.left : self.left + self.bw] = True
        return grid


def _place(
    spec: ScenarioSpec, dancer: DancerSpec, frame: int, offset_x: int
) -> _Placement:
    bw, bh = dancer.body
    cx, cy = _interpolate(dancer.trajectory, frame, spec.frame_count)
    left = int(round(cx - bw / 2.0)) + offset_x
    top = int(round(cy - bh / 2.0))
    if left < 0 or top < 0 or left + bw > spec.width or top + bh > spec.height:
        raise ScenarioError(
            f"dancer {dancer.gt_id!r} leaves the {spec.width}x{spec.height} frame "
            f"at frame {frame}"
        )
    return _Placement(left=left, top=top, bw=bw, bh=bh)


def _resimulate_steps(
    placements: Dict[str, Dict[int, _Placement]],
    spec: ScenarioSpec,
    config: PipelineConfig,
) -> Dict[str, int]:
    """Independent step count per dancer from dense grids and the stated rule."""
    stride = config.sampling_stride
    sampled = [f for f in range(spec.frame_count) if f % stride == 0]
    counts: Dict[str, int] = {}
    for dancer in spec.dancers:
        frames = [f for f in sampled if f in placements[dancer.gt_id]]
        count = 0
        last_step: Optional[int] = None
        for f1, f2 in zip(frames, frames[1:]):
            missed = (f2 - f1) // stride - 1
            if missed > config.track_cooldown_frames:
                # the track would have been terminated; a fresh track starts
                last_step = None
                continue
            a = placements[dancer.gt_id][f1].dense(spec.width, spec.height)
            b = placements[dancer.gt_id][f2].dense(spec.width, spec.height)
            union = int(np.logical_or(a, b).sum())
            intensity = int(np.logical_xor(a, b).sum()) / union if union else 0.0
            if intensity < config.motion_threshold:
                intensity = 0.0
            if intensity < config.step_threshold:
                continue
            if last_step is not None and (f2 - last_step) // stride < config.step_cooldown_frames:
                continue
            count += 1
            last_step = f2
        counts[dancer.gt_id] = count
    return counts


def _expected_track_segments(
    placements: Dict[str, Dict[int, _Placement]], spec: ScenarioSpec, config: PipelineConfig
) -> int:
    """Track count a clean run should produce: one per presence segment whose
    gap from the previous segment exceeds the cooldown."""
    stride = config.sampling_stride
    sampled = [f for f in range(spec.frame_count) if f % stride == 0]
    total = 0
    for dancer in spec.dancers:
        frames = [f for f in sampled if f in placements[dancer.gt_id]]
        if not frames:
            continue
        total += 1
        for f1, f2 in zip(frames, frames[1:]):
            if (f2 - f1) // stride - 1 > config.track_cooldown_frames:
                total += 1
    return total


def generate(spec: ScenarioSpec, config: Optional[PipelineConfig] = None) -> GeneratedScenario:
    """Deterministically produce interchange + GT streams and an expectations dict."""
    config = config or PipelineConfig()
    if spec.frame_count < 1:
        raise ScenarioError("frame_count must be >= 1")
    if spec.width < 1 or spec.height < 1:
        raise ScenarioError("frame dimensions must be positive")
    if not spec.dancers:
        raise ScenarioError("at least one dancer required")
    for dancer in spec.dancers:
        if not dancer.trajectory:
            raise ScenarioError(f"dancer {dancer.gt_id!r} has no trajectory")
        if dancer.body[0] < 1 or dancer.body[1] < 1:
            raise ScenarioError(f"dancer {dancer.gt_id!r} has a degenerate body")
        schedule = dancer.step_schedule
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ScenarioError(f"dancer {dancer.gt_id!r}: step_schedule must be increasing")
        if any(b - a < config.step_cooldown_frames for a, b in zip(schedule, schedule[1:])):
            raise ScenarioError(
                f"dancer {dancer.gt_id!r}: step_schedule closer than the step cooldown"
            )
        if any(f < 0 or f >= spec.frame_count for f in schedule):
            raise ScenarioError(f"dancer {dancer.gt_id!r}: step_schedule outside the clip")

    rng = random.Random(spec.seed)
    offsets: Dict[str, Dict[int, int]] = {}
    for dancer in spec.dancers:
        shift = _step_displacement(dancer.body[0], config.step_threshold) if dancer.step_schedule else 0
        per_frame: Dict[int, int] = {}
        for frame in dancer.step_schedule:
            direction = rng.choice((-1, 1))
            per_frame[frame] = direction * shift
        offsets[dancer.gt_id] = per_frame

    placements: Dict[str, Dict[int, _Placement]] = {d.gt_id: {} for d in spec.dancers}
    for dancer in spec.dancers:
        for frame in range(spec.frame_count):
            if not dancer.present(frame):
                continue
            offset = offsets[dancer.gt_id].get(frame, 0)
            try:
                placement = _place(spec, dancer, frame, offset)
            except ScenarioError:
                if offset == 0:
                    raise
                placement = _place(spec, dancer, frame, -offset)  # jitter the other way
            placements[dancer.gt_id][frame] = placement

    interchange: List[Dict] = []
    ground_truth: List[Dict] = []
    for frame in range(spec.frame_count):
        dets = []
        gt_dets = []
        for dancer in spec.dancers:
            placement = placements[dancer.gt_id].get(frame)
            if placement is None:
                continue
            mask = {
                "h": spec.height,
                "w": spec.width,
                "runs": _rect_runs(
                    spec.width, spec.height, placement.left, placement.top, placement.bw, placement.bh
                ),
            }
            det = {"bbox": placement.bbox(), "conf": 1.0, "mask": mask}
            dets.append(det)
            gt_dets.append({**det, "gt_id": dancer.gt_id})
        envelope = {"frame": frame, "fps": spec.fps, "w": spec.width, "h": spec.height}
        interchange.append({**envelope, "dets": dets})
        ground_truth.append({**envelope, "dets": gt_dets})

    expected = {
        "dancers": len(spec.dancers),
        "step_counts": _resimulate_steps(placements, spec, config),
        "expected_tracks": _expected_track_segments(placements, spec, config),
        "config": config.to_dict(),
        "seed": spec.seed,
    }
    return GeneratedScenario(interchange=interchange, ground_truth=ground_truth, expected=expected)
