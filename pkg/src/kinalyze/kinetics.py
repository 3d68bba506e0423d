"""Per-track movement metrics and dancer role classification.

Motion intensity for a pair of consecutive observations is the pixel count
of the symmetric difference of their masks divided by the union pixel
count, which bounds it to [0, 1]: identical masks give 0, disjoint masks
give 1. Everything downstream (steps, statistics, roles) derives from
those per-pair intensities. Per-track computations are pure functions of
an immutable track; only the cross-track aggregation (roles, percentages)
is a final sequential reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .ingestion import PipelineConfig
from .mask_geometry import mask_xor_union
from .tracker import Observation, Track


class Role(Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"
    BACKGROUND = "background"


@dataclass(frozen=True)
class MotionSample:
    track_id: int
    frame_index: int
    timestamp: float
    intensity: float


@dataclass(frozen=True)
class StepEvent:
    track_id: int
    frame_index: int
    timestamp: float
    intensity_at_step: float


@dataclass(frozen=True)
class MotionStats:
    """Mean / max / population std of a series; ``count`` 0 marks an empty series."""

    mean: float
    maximum: float
    std: float
    count: int


@dataclass
class DancerProfile:
    track_id: int
    role: Role
    step_count: int
    step_frequency: Optional[float]
    rhythm_consistency: Optional[float]  # math.inf marks metronomic timing
    avg_motion: float
    max_motion: float
    motion_std: float
    cumulative_motion: float
    movement_percentage: Optional[float]
    spatial_coverage: float
    total_distance: float
    movement_efficiency: Optional[float]
    distance_per_coverage: Optional[float]


def motion_intensity(prev: Observation, curr: Observation) -> Optional[float]:
    """XOR / union pixel ratio of two consecutive masks, or None.

    None when either mask is missing (no bbox substitute) or the union is
    empty.
    """
    if prev.mask is None or curr.mask is None:
        return None
    xor, union = mask_xor_union(prev.mask, curr.mask)
    if union == 0:
        return None
    return xor / union


def motion_series(track: Track, config: PipelineConfig) -> List[MotionSample]:
    """Per-pair intensity samples with the noise floor applied.

    Intensities below ``motion_threshold`` are zeroed, not dropped; pairs
    without masks on both sides produce no sample at all. Each sample is
    stamped with the later observation's frame and timestamp.
    """
    samples: List[MotionSample] = []
    history = track.history
    for prev, curr in zip(history, history[1:]):
        value = motion_intensity(prev, curr)
        if value is None:
            continue
        if value < config.motion_threshold:
            value = 0.0
        samples.append(
            MotionSample(
                track_id=track.track_id,
                frame_index=curr.frame_index,
                timestamp=curr.timestamp,
                intensity=value,
            )
        )
    return samples


def detect_steps(series: Sequence[MotionSample], config: PipelineConfig) -> List[StepEvent]:
    """Threshold-plus-cooldown step extraction.

    A step fires at a sample when its intensity reaches ``step_threshold``
    and at least ``step_cooldown_frames`` analyzed frames have passed since
    the previous step (frame-index distance divided by the sampling
    stride). The first qualifying sample always fires.
    """
    steps: List[StepEvent] = []
    last_step_frame: Optional[int] = None
    stride = config.sampling_stride
    for sample in series:
        if sample.intensity < config.step_threshold:
            continue
        if last_step_frame is not None:
            elapsed = (sample.frame_index - last_step_frame) // stride
            if elapsed < config.step_cooldown_frames:
                continue
        steps.append(
            StepEvent(
                track_id=sample.track_id,
                frame_index=sample.frame_index,
                timestamp=sample.timestamp,
                intensity_at_step=sample.intensity,
            )
        )
        last_step_frame = sample.frame_index
    return steps


def motion_statistics(series: Sequence[MotionSample]) -> MotionStats:
    """Mean, maximum, population standard deviation of the intensities."""
    if not series:
        return MotionStats(mean=0.0, maximum=0.0, std=0.0, count=0)
    values = [s.intensity for s in series]
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return MotionStats(mean=mean, maximum=max(values), std=math.sqrt(variance), count=n)


def cumulative_motion(series: Sequence[MotionSample]) -> float:
    return sum(s.intensity for s in series)


def classify_dancers(
    cumulative: Dict[int, float], secondary_fraction: float = 0.5
) -> Dict[int, Role]:
    """Role per track id from cumulative motion.

    Highest total wins primary (ties to the lower id); remaining tracks
    reaching ``secondary_fraction`` of the primary's total are secondary,
    the rest background. If every total is zero there is no primary and
    everyone is background.
    """
    if not cumulative:
        return {}
    order = sorted(cumulative, key=lambda tid: (-cumulative[tid], tid))
    top = order[0]
    if cumulative[top] == 0.0:
        return {tid: Role.BACKGROUND for tid in cumulative}
    roles = {top: Role.PRIMARY}
    cutoff = secondary_fraction * cumulative[top]
    for tid in order[1:]:
        roles[tid] = Role.SECONDARY if cumulative[tid] >= cutoff else Role.BACKGROUND
    return roles


def movement_percentage(cumulative: Dict[int, float]) -> Dict[int, Optional[float]]:
    """Share of total detected movement per track; all None when total is 0."""
    total = sum(cumulative.values())
    if total <= 0.0:
        return {tid: None for tid in cumulative}
    return {tid: value / total for tid, value in cumulative.items()}


def spatial_coverage(track: Track, pixels_per_meter: Optional[float] = None) -> float:
    """Area of the axis-aligned bounding rectangle of all positions.

    px^2, or m^2 when ``pixels_per_meter`` is set.
    """
    xs = [obs.position[0] for obs in track.history]
    ys = [obs.position[1] for obs in track.history]
    area = (max(xs) - min(xs)) * (max(ys) - min(ys))
    if pixels_per_meter is not None:
        area /= pixels_per_meter**2
    return area


def total_distance(track: Track, pixels_per_meter: Optional[float] = None) -> float:
    """Summed euclidean distance over consecutive positions (gaps included)."""
    dist = 0.0
    history = track.history
    for prev, curr in zip(history, history[1:]):
        dist += math.hypot(curr.position[0] - prev.position[0], curr.position[1] - prev.position[1])
    if pixels_per_meter is not None:
        dist /= pixels_per_meter
    return dist


def movement_efficiency(coverage: float, distance: float) -> Optional[float]:
    """Coverage per unit distance traveled; None when nothing was traveled."""
    if distance == 0.0:
        return None
    return coverage / distance


def rhythm_consistency(steps: Sequence[StepEvent]) -> Optional[float]:
    """Mean inter-step interval over the population std of intervals.

    None with fewer than two intervals; inf when the intervals are exactly
    equal (zero variance).
    """
    if len(steps) < 3:
        return None
    intervals = [b.timestamp - a.timestamp for a, b in zip(steps, steps[1:])]
    n = len(intervals)
    mean = sum(intervals) / n
    variance = sum((v - mean) ** 2 for v in intervals) / n
    if variance == 0.0:
        return math.inf
    return mean / math.sqrt(variance)


def step_frequency(steps: Sequence[StepEvent], track: Track) -> Optional[float]:
    """Steps per second over the track's observed duration; None if duration is 0."""
    duration = track.history[-1].timestamp - track.history[0].timestamp
    if duration <= 0.0:
        return None
    return len(steps) / duration


@dataclass
class ProfileReport:
    profiles: List[DancerProfile]
    no_primary: bool
    ratios: Optional[Dict[str, Optional[float]]]
    primary_track: Optional[int]
    secondary_track: Optional[int]


def _ratio(primary: Optional[float], secondary: Optional[float]) -> Optional[float]:
    if primary is None or secondary is None:
        return None
    if not (math.isfinite(primary) and math.isfinite(secondary)) or secondary == 0:
        return None
    return primary / secondary


def build_profiles(tracks: Sequence[Track], config: PipelineConfig) -> ProfileReport:
    """Assemble every per-dancer metric plus the primary/secondary ratio table.

    Ratios compare the primary dancer against the top-ranked secondary (the
    secondary with the largest cumulative motion); the table is None when
    either role is missing.
    """
    series = {t.track_id: motion_series(t, config) for t in tracks}
    cumulative = {tid: cumulative_motion(s) for tid, s in series.items()}
    roles = classify_dancers(cumulative, config.secondary_fraction)
    percentages = movement_percentage(cumulative)

    profiles: List[DancerProfile] = []
    steps_by_track: Dict[int, List[StepEvent]] = {}
    for track in sorted(tracks, key=lambda t: t.track_id):
        tid = track.track_id
        track_series = series[tid]
        steps = detect_steps(track_series, config)
        steps_by_track[tid] = steps
        stats = motion_statistics(track_series)
        coverage = spatial_coverage(track, config.pixels_per_meter)
        distance = total_distance(track, config.pixels_per_meter)
        profiles.append(
            DancerProfile(
                track_id=tid,
                role=roles[tid],
                step_count=len(steps),
                step_frequency=step_frequency(steps, track),
                rhythm_consistency=rhythm_consistency(steps),
                avg_motion=stats.mean,
                max_motion=stats.maximum,
                motion_std=stats.std,
                cumulative_motion=cumulative[tid],
                movement_percentage=percentages[tid],
                spatial_coverage=coverage,
                total_distance=distance,
                movement_efficiency=movement_efficiency(coverage, distance),
                distance_per_coverage=(distance / coverage) if coverage > 0 else None,
            )
        )

    primary_id = next((p.track_id for p in profiles if p.role is Role.PRIMARY), None)
    secondaries = [p for p in profiles if p.role is Role.SECONDARY]
    secondary_id = None
    if secondaries:
        secondary_id = max(secondaries, key=lambda p: (p.cumulative_motion, -p.track_id)).track_id

    ratios = None
    if primary_id is not None and secondary_id is not None:
        by_id = {p.track_id: p for p in profiles}
        pri, sec = by_id[primary_id], by_id[secondary_id]
        ratios = {
            "step_count": _ratio(float(pri.step_count), float(sec.step_count)),
            "movement_percentage": _ratio(pri.movement_percentage, sec.movement_percentage),
            "avg_motion": _ratio(pri.avg_motion, sec.avg_motion),
            "step_frequency": _ratio(pri.step_frequency, sec.step_frequency),
            "spatial_coverage": _ratio(pri.spatial_coverage, sec.spatial_coverage),
            "rhythm_consistency": _ratio(pri.rhythm_consistency, sec.rhythm_consistency),
            "movement_efficiency": _ratio(pri.movement_efficiency, sec.movement_efficiency),
        }

    return ProfileReport(
        profiles=profiles,
        no_primary=primary_id is None,
        ratios=ratios,
        primary_track=primary_id,
        secondary_track=secondary_id,
    )


def timeline_rows(
    tracks: Sequence[Track], config: PipelineConfig
) -> List[Tuple[int, int, float, float, int]]:
    """Plot-ready (track_id, frame, t, intensity, is_step) rows, track-major."""
    rows: List[Tuple[int, int, float, float, int]] = []
    for track in sorted(tracks, key=lambda t: t.track_id):
        series = motion_series(track, config)
        step_frames = {s.frame_index for s in detect_steps(series, config)}
        for sample in series:
            rows.append(
                (
                    track.track_id,
                    sample.frame_index,
                    sample.timestamp,
                    sample.intensity,
                    1 if sample.frame_index in step_frames else 0,
                )
            )
    return rows
