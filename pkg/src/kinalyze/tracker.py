"""Identity tracking across sampled frames via greedy IoU association.

The tracker is a sequential state machine: frames enter one at a time in
index order, and every completed track keeps its full observation history.
Unmatched tracks linger in an inactive state for a cooldown of analyzed
frames before termination; a detection can reactivate an inactive track at
half the base IoU threshold (dancers drift while occluded). Track ids are
never reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .ingestion import DetectionRecord, FrameRecord, PipelineConfig
from .mask_geometry import BBox, RleMask, bbox_center, bbox_iou, mask_stats


class TrackState(Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class Observation:
    """One matched detection on a track.

    ``position`` is the mask centroid when a (validated) mask is present,
    otherwise the bbox center. ``det_index`` points at the detection's slot
    in the source frame's ``dets`` array.
    """

    frame_index: int
    timestamp: float
    bbox: BBox
    mask: Optional[RleMask]
    position: Tuple[float, float]
    det_index: int = 0

    @classmethod
    def from_detection(cls, frame: FrameRecord, det: DetectionRecord) -> "Observation":
        if det.mask is not None:
            stats = mask_stats(det.mask)
            position = stats.centroid if stats.centroid is not None else bbox_center(det.bbox)
        else:
            position = bbox_center(det.bbox)
        return cls(
            frame_index=frame.frame_index,
            timestamp=frame.timestamp,
            bbox=det.bbox,
            mask=det.mask,
            position=position,
            det_index=det.det_index,
        )


@dataclass
class Track:
    track_id: int
    state: TrackState = TrackState.ACTIVE
    history: List[Observation] = field(default_factory=list)
    frames_inactive: int = 0

    @property
    def last_bbox(self) -> BBox:
        return self.history[-1].bbox

    @property
    def is_live(self) -> bool:
        return self.state is not TrackState.TERMINATED


@dataclass
class Assignment:
    """Result of one greedy matching pass; indices refer to the input lists."""

    pairs: List[Tuple[int, int]]
    unmatched_detections: List[int]
    unmatched_tracks: List[int]


def greedy_pairs(
    iou: np.ndarray,
    threshold: float,
    column_order: Sequence[int],
    inclusive: bool = False,
) -> List[Tuple[int, int]]:
    """Greedy row/column pairing on an IoU matrix.

    Repeatedly takes the globally highest remaining value above the
    threshold (strictly above unless ``inclusive``). Ties resolve to the
    lower ``column_order`` key, then the lower row index. Each row and
    column is used at most once.
    """
    pairs: List[Tuple[int, int]] = []
    if iou.size == 0:
        return pairs
    n_rows, n_cols = iou.shape
    free_rows = set(range(n_rows))
    free_cols = set(range(n_cols))
    while free_rows and free_cols:
        best_key = None
        best_cell = None
        for r in free_rows:
            for c in free_cols:
                v = iou[r, c]
                if v < threshold or (not inclusive and v == threshold):
                    continue
                key = (-v, column_order[c], r)
                if best_key is None or key < best_key:
                    best_key = key
                    best_cell = (r, c)
        if best_cell is None:
            break
        pairs.append(best_cell)
        free_rows.discard(best_cell[0])
        free_cols.discard(best_cell[1])
    return pairs


def greedy_match(
    detections: Sequence[DetectionRecord],
    tracks: Sequence[Track],
    iou_threshold: float,
) -> Assignment:
    """Associate detections with live tracks by bbox IoU against last_bbox."""
    iou = np.zeros((len(detections), len(tracks)))
    for di, det in enumerate(detections):
        for ti, track in enumerate(tracks):
            iou[di, ti] = bbox_iou(det.bbox, track.last_bbox)
    pairs = greedy_pairs(iou, iou_threshold, [t.track_id for t in tracks])
    matched_dets = {p[0] for p in pairs}
    matched_tracks = {p[1] for p in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_detections=[i for i in range(len(detections)) if i not in matched_dets],
        unmatched_tracks=[i for i in range(len(tracks)) if i not in matched_tracks],
    )


class Tracker:
    """Single-writer tracker; feed frames through :meth:`step_frame` in order."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.tracks: List[Track] = []
        self._next_id = 1
        self._last_frame_index: Optional[int] = None

    def _spawn(self, frame: FrameRecord, det: DetectionRecord) -> None:
        track = Track(track_id=self._next_id)
        self._next_id += 1
        track.history.append(Observation.from_detection(frame, det))
        self.tracks.append(track)

    def step_frame(self, frame: FrameRecord) -> None:
        """Advance the tracker by one validated, sampled frame.

        Matching runs in two passes: active tracks first at the base IoU
        threshold, then inactive tracks at half the threshold (reactivation).
        Leftover detections spawn new tracks; leftover tracks age toward
        termination.
        """
        if self._last_frame_index is not None and frame.frame_index <= self._last_frame_index:
            raise ValueError(
                f"out-of-order frame {frame.frame_index} after {self._last_frame_index}"
            )
        self._last_frame_index = frame.frame_index

        detections = list(frame.detections)
        active = [t for t in self.tracks if t.state is TrackState.ACTIVE]
        inactive = [t for t in self.tracks if t.state is TrackState.INACTIVE]

        first = greedy_match(detections, active, self.config.iou_threshold)
        leftover_idx = first.unmatched_detections
        leftover = [detections[i] for i in leftover_idx]
        second = greedy_match(leftover, inactive, self.config.iou_threshold / 2.0)

        matched_tracks = []
        for di, ti in first.pairs:
            matched_tracks.append((active[ti], detections[di]))
        for di, ti in second.pairs:
            matched_tracks.append((inactive[ti], leftover[di]))

        for track, det in matched_tracks:
            track.history.append(Observation.from_detection(frame, det))
            track.state = TrackState.ACTIVE
            track.frames_inactive = 0

        matched_track_ids = {t.track_id for t, _ in matched_tracks}
        for track in active:
            if track.track_id not in matched_track_ids:
                track.state = TrackState.INACTIVE
                track.frames_inactive = 1
        for track in inactive:
            if track.track_id not in matched_track_ids:
                track.frames_inactive += 1
        for track in self.tracks:
            if (
                track.state is TrackState.INACTIVE
                and track.frames_inactive > self.config.track_cooldown_frames
            ):
                track.state = TrackState.TERMINATED

        matched_leftover = {p[0] for p in second.pairs}
        for pos, det_idx in enumerate(leftover_idx):
            if pos not in matched_leftover:
                self._spawn(frame, detections[det_idx])


def run_tracking(frames: Iterable[FrameRecord], config: PipelineConfig) -> List[Track]:
    """Run the tracker over a validated, preprocessed stream.

    Returns every track ever created (terminated ones included), in id
    order. Pure function of (stream, config): identical inputs give
    identical ids and histories.
    """
    tracker = Tracker(config)
    for frame in frames:
        tracker.step_frame(frame)
    return tracker.tracks
