"""Scoring pipeline outputs against ground-truth annotations.

Ground truth uses the interchange envelope plus a ``gt_id`` label per
entity; a bare ``{"tn": int}`` line may supply an externally counted
true-negative total (it cannot be derived from detections). Matching of
predictions to ground truth is greedy highest-IoU with an inclusive
threshold, the standard detection convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .ingestion import ParseError, iter_json_lines, parse_frame_object
from .mask_geometry import BBox, RleMask, bbox_center, bbox_iou, mask_iou
from .tracker import Track, greedy_pairs

DEFAULT_MATCH_IOU = 0.5


@dataclass(frozen=True)
class GtEntity:
    gt_id: str
    bbox: BBox
    mask: Optional[RleMask] = None


@dataclass
class GroundTruthFrame:
    frame_index: int
    entities: List[GtEntity]


@dataclass
class GroundTruth:
    frames: List[GroundTruthFrame]
    true_negatives: Optional[int] = None


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: Optional[int] = None


@dataclass
class FrameMatch:
    """Per-frame TP/FP/FN assignment; tp_pairs hold (prediction, gt entity)."""

    tp_pairs: List[Tuple[object, GtEntity]]
    false_positives: List[object]
    false_negatives: List[GtEntity]


def parse_gt_stream(source: Iterable[Union[str, bytes]]) -> GroundTruth:
    """Parse a ``.gt.jsonl`` file: interchange frames with gt_id labels."""
    frames: List[GroundTruthFrame] = []
    tn: Optional[int] = None
    prev_index: Optional[int] = None
    for line_no, obj in iter_json_lines(source):
        if isinstance(obj, dict) and set(obj) == {"tn"}:
            if not isinstance(obj["tn"], int) or obj["tn"] < 0:
                raise ParseError(line_no, f"tn must be a non-negative integer, got {obj['tn']!r}")
            tn = obj["tn"]
            continue
        frame = parse_frame_object(obj, line_no)
        if prev_index is not None and frame.frame_index <= prev_index:
            raise ParseError(
                line_no, f"frame index {frame.frame_index} not increasing (previous {prev_index})"
            )
        prev_index = frame.frame_index
        entities: List[GtEntity] = []
        seen = set()
        for i, raw in enumerate(obj["dets"]):
            if "gt_id" not in raw:
                raise ParseError(line_no, f"dets[{i}]: missing gt_id")
            gt_id = str(raw["gt_id"])
            if gt_id in seen:
                raise ParseError(line_no, f"dets[{i}]: duplicate gt_id {gt_id!r}")
            seen.add(gt_id)
            det = frame.detections[i]
            entities.append(GtEntity(gt_id=gt_id, bbox=det.bbox, mask=det.mask))
        frames.append(GroundTruthFrame(frame_index=frame.frame_index, entities=entities))
    return GroundTruth(frames=frames, true_negatives=tn)


def match_to_gt(
    predictions: Sequence[object],
    gt_frame: GroundTruthFrame,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> FrameMatch:
    """Greedy highest-IoU bipartite matching of predictions to GT boxes.

    Predictions need ``bbox`` and (optionally) ``mask`` attributes; pairs at
    or above ``match_iou`` count as true positives, leftovers as FP / FN.
    """
    entities = gt_frame.entities
    iou = np.zeros((len(predictions), len(entities)))
    for pi, pred in enumerate(predictions):
        for gi, ent in enumerate(entities):
            iou[pi, gi] = bbox_iou(pred.bbox, ent.bbox)
    pairs = greedy_pairs(iou, match_iou, list(range(len(entities))), inclusive=True)
    matched_preds = {p for p, _ in pairs}
    matched_gts = {g for _, g in pairs}
    return FrameMatch(
        tp_pairs=[(predictions[p], entities[g]) for p, g in pairs],
        false_positives=[predictions[i] for i in range(len(predictions)) if i not in matched_preds],
        false_negatives=[entities[i] for i in range(len(entities)) if i not in matched_gts],
    )


def precision_recall_f1(
    counts: ConfusionCounts,
) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """Standard precision / recall / harmonic-mean F1, None where undefined."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp > 0 else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def segmentation_iou_eval(tp_pairs: Sequence[Tuple[object, GtEntity]]) -> Optional[float]:
    """Mean mask IoU over TP pairs where both sides carry a mask."""
    ious = [
        mask_iou(pred.mask, ent.mask)
        for pred, ent in tp_pairs
        if getattr(pred, "mask", None) is not None and ent.mask is not None
    ]
    if not ious:
        return None
    return sum(ious) / len(ious)


def positional_error(
    tp_pairs: Sequence[Tuple[object, GtEntity]],
) -> Tuple[List[float], Optional[float]]:
    """Per-pair center distance between predicted and GT boxes, plus the mean."""
    errors = []
    for pred, ent in tp_pairs:
        px, py = bbox_center(pred.bbox)
        gx, gy = bbox_center(ent.bbox)
        errors.append(math.hypot(px - gx, py - gy))
    mean = sum(errors) / len(errors) if errors else None
    return errors, mean


def error_histogram(errors: Sequence[float], bin_width: float = 1.0) -> List[int]:
    """Counts per [k, k+1) pixel bin, index 0 first."""
    if not errors:
        return []
    counts = [0] * (int(max(errors) // bin_width) + 1)
    for e in errors:
        counts[int(e // bin_width)] += 1
    return counts


def _assignments_per_frame(
    tracks: Sequence[Track],
    gt_frames: Sequence[GroundTruthFrame],
    match_iou: float,
) -> Dict[int, Dict[str, int]]:
    """gt_id -> track_id per evaluated frame, via greedy bbox matching."""
    obs_by_frame: Dict[int, List] = {}
    for track in tracks:
        for obs in track.history:
            obs_by_frame.setdefault(obs.frame_index, []).append((track.track_id, obs))
    result: Dict[int, Dict[str, int]] = {}
    for gt_frame in gt_frames:
        observations = obs_by_frame.get(gt_frame.frame_index, [])
        preds = [obs for _, obs in observations]
        match = match_to_gt(preds, gt_frame, match_iou)
        by_obs = {id(obs): tid for tid, obs in observations}
        result[gt_frame.frame_index] = {
            ent.gt_id: by_obs[id(pred)] for pred, ent in match.tp_pairs
        }
    return result


def identity_accuracy(
    tracks: Sequence[Track],
    gt_frames: Sequence[GroundTruthFrame],
    match_iou: float = DEFAULT_MATCH_IOU,
) -> Tuple[Optional[float], int]:
    """Fraction of correctly maintained identities across frame transitions.

    For each consecutive evaluated frame pair, every gt_id matched to some
    track in both frames counts one transition; the transition is correct
    when both frames assign it the same track id. Returns (accuracy,
    transition count); accuracy is None when no transitions exist.
    """
    assignments = _assignments_per_frame(tracks, gt_frames, match_iou)
    frames = sorted(assignments)
    correct = total = 0
    for f1, f2 in zip(frames, frames[1:]):
        a1, a2 = assignments[f1], assignments[f2]
        for gt_id in a1.keys() & a2.keys():
            total += 1
            if a1[gt_id] == a2[gt_id]:
                correct += 1
    if total == 0:
        return None, 0
    return correct / total, total


def mean_track_duration(
    tracks: Sequence[Track],
    gt_frames: Sequence[GroundTruthFrame],
    stride: int,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> Tuple[Optional[float], int]:
    """Mean source frames a track holds one gt identity before switch or loss.

    Every maximal run of consecutive evaluated frames over which a track
    keeps the same gt_id is a span; span length is the run's frame count
    times the sampling stride. Returns (mean, span count).
    """
    assignments = _assignments_per_frame(tracks, gt_frames, match_iou)
    frames = sorted(assignments)
    per_track: Dict[int, Dict[int, str]] = {}
    for frame_idx in frames:
        for gt_id, track_id in assignments[frame_idx].items():
            per_track.setdefault(track_id, {})[frame_idx] = gt_id

    spans: List[int] = []
    for track_id, by_frame in sorted(per_track.items()):
        current_gt: Optional[str] = None
        run = 0
        for frame_idx in frames:
            gt_id = by_frame.get(frame_idx)
            if gt_id is not None and gt_id == current_gt:
                run += 1
            else:
                if current_gt is not None:
                    spans.append(run)
                current_gt = gt_id
                run = 1 if gt_id is not None else 0
        if current_gt is not None:
            spans.append(run)
    if not spans:
        return None, 0
    mean = sum(spans) / len(spans) * stride
    return mean, len(spans)


@dataclass
class EvalReport:
    confusion: ConfusionCounts
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    segmentation_mean_iou: Optional[float]
    segmentation_pairs: int
    positional_errors_mean: Optional[float]
    positional_error_histogram: List[int]
    identity_accuracy: Optional[float]
    identity_transitions: int
    mean_track_duration_frames: Optional[float]
    track_spans: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            },
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "segmentation_mean_iou": self.segmentation_mean_iou,
            "segmentation_pairs": self.segmentation_pairs,
            "positional_error": {
                "mean": self.positional_errors_mean,
                "bin_width_px": 1,
                "histogram": self.positional_error_histogram,
            },
            "identity_accuracy": self.identity_accuracy,
            "identity_transitions": self.identity_transitions,
            "mean_track_duration_frames": self.mean_track_duration_frames,
            "track_spans": self.track_spans,
        }


def evaluate_tracks(
    tracks: Sequence[Track],
    ground_truth: GroundTruth,
    analyzed_frames: Sequence[int],
    stride: int,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> EvalReport:
    """Score a tracked run against ground truth over the analyzed frames.

    Only GT frames that were actually analyzed take part. Detection counts
    treat each track observation as one prediction, which is equivalent to
    scoring the filtered detections (every detection becomes exactly one
    observation).
    """
    analyzed = set(analyzed_frames)
    gt_frames = [f for f in ground_truth.frames if f.frame_index in analyzed]
    if not gt_frames:
        raise ValueError("ground-truth frames and analyzed frames are disjoint")

    obs_by_frame: Dict[int, List] = {}
    for track in tracks:
        for obs in track.history:
            obs_by_frame.setdefault(obs.frame_index, []).append(obs)

    tp = fp = fn = 0
    tp_pairs: List[Tuple[object, GtEntity]] = []
    for gt_frame in gt_frames:
        preds = obs_by_frame.get(gt_frame.frame_index, [])
        match = match_to_gt(preds, gt_frame, match_iou)
        tp += len(match.tp_pairs)
        fp += len(match.false_positives)
        fn += len(match.false_negatives)
        tp_pairs.extend(match.tp_pairs)

    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=ground_truth.true_negatives)
    precision, recall, f1 = precision_recall_f1(counts)
    seg_pairs = sum(
        1
        for pred, ent in tp_pairs
        if getattr(pred, "mask", None) is not None and ent.mask is not None
    )
    errors, mean_error = positional_error(tp_pairs)
    accuracy, transitions = identity_accuracy(tracks, gt_frames, match_iou)
    duration, spans = mean_track_duration(tracks, gt_frames, stride, match_iou)
    return EvalReport(
        confusion=counts,
        precision=precision,
        recall=recall,
        f1=f1,
        segmentation_mean_iou=segmentation_iou_eval(tp_pairs),
        segmentation_pairs=seg_pairs,
        positional_errors_mean=mean_error,
        positional_error_histogram=error_histogram(errors),
        identity_accuracy=accuracy,
        identity_transitions=transitions,
        mean_track_duration_frames=duration,
        track_spans=spans,
    )
