"""Command-line entry point: analyze / evaluate / synth / report.

Wiring only; the work lives in the other modules. All outputs are written
atomically (temp file + rename) with LF line endings, and the data outputs
are byte-deterministic for a fixed (input, config, version) triple. The
run manifest additionally records wall-clock duration, so it is the one
output that varies between runs.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import __version__
from .evaluation import DEFAULT_MATCH_IOU, EvalReport, evaluate_tracks, parse_gt_stream
from .ingestion import (
    FrameRecord,
    ParseError,
    PipelineConfig,
    parse_stream,
    preprocess,
    validate_frame,
)
from .kinetics import ProfileReport, build_profiles, timeline_rows
from .mask_geometry import BBox
from .synthetic import ScenarioError, ScenarioSpec, generate
from .tracker import Observation, Track, Tracker, TrackState


class InputError(Exception):
    """User-facing input problem (bad path, bad config, disjoint frames)."""


# ---------------------------------------------------------------------------
# pipeline driver


@dataclass
class PipelineResult:
    tracks: List[Track]
    analyzed_frames: List[int]
    config: PipelineConfig


def run_pipeline(frames: Iterable[FrameRecord], config: PipelineConfig) -> PipelineResult:
    """ingestion -> sampling/filtering -> mask validation -> tracking."""
    tracker = Tracker(config)
    analyzed: List[int] = []
    for frame in preprocess(frames, config):
        frame = validate_frame(frame, config)
        tracker.step_frame(frame)
        analyzed.append(frame.frame_index)
    return PipelineResult(tracks=tracker.tracks, analyzed_frames=analyzed, config=config)


# ---------------------------------------------------------------------------
# serialization helpers


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _dump_json(obj: object) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _finite_or_marker(value: Optional[float]) -> object:
    if value is None:
        return None
    if math.isinf(value):
        return "inf"
    return value


def profiles_payload(report: ProfileReport, config: PipelineConfig) -> Dict:
    meters = config.pixels_per_meter is not None
    dancers = []
    for p in report.profiles:
        dancers.append(
            {
                "track_id": p.track_id,
                "role": p.role.value,
                "step_count": p.step_count,
                "step_frequency": p.step_frequency,
                "rhythm_consistency": _finite_or_marker(p.rhythm_consistency),
                "avg_motion": p.avg_motion,
                "max_motion": p.max_motion,
                "motion_std": p.motion_std,
                "cumulative_motion": p.cumulative_motion,
                "movement_percentage": p.movement_percentage,
                "spatial_coverage": p.spatial_coverage,
                "total_distance": p.total_distance,
                "movement_efficiency": p.movement_efficiency,
                "distance_per_coverage": p.distance_per_coverage,
            }
        )
    return {
        "tool": {"name": "kinalyze", "version": __version__},
        "config": config.to_dict(),
        "units": {
            "spatial_coverage": "m^2" if meters else "px^2",
            "total_distance": "m" if meters else "px",
            "movement_efficiency": "m" if meters else "px",
        },
        "dancer_count": len(dancers),
        "no_primary": report.no_primary,
        "primary_track": report.primary_track,
        "secondary_track": report.secondary_track,
        "dancers": dancers,
        "ratios": report.ratios,
    }


def timeline_csv(rows: Sequence[Tuple[int, int, float, float, int]]) -> str:
    lines = ["track_id,frame,t,intensity,is_step"]
    for track_id, frame, t, intensity, is_step in rows:
        lines.append(f"{track_id},{frame},{t!r},{intensity!r},{is_step}")
    return "\n".join(lines) + "\n"


def tracks_payload(tracks: Sequence[Track]) -> List[Dict]:
    out = []
    for track in sorted(tracks, key=lambda t: t.track_id):
        observations = []
        for obs in track.history:
            observations.append(
                {
                    "frame": obs.frame_index,
                    "t": obs.timestamp,
                    "bbox": obs.bbox.as_list(),
                    "position": [obs.position[0], obs.position[1]],
                    "mask_ref": (
                        {"frame": obs.frame_index, "det": obs.det_index}
                        if obs.mask is not None
                        else None
                    ),
                }
            )
        out.append({"id": track.track_id, "state": track.state.value, "observations": observations})
    return out


def load_tracks_payload(payload: object) -> List[Track]:
    """Rebuild Track objects from a tracks.json dump (masks are not inlined)."""
    if not isinstance(payload, list):
        raise InputError("tracks file must be a JSON array")
    tracks = []
    for entry in payload:
        try:
            track = Track(track_id=int(entry["id"]), state=TrackState(entry["state"]))
            for obs in entry["observations"]:
                x1, y1, x2, y2 = obs["bbox"]
                ref = obs.get("mask_ref")
                track.history.append(
                    Observation(
                        frame_index=int(obs["frame"]),
                        timestamp=float(obs["t"]),
                        bbox=BBox(float(x1), float(y1), float(x2), float(y2)),
                        mask=None,
                        position=(float(obs["position"][0]), float(obs["position"][1])),
                        det_index=int(ref["det"]) if ref else 0,
                    )
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed tracks file: {exc}") from exc
        tracks.append(track)
    return tracks


def eval_payload(report: EvalReport, config: PipelineConfig, match_iou: float) -> Dict:
    return {
        "tool": {"name": "kinalyze", "version": __version__},
        "config": config.to_dict(),
        "match_iou": match_iou,
        **report.to_dict(),
    }


def write_manifest(
    out_dir: Path,
    command: str,
    inputs: Sequence[str],
    outputs: Sequence[str],
    config: Optional[PipelineConfig],
    started: float,
) -> None:
    manifest = {
        "tool": "kinalyze",
        "version": __version__,
        "command": command,
        "inputs": list(inputs),
        "outputs": list(outputs),
        "config": config.to_dict() if config else None,
        "duration_seconds": time.monotonic() - started,
    }
    _atomic_write(out_dir / "manifest.json", _dump_json(manifest))


# ---------------------------------------------------------------------------
# config assembly

_FLAG_TO_FIELD = {
    "confidence_threshold": "confidence_threshold",
    "iou_threshold": "iou_threshold",
    "track_cooldown": "track_cooldown_frames",
    "motion_threshold": "motion_threshold",
    "step_threshold": "step_threshold",
    "step_cooldown": "step_cooldown_frames",
    "stride": "sampling_stride",
    "pixels_per_meter": "pixels_per_meter",
}


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """CLI flags > config file > built-in defaults."""
    values: Dict[str, object] = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a flat JSON object")
        values.update(loaded)
    for flag, field_name in _FLAG_TO_FIELD.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field_name] = flag_value
    try:
        return PipelineConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON file with PipelineConfig fields")
    parser.add_argument("--confidence-threshold", dest="confidence_threshold", type=float)
    parser.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    parser.add_argument("--track-cooldown", dest="track_cooldown", type=int)
    parser.add_argument("--motion-threshold", dest="motion_threshold", type=float)
    parser.add_argument("--step-threshold", dest="step_threshold", type=float)
    parser.add_argument("--step-cooldown", dest="step_cooldown", type=int)
    parser.add_argument("--stride", dest="stride", type=int)
    parser.add_argument("--pixels-per-meter", dest="pixels_per_meter", type=float)


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = build_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            result = run_pipeline(parse_stream(fh), config)
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}") from exc

    report = build_profiles(result.tracks, config)
    rows = timeline_rows(result.tracks, config)

    _atomic_write(out_dir / "profiles.json", _dump_json(profiles_payload(report, config)))
    _atomic_write(out_dir / "motion_timeline.csv", timeline_csv(rows))
    _atomic_write(out_dir / "tracks.json", _dump_json(tracks_payload(result.tracks)))
    write_manifest(
        out_dir,
        "analyze",
        [str(args.input)],
        ["profiles.json", "motion_timeline.csv", "tracks.json"],
        config,
        started,
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = build_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pred_path = Path(args.predictions)
    try:
        with open(pred_path, "r", encoding="utf-8") as fh:
            head = fh.read(1)
    except OSError as exc:
        raise InputError(f"cannot read predictions: {exc}") from exc

    if head == "[":
        # a tracks.json dump: observations only, masks unavailable
        with open(pred_path, "r", encoding="utf-8") as fh:
            tracks = load_tracks_payload(json.load(fh))
        analyzed = sorted({obs.frame_index for t in tracks for obs in t.history})
    else:
        with open(pred_path, "r", encoding="utf-8") as fh:
            result = run_pipeline(parse_stream(fh), config)
        tracks = result.tracks
        analyzed = result.analyzed_frames

    try:
        with open(args.ground_truth, "r", encoding="utf-8") as fh:
            ground_truth = parse_gt_stream(fh)
    except OSError as exc:
        raise InputError(f"cannot read ground truth: {exc}") from exc

    try:
        report = evaluate_tracks(tracks, ground_truth, analyzed, config.sampling_stride, args.match_iou)
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    _atomic_write(out_dir / "eval.json", _dump_json(eval_payload(report, config, args.match_iou)))
    write_manifest(
        out_dir,
        "evaluate",
        [str(args.predictions), str(args.ground_truth)],
        ["eval.json"],
        config,
        started,
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = build_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec_obj = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read scenario spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"scenario spec is not valid JSON: {exc}") from exc

    scenario = generate(ScenarioSpec.from_dict(spec_obj), config)
    base = Path(args.spec).stem

    def jsonl(objs: List[Dict]) -> str:
        return "".join(json.dumps(o, separators=(",", ":")) + "\n" for o in objs)

    kin_path = out_dir / f"{base}.kin.jsonl"
    gt_path = out_dir / f"{base}.gt.jsonl"
    _atomic_write(kin_path, jsonl(scenario.interchange))
    _atomic_write(gt_path, jsonl(scenario.ground_truth))
    _atomic_write(out_dir / "expected.json", _dump_json(scenario.expected))
    write_manifest(
        out_dir,
        "synth",
        [str(args.spec)],
        [kin_path.name, gt_path.name, "expected.json"],
        config,
        started,
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    try:
        with open(args.profiles, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read profiles: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"profiles file is not valid JSON: {exc}") from exc

    dancers = payload.get("dancers", [])
    print(f"kinalyze report: {len(dancers)} dancer(s)")
    if payload.get("no_primary"):
        print("note: no primary dancer (no detected motion)")
    unit_area = payload.get("units", {}).get("spatial_coverage", "px^2")
    header = f"{'track':>5}  {'role':<10} {'steps':>5} {'steps/s':>8} {'avg motion':>10} {'coverage':>12} {'rhythm':>8}"
    print(header)
    print("-" * len(header))
    for d in dancers:
        freq = d.get("step_frequency")
        rhythm = d.get("rhythm_consistency")
        print(
            f"{d['track_id']:>5}  {d['role']:<10} {d['step_count']:>5} "
            f"{freq if freq is not None else '-':>8.3} "
            f"{d['avg_motion']:>10.4f} "
            f"{d['spatial_coverage']:>10.1f} {unit_area} "
            f"{rhythm if rhythm is not None else '-':>8.3}"
        )
    ratios = payload.get("ratios")
    if ratios:
        print("primary / top secondary ratios:")
        for key, value in ratios.items():
            shown = f"{value:.4f}" if isinstance(value, (int, float)) else "-"
            print(f"  {key}: {shown}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinalyze", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kinalyze {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run the full analysis pipeline")
    p_analyze.add_argument("input", help="interchange .kin.jsonl path")
    p_analyze.add_argument("-o", "--out-dir", default=".", help="output directory")
    _add_config_flags(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_eval = sub.add_parser("evaluate", help="score predictions against ground truth")
    p_eval.add_argument("predictions", help="interchange .kin.jsonl or tracks.json path")
    p_eval.add_argument("ground_truth", help=".gt.jsonl path")
    p_eval.add_argument("-o", "--out-dir", default=".", help="output directory")
    p_eval.add_argument("--match-iou", type=float, default=DEFAULT_MATCH_IOU)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_synth = sub.add_parser("synth", help="generate a scripted scenario")
    p_synth.add_argument("spec", help="scenario spec JSON path")
    p_synth.add_argument("-o", "--out-dir", default=".", help="output directory")
    _add_config_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", help="print a summary of a profiles.json")
    p_report.add_argument("profiles", help="profiles.json path")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParseError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
