import json

from conftest import BoxSegmenter, ScriptedDetector
from kinexport import backends
from kinexport.cli import main


def test_missing_video_exits_one(tmp_path, capsys):
    code = main(
        ["export", "--video", str(tmp_path / "nope.mp4"), "--out", str(tmp_path / "o.kin.jsonl")]
    )
    assert code == 1
    assert "cannot open video" in capsys.readouterr().err


def test_unloadable_detector_exits_one(tmp_path, tiny_video, capsys):
    code = main(
        [
            "export",
            "--video",
            str(tiny_video),
            "--out",
            str(tmp_path / "o.kin.jsonl"),
            "--detector",
            str(tmp_path / "missing-weights.pt"),
        ]
    )
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_export_with_injected_backends(tmp_path, tiny_video, monkeypatch, capsys):
    script = {f: [((4.0, 4.0, 20.0, 28.0), 0.9)] for f in range(10)}
    monkeypatch.setattr(backends, "build_detector", lambda name, device: ScriptedDetector(script))
    monkeypatch.setattr(backends, "build_segmenter", lambda name, device: BoxSegmenter())
    out = tmp_path / "clip.kin.jsonl"
    assert main(["export", "--video", str(tiny_video), "--out", str(out)]) == 0
    assert "wrote 10 frames" in capsys.readouterr().out
    lines = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(lines) == 10
