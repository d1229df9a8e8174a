import json
import shutil
from pathlib import Path

import pytest

from multiform.cli import build_parser, main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def fall_basic(tmp_path):
    dest = tmp_path / "fall_basic"
    shutil.copytree(SCENARIOS / "fall_basic", dest)
    return dest


class TestRunCommand:
    def test_run_scenario(self, fall_basic, capsys):
        code = main(["run", "--config", str(fall_basic / "config.yaml"), "--fixed-clock"])
        out = capsys.readouterr().out
        assert code == 0
        assert "stream cam0: 8 frames" in out
        assert "log entries: 2" in out
        assert (fall_basic / "events.jsonl").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("detector:\n  input_size: -5\n")
        code = main(["run", "--config", str(cfg)])
        err = capsys.readouterr().err
        assert code == 2
        assert "detector.input_size" in err

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "absent.yaml")])
        assert code == 2


class TestEvaluateCommand:
    def test_table_output(self, fall_basic, capsys):
        code = main([
            "evaluate",
            "--config", str(fall_basic / "config.yaml"),
            "--truth", str(fall_basic / "truth.txt"),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "fall" in out
        assert "100.0 / 100.0" in out

    def test_json_output(self, fall_basic, tmp_path):
        out_json = tmp_path / "report.json"
        code = main([
            "evaluate",
            "--config", str(fall_basic / "config.yaml"),
            "--truth", str(fall_basic / "truth.txt"),
            "--out-json", str(out_json),
        ])
        assert code == 0
        data = json.loads(out_json.read_text())
        assert data["actions"]["fall"]["recall"] == 1.0

    def test_bad_truth_file(self, fall_basic, capsys):
        truth = fall_basic / "bad.txt"
        truth.write_text("0 fall maybe\n")
        code = main([
            "evaluate",
            "--config", str(fall_basic / "config.yaml"),
            "--truth", str(truth),
        ])
        assert code == 1
        assert "'p' or 'n'" in capsys.readouterr().err


class TestConvertCommand:
    def coco_file(self, tmp_path):
        kps_whole = []
        for name in (
            "nose left_eye right_eye left_ear right_ear left_shoulder right_shoulder "
            "left_elbow right_elbow left_wrist right_wrist left_hip right_hip "
            "left_knee right_knee left_ankle right_ankle"
        ).split():
            kps_whole.extend([10.0, 20.0, 2])
        data = {
            "images": [{"id": 1}],
            "annotations": [
                {"id": 1, "image_id": 1, "bbox": [0, 0, 50, 120], "keypoints": kps_whole}
            ],
        }
        f = tmp_path / "coco.json"
        f.write_text(json.dumps(data))
        return f

    def test_convert_writes_outputs(self, tmp_path, capsys):
        coco = self.coco_file(tmp_path)
        out = tmp_path / "out"
        code = main(["convert", "--coco", str(coco), "--out", str(out)])
        assert code == 0
        assert (out / "labels.txt").read_text() == "1 whole 0 0 50 120 1\n"
        stats = json.loads((out / "stats.json").read_text())
        assert stats == {"whole": 1, "upper": 0, "part": 0, "warnings": 0}

    def test_convert_with_subsets(self, tmp_path, capsys):
        coco = self.coco_file(tmp_path)
        sidecar = tmp_path / "actions.txt"
        sidecar.write_text("1 fall\n")
        out = tmp_path / "out"
        code = main([
            "convert", "--coco", str(coco), "--out", str(out),
            "--action-labels", str(sidecar),
        ])
        assert code == 0
        assert (out / "subsets" / "fall.txt").exists()
        assert "subset fall: 1 records" in capsys.readouterr().out

    def test_bad_coco_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["convert", "--coco", str(bad), "--out", str(tmp_path / "o")]) == 1


class TestBenchCommand:
    def test_bench_output(self, fall_basic, capsys):
        code = main([
            "bench", "--config", str(fall_basic / "config.yaml"), "--frames", "50",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "50 frames" in out
        assert "fps" in out
        assert "detect" in out


class TestPrintConfig:
    def test_defaults(self, capsys):
        assert main(["print-config"]) == 0
        out = capsys.readouterr().out
        assert "input_size: 640" in out
        assert "window: 5" in out

    def test_effective_config(self, fall_basic, capsys):
        code = main(["print-config", "--config", str(fall_basic / "config.yaml")])
        out = capsys.readouterr().out
        assert code == 0
        assert "period: 1" in out
        assert "fixture: detections.txt" in out

    def test_help_embeds_schema(self):
        parser = build_parser()
        sub = next(
            a for a in parser._actions if isinstance(a, type(parser._subparsers._group_actions[0]))
        )
        help_text = sub.choices["print-config"].format_help()
        assert "input_size: 640" in help_text
        assert "Default provenance" in help_text
