import json
from pathlib import Path

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from actiontrace.cli import main
from actiontrace.synthetic import random_script, render_transition_dataset, render_video
from actiontrace.tapmodel import AnchorConfig, EncoderConfig, TapLocationNet, save_checkpoint
from actiontrace.types import dump_trace_json, serialize_trace
from actiontrace.videoio import load_dataset, save_dataset, save_video_frames


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def tap_video_dir(tmp_path_factory):
    rendered = render_video(random_script(21, n_actions=3))
    d = tmp_path_factory.mktemp("video")
    save_video_frames(rendered.video, d)
    gt = serialize_trace(rendered.scenes, fps=rendered.video.fps, source_id=rendered.video.source_id)
    (d / "gt_trace.json").write_text(dump_trace_json(gt))
    return d


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    torch.manual_seed(0)
    model = TapLocationNet(EncoderConfig(), AnchorConfig())
    path = tmp_path_factory.mktemp("model") / "tiny.ckpt"
    save_checkpoint(model, str(path))
    return path


class TestSegmentCommand:
    def test_writes_trace(self, runner, tap_video_dir, tmp_path):
        out = tmp_path / "trace.json"
        result = runner.invoke(main, ["segment", str(tap_video_dir), "--out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["schema_version"] == 1
        assert len(doc["scenes"]) == 3

    def test_missing_input_fails(self, runner, tmp_path):
        result = runner.invoke(
            main, ["segment", str(tmp_path / "nope"), "--out", str(tmp_path / "o.json")]
        )
        assert result.exit_code != 0

    def test_empty_directory_fails(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(
            main, ["segment", str(empty), "--out", str(tmp_path / "o.json")]
        )
        assert result.exit_code != 0
        assert "fps.json" in result.output

    def test_idempotent_byte_identical(self, runner, tap_video_dir, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert runner.invoke(main, ["segment", str(tap_video_dir), "--out", str(out1)]).exit_code == 0
        assert runner.invoke(main, ["segment", str(tap_video_dir), "--out", str(out2)]).exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_config_override_changes_shot_count(self, runner, tmp_path):
        # noise keeps steady similarity near 0.97: above the default
        # threshold, below a strict 0.995 override
        rendered = render_video(random_script(30, n_actions=3, noise_amp=3))
        vdir = tmp_path / "noisy"
        save_video_frames(rendered.video, vdir)
        default_out = tmp_path / "default.json"
        strict_out = tmp_path / "strict.json"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"shots": {"steady_threshold": 0.995}}))
        assert runner.invoke(main, ["segment", str(vdir), "--out", str(default_out)]).exit_code == 0
        assert (
            runner.invoke(
                main,
                ["segment", str(vdir), "--out", str(strict_out), "--config", str(cfg_path)],
            ).exit_code
            == 0
        )
        n_default = len(json.loads(default_out.read_text())["scenes"])
        n_strict = len(json.loads(strict_out.read_text())["scenes"])
        assert n_default != n_strict

    def test_unknown_config_key_fails(self, runner, tap_video_dir, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"shots": {"nope": 1}}))
        result = runner.invoke(
            main,
            ["segment", str(tap_video_dir), "--out", str(tmp_path / "o.json"), "--config", str(cfg_path)],
        )
        assert result.exit_code != 0


class TestPredictCommand:
    def test_tap_scenes_gain_predictions(self, runner, tap_video_dir, tiny_checkpoint, tmp_path):
        trace = tmp_path / "trace.json"
        assert runner.invoke(main, ["segment", str(tap_video_dir), "--out", str(trace)]).exit_code == 0
        out = tmp_path / "located.json"
        result = runner.invoke(
            main,
            [
                "predict",
                "--trace", str(trace),
                "--video", str(tap_video_dir),
                "--model", str(tiny_checkpoint),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        for scene in doc["scenes"]:
            if scene["action"] == "TAP":
                assert 1 <= len(scene["predictions"]) <= 5
                confs = [p["confidence"] for p in scene["predictions"]]
                assert confs == sorted(confs, reverse=True)
            elif scene["action"] == "BACKWARD":
                assert len(scene["predictions"]) == 1
                assert scene["predictions"][0]["x"] == 0.5
                assert scene["predictions"][0]["y"] == 0.97

    def test_no_tap_scenes_passthrough_plus_stamp(self, runner, tiny_checkpoint, tmp_path):
        rendered = render_video(random_script(33, n_actions=2))
        vdir = tmp_path / "video"
        save_video_frames(rendered.video, vdir)
        scroll_only = [s for s in rendered.scenes if s.action.value == "SCROLL"]
        trace = tmp_path / "trace.json"
        trace.write_text(
            dump_trace_json(
                serialize_trace(scroll_only, fps=30.0, source_id=rendered.video.source_id)
            )
        )
        out = tmp_path / "out.json"
        result = runner.invoke(
            main,
            [
                "predict",
                "--trace", str(trace),
                "--video", str(vdir),
                "--model", str(tiny_checkpoint),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        before = json.loads(trace.read_text())
        after = json.loads(out.read_text())
        assert after["scenes"] == before["scenes"]
        assert "predicted_with" in after["metadata"]

    def test_corrupt_checkpoint_fails_with_message(self, runner, tap_video_dir, tmp_path):
        trace = tmp_path / "trace.json"
        assert runner.invoke(main, ["segment", str(tap_video_dir), "--out", str(trace)]).exit_code == 0
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage")
        result = runner.invoke(
            main,
            [
                "predict",
                "--trace", str(trace),
                "--video", str(tap_video_dir),
                "--model", str(bad),
                "--out", str(tmp_path / "o.json"),
            ],
        )
        assert result.exit_code != 0
        assert "checkpoint" in result.output.lower()


class TestTrainEvalCommands:
    def test_train_writes_checkpoint_and_augment_reports(self, runner, tmp_path):
        samples = render_transition_dataset(24, seed=40, width=80, height=120)
        manifest = save_dataset(samples, tmp_path / "data")
        out = tmp_path / "model.ckpt"
        result = runner.invoke(
            main,
            [
                "train",
                "--manifest", str(manifest),
                "--out", str(out),
                "--epochs", "1",
                "--augment",
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "augmentation:" in result.output

    def test_eval_identical_traces(self, runner, tap_video_dir, tmp_path):
        gt = tap_video_dir / "gt_trace.json"
        report = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["eval", "--pred", str(gt), "--gt", str(gt), "--report", str(report)],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(report.read_text())
        assert doc["video_f1"] == 1.0
        assert doc["levenshtein_pct"] == 100.0

    def test_eval_mismatched_sources_fails(self, runner, tmp_path):
        a = serialize_trace([], fps=30.0, source_id="video-a")
        b = serialize_trace([], fps=30.0, source_id="video-b")
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        pa.write_text(dump_trace_json(a))
        pb.write_text(dump_trace_json(b))
        result = runner.invoke(main, ["eval", "--pred", str(pa), "--gt", str(pb)])
        assert result.exit_code != 0


class TestDatasetRoundTrip:
    def test_save_load_preserves_samples(self, tmp_path):
        samples = render_transition_dataset(6, seed=41, width=80, height=120)
        manifest = save_dataset(samples, tmp_path / "ds")
        loaded = load_dataset(manifest)
        assert len(loaded) == 6
        for a, b in zip(samples, loaded):
            assert np.array_equal(a.ui1_image, b.ui1_image)
            assert a.gt_bounds == b.gt_bounds
            assert a.app_id == b.app_id
            assert (a.hierarchy is None) == (b.hierarchy is None)

    def test_deterministic_manifest_bytes(self, tmp_path):
        samples = render_transition_dataset(4, seed=42, width=80, height=120)
        m1 = save_dataset(samples, tmp_path / "d1")
        m2 = save_dataset(samples, tmp_path / "d2")
        assert m1.read_bytes() == m2.read_bytes()


class TestIngestRico:
    def _write_trace(self, root, name, gesture_points, screen_px=(100, 200)):
        trace = root / name
        (trace / "screenshots").mkdir(parents=True)
        (trace / "view_hierarchies").mkdir()
        import cv2

        w, h = screen_px
        for sid in ("1", "2"):
            img = np.full((h, w, 3), 200 if sid == "1" else 90, np.uint8)
            cv2.imwrite(str(trace / "screenshots" / f"{sid}.jpg"), img)
            hierarchy = {
                "activity": {
                    "root": {
                        "bounds": [0, 0, w, h],
                        "clickable": False,
                        "visible-to-user": True,
                        "children": [
                            {
                                "bounds": [10, 20, 60, 70],
                                "clickable": True,
                                "visible-to-user": True,
                                "children": [],
                            }
                        ],
                    }
                }
            }
            (trace / "view_hierarchies" / f"{sid}.json").write_text(json.dumps(hierarchy))
        (trace / "gestures.json").write_text(json.dumps({"1": gesture_points, "2": []}))
        return trace

    def test_tap_resolved_to_element_bounds(self, tmp_path):
        from actiontrace.ricoingest import ingest_rico

        self._write_trace(tmp_path, "app.one-42", [[0.3, 0.2]])
        samples, stats = ingest_rico(tmp_path)
        assert stats.samples == 1
        b = samples[0].gt_bounds
        assert (b.x_lower, b.y_lower) == (0.1, 0.1)
        assert (b.x_upper, b.y_upper) == (0.6, 0.35)
        assert samples[0].app_id == "app.one"

    def test_swipes_excluded(self, tmp_path):
        from actiontrace.ricoingest import ingest_rico

        self._write_trace(tmp_path, "app.two-1", [[0.3, 0.2], [0.3, 0.6]])
        samples, stats = ingest_rico(tmp_path)
        assert samples == []
        assert stats.skipped_swipes == 1

    def test_malformed_trace_skipped_with_count(self, tmp_path):
        from actiontrace.ricoingest import ingest_rico

        self._write_trace(tmp_path, "app.ok-1", [[0.3, 0.2]])
        bad = tmp_path / "app.bad-1"
        bad.mkdir()
        (bad / "gestures.json").write_text("{not json")
        samples, stats = ingest_rico(tmp_path)
        assert stats.samples == 1
        assert stats.skipped_malformed == 1

    def test_empty_directory(self, tmp_path):
        from actiontrace.ricoingest import ingest_rico

        samples, stats = ingest_rico(tmp_path)
        assert samples == [] and stats.traces == 0

    def test_cli_wrapper(self, tmp_path):
        runner = CliRunner()
        self._write_trace(tmp_path / "traces", "app.x-1", [[0.3, 0.2]])
        result = runner.invoke(
            main, ["ingest-rico", str(tmp_path / "traces"), "--out", str(tmp_path / "ds")]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ds" / "manifest.json").exists()


class TestSynthCommand:
    def test_writes_videos_and_dataset(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["synth", "--out", str(tmp_path / "corpus"), "--videos", "1", "--samples", "3", "--actions", "2", "--seed", "5"],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "corpus" / "video-0005" / "fps.json").exists()
        assert (tmp_path / "corpus" / "video-0005" / "gt_trace.json").exists()
        assert (tmp_path / "corpus" / "dataset" / "manifest.json").exists()
