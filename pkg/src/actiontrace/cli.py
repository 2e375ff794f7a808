"""Command-line entry points for the full pipeline.

    actiontrace segment  <video> --out trace.json [--config cfg.json]
    actiontrace predict  --trace trace.json --video <video> --model ckpt --out out.json
    actiontrace train    --manifest manifest.json --out ckpt [--augment]
    actiontrace eval     --pred out.json --gt gt.json [--report report.json]
    actiontrace ingest-rico <trace-dir> --out dataset-dir
    actiontrace synth    --out dir [--videos N] [--samples N] [--seed S]
    actiontrace serve    --trace out.json --video <video> [--port P]

Commands are deterministic given identical inputs and seeds; artifacts
are written as canonical sorted JSON so reruns are byte-identical.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .config import load_pipeline_config
from .metrics import evaluate, levenshtein_score, shot_intervals, video_f1
from .segmenter import segment_video
from .types import (
    ActionScene,
    ActionType,
    TapPrediction,
    ValidationError,
    dump_trace_json,
    parse_trace,
    serialize_trace,
)
from .videoio import VideoReadError, load_dataset, load_video, save_dataset, save_video_frames

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Extract user actions from app screen recordings."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fail(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@main.command()
@click.argument("video_path", type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(), help="Trace JSON output.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def segment(video_path: str, out_path: str, config_path: str | None):
    """Segment a recording into typed action scenes."""
    try:
        cfg = load_pipeline_config(config_path)
        video = load_video(video_path)
        result = segment_video(video, cfg.ssim, cfg.shots, cfg.segmenter)
        doc = serialize_trace(
            result.scenes,
            fps=video.fps,
            source_id=video.source_id,
            metadata={"tool_version": __version__, "n_shots": len(result.shots)},
        )
        Path(out_path).write_text(dump_trace_json(doc))
    except (VideoReadError, ValidationError, OSError) as e:
        _fail(str(e))
    click.echo(f"wrote {out_path}: {len(result.scenes)} scenes from {len(result.shots)} shots")


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--video", "video_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--top-k", default=5, show_default=True, help="Predictions kept per TAP scene.")
def predict(
    trace_path: str,
    video_path: str,
    model_path: str,
    out_path: str,
    config_path: str | None,
    top_k: int,
):
    """Attach ranked tap locations to every TAP scene of a trace."""
    from .tapmodel import CheckpointError, load_checkpoint, predict_clustered

    try:
        cfg = load_pipeline_config(config_path)
        doc = json.loads(Path(trace_path).read_text())
        scenes, fps, source_id = parse_trace(doc)
        video = load_video(video_path)
        model = load_checkpoint(model_path)
        nav_x, nav_y = cfg.segmenter.nav_bar_location
        out_scenes = []
        n_tap = 0
        for sc in scenes:
            if sc.action is ActionType.TAP:
                preds = predict_clustered(
                    model,
                    video.frames[sc.from_shot.keyframe].pixels,
                    video.frames[sc.to_shot.keyframe].pixels,
                    cfg.cluster,
                    top_k=top_k,
                )
                sc = ActionScene(
                    from_shot=sc.from_shot,
                    to_shot=sc.to_shot,
                    action=sc.action,
                    tap_location=sc.tap_location,
                    confidence=sc.confidence,
                    predictions=tuple(preds),
                )
                n_tap += 1
            elif sc.action is ActionType.BACKWARD:
                # The system back button lives at a fixed spot in the
                # navigation bar; no model needed.
                sc = ActionScene(
                    from_shot=sc.from_shot,
                    to_shot=sc.to_shot,
                    action=sc.action,
                    confidence=sc.confidence,
                    predictions=(TapPrediction(nav_x, nav_y, 1.0, 1),),
                )
            out_scenes.append(sc)
        out_doc = serialize_trace(
            out_scenes,
            fps=fps,
            source_id=source_id,
            metadata={**doc.get("metadata", {}), "predicted_with": Path(model_path).name},
        )
        Path(out_path).write_text(dump_trace_json(out_doc))
    except (VideoReadError, ValidationError, CheckpointError, OSError) as e:
        _fail(str(e))
    click.echo(f"wrote {out_path}: located {n_tap} TAP scenes")


@main.command("train")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--augment", is_flag=True, help="Augment the training split.")
@click.option("--epochs", default=30, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_cmd(manifest_path: str, out_path: str, augment: bool, epochs: int, lr: float, seed: int):
    """Train the tap-location model from a dataset manifest."""
    from .augment import augment_dataset
    from .tapmodel import TrainConfig, save_checkpoint, train
    from .tapmodel.train import evaluate_precision

    try:
        samples = load_dataset(manifest_path)
        cfg = TrainConfig(epochs=epochs, lr=lr, seed=seed)
        augment_fn = None
        if augment:

            def augment_fn(train_split):
                extra, report = augment_dataset(train_split, seed=seed)
                click.echo(
                    f"augmentation: +{report.exchange_count} exchanged, "
                    f"+{report.metamorphic_count} reversed "
                    f"({report.ratio_added:.0%} of {report.source_count} source samples)"
                )
                return extra

        result = train(samples, cfg, augment_fn=augment_fn)
        save_checkpoint(result.model, out_path, history=result.history)
        test_prec = (
            evaluate_precision(result.model, result.test_samples)
            if result.test_samples
            else {}
        )
    except ValidationError as e:
        _fail(str(e))
    click.echo(
        f"wrote {out_path}: splits={result.splits}, "
        f"test precision={ {k: round(v, 3) for k, v in test_prec.items()} }"
    )


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", type=click.Path(), default=None)
def eval_cmd(pred_path: str, gt_path: str, report_path: str | None):
    """Compare a predicted trace against a ground-truth trace."""
    try:
        pred_doc = json.loads(Path(pred_path).read_text())
        gt_doc = json.loads(Path(gt_path).read_text())
        pred_scenes, pred_fps, pred_src = parse_trace(pred_doc)
        gt_scenes, gt_fps, gt_src = parse_trace(gt_doc)
        if pred_src and gt_src and pred_src != gt_src:
            raise ValidationError(
                f"traces refer to different recordings: {pred_src!r} vs {gt_src!r}"
            )

        def shots_of(scenes):
            shots = []
            for sc in scenes:
                for s in (sc.from_shot, sc.to_shot):
                    if not shots or shots[-1] != s:
                        shots.append(s)
            return shots

        report = evaluate(
            shot_intervals(shots_of(pred_scenes), pred_fps),
            shot_intervals(shots_of(gt_scenes), gt_fps),
            [s.action.value for s in pred_scenes],
            [s.action.value for s in gt_scenes],
        )
    except (ValidationError, OSError, KeyError) as e:
        _fail(str(e))
    click.echo(f"{'metric':<18}{'value':>10}")
    click.echo(f"{'video F1':<18}{report.video_f1:>10.4f}")
    click.echo(f"{'levenshtein %':<18}{report.levenshtein_pct:>10.2f}")
    for k, v in sorted(report.precision_at.items()):
        click.echo(f"{f'precision@{k}':<18}{v:>10.4f}")
    if report_path:
        Path(report_path).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
        click.echo(f"wrote {report_path}")


@main.command("ingest-rico")
@click.argument("trace_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest_rico_cmd(trace_dir: str, out_dir: str):
    """Convert Rico-style interaction traces into a dataset manifest."""
    from .ricoingest import ingest_rico

    samples, stats = ingest_rico(trace_dir)
    if not samples:
        click.echo("warning: no tap samples ingested", err=True)
    manifest = save_dataset(samples, out_dir)
    click.echo(
        f"wrote {manifest}: {stats.samples} samples from {stats.traces} traces "
        f"({stats.skipped_swipes} swipes, {stats.skipped_unresolved} unresolved, "
        f"{stats.skipped_malformed} malformed skipped)"
    )


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--videos", default=0, show_default=True, help="Synthetic recordings to render.")
@click.option("--samples", default=0, show_default=True, help="Transition samples to render.")
@click.option("--actions", default=6, show_default=True, help="Actions per recording.")
@click.option("--seed", default=0, show_default=True)
def synth(out_dir: str, videos: int, samples: int, actions: int, seed: int):
    """Generate synthetic recordings and transition datasets."""
    from .synthetic import random_script, render_transition_dataset, render_video

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(videos):
        rendered = render_video(random_script(seed + i, n_actions=actions))
        vdir = out / f"video-{seed + i:04d}"
        save_video_frames(rendered.video, vdir)
        gt_doc = serialize_trace(
            rendered.scenes, fps=rendered.video.fps, source_id=rendered.video.source_id
        )
        (vdir / "gt_trace.json").write_text(dump_trace_json(gt_doc))
    if samples:
        manifest = save_dataset(
            render_transition_dataset(samples, seed=seed), out / "dataset"
        )
        click.echo(f"wrote {manifest}")
    click.echo(f"wrote {videos} recordings under {out}")


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--video", "video_path", required=True, type=click.Path())
@click.option("--port", default=None, type=int, help="Defaults to $ACTIONTRACE_PORT or 8008.")
@click.option("--annotations-dir", default="annotations", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(trace_path: str, video_path: str, port: int | None, annotations_dir: str, host: str):
    """Serve the annotation API (and UI, when built) for one recording."""
    import os

    import uvicorn

    from .service import build_app

    if port is None:
        port = int(os.environ.get("ACTIONTRACE_PORT", "8008"))
    try:
        app = build_app(trace_path, video_path, annotations_dir)
    except (VideoReadError, ValidationError, OSError) as e:
        _fail(str(e))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
