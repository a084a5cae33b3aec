# egogaze/cli.py
"""
egogaze command line: ingest, synth, split, stats, train, eval, predict, metrics, plot.

Precedence: built-in defaults < --config file < command-line flags.
Environment: EGOGAZE_DATA (data root), EGOGAZE_LOGLEVEL, EGOGAZE_DEVICE.

Every command leaves a run_manifest.json in its output directory, or
<name>.run_manifest.json next to a single output file.
"""

import functools
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from egogaze import __version__
from egogaze.alignment import ingest_recording
from egogaze.app_models import (
    GazeMapCfg, IngestCfg, MetricConfig, ModelConfig, PlotCfg, RunManifest, SceneCfg, SplitCfg,
    TrainConfig, config_hash, load_json_model, save_json_model,
)
from egogaze.evaluation import (
    CenterPriorBaseline, ModelPredictor, OracleBaseline, UniformBaseline, evaluate_model,
    evaluate_prediction_dir, leaderboard, query_jobs,
)
from egogaze.gaze_maps import CenterPrior, fit_center_prior, load_map, save_map
from egogaze.metrics import write_metric_csv
from egogaze.model_ecn import load_checkpoint, predict
from egogaze.plotting import plot_recording, save_loss_curve, save_montage, save_overlay
from egogaze.recording import (
    list_recordings, load_dataset, load_raw_streams, load_recording, read_manifest, save_recording,
    summarize_dataset,
)
from egogaze.sampling import SplitSpec, make_split, materialize
from egogaze.synth import generate_synthetic_dataset
from egogaze.training import train

log = logging.getLogger("egogaze.cli")

BASELINES = ("center", "uniform", "oracle")

# ==================== HELPERS ====================

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest_path(out: Path) -> Path:
    out = Path(out)
    if out.suffix and not out.is_dir():
        return out.with_name(out.stem + ".run_manifest.json")
    return out / "run_manifest.json"


def write_run_manifest(out: Path, command: str, cfgs=(), seed: Optional[int] = None,
                       inputs=(), outputs=(), started: str = "") -> Path:
    man = RunManifest(
        command=command,
        config_hash=config_hash(*cfgs) if cfgs else "",
        seed=seed,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        tool_version=__version__,
        started=started,
        finished=_now(),
    )
    path = _manifest_path(out)
    save_json_model(path, man)
    return path


def _cli_errors(fn):
    """Expected failures become `error: ...` on stderr with exit code 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, FileNotFoundError, FloatingPointError) as e:
            log.debug(f"[CLI] {fn.__name__} failed", exc_info=True)
            click.echo(f"error: {e}", err=True)
            raise SystemExit(1)
    return wrapper


def _data_option(required=True):
    return click.option("--data", "data", type=click.Path(path_type=Path), envvar="EGOGAZE_DATA",
                        required=required, help="Dataset root (default: $EGOGAZE_DATA)")


def _device_option():
    return click.option("--device", envvar="EGOGAZE_DEVICE", default=None, help="torch device (default: $EGOGAZE_DEVICE or cpu)")


def _load_split_recordings(data: Path, split_path: Path):
    split = SplitSpec.load(split_path)
    recs = load_dataset(data, set(split.all_paths))
    if not recs:
        raise ValueError(f"no recordings for the split's paths under {data}")
    return split, recs

# ==================== COMMANDS ====================

@click.group()
@click.version_option(__version__, prog_name="egogaze")
@click.option("--log-level", envvar="EGOGAZE_LOGLEVEL", default="INFO", show_default=True)
def cli(log_level: str):
    """Egocentric gaze prediction toolkit."""
    logging.basicConfig(level=log_level.upper(), format="%(message)s")


@cli.command()
@click.argument("raw_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Dataset root to write into")
@click.option("--config", "config", type=click.Path(path_type=Path), default=None)
@click.option("--size", type=int, nargs=2, default=None, help="Stored H W")
@click.option("--id", "recording_id", default="", help="Recording id (default <path_id>_<direction>)")
@_cli_errors
def ingest(raw_dir: Path, out: Path, config, size, recording_id):
    """Align a raw device dump and store it as a recording."""
    started = _now()
    cfg = load_json_model(config, IngestCfg)
    if size:
        cfg = cfg.model_copy(update={"size": tuple(size)})
    rec = ingest_recording(load_raw_streams(raw_dir), cfg, recording_id)
    rec_dir = save_recording(rec, out, jpeg_quality=cfg.jpeg_quality)
    write_run_manifest(rec_dir, "ingest", [cfg], inputs=[raw_dir], outputs=[rec_dir], started=started)
    click.echo(str(rec_dir))


@cli.command()
@click.option("--paths", "n_paths", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), envvar="EGOGAZE_DATA", required=True)
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="SceneCfg JSON")
@click.option("--duration", type=float, default=None, help="Seconds per recording")
@click.option("--workers", type=int, default=1, show_default=True)
@_cli_errors
def synth(n_paths, seed, out, config, duration, workers):
    """Write a synthetic dataset of N paths."""
    started = _now()
    scene = load_json_model(config, SceneCfg)
    if duration is not None:
        scene = scene.model_copy(update={"duration_s": duration})
    ids = generate_synthetic_dataset(out, n_paths, seed, scene, workers=workers)
    write_run_manifest(out, "synth", [scene], seed=seed, outputs=ids, started=started)
    s = summarize_dataset(out)
    click.echo(f"{len(ids)} paths, {s.frames} frames, gaze on {s.gaze_coverage:.1%}, {s.hours:.3f} h -> {out}")


@cli.command()
@_data_option()
@click.option("--ratio", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--rule", type=click.Choice(["test_plus_one", "nearest"]), default=None)
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="SplitCfg JSON")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="split.json")
@_cli_errors
def split(data, ratio, seed, rule, config, out):
    """Split the dataset's path ids into train/test."""
    started = _now()
    cfg = load_json_model(config, SplitCfg)
    overrides = {"ratio": ratio, "seed": seed, "rule": rule}
    cfg = SplitCfg.model_validate({**cfg.model_dump(), **{k: v for k, v in overrides.items() if v is not None}})
    paths = sorted({read_manifest(d)["path_id"] for d in list_recordings(data)})
    spec = make_split(paths, cfg.ratio, cfg.seed, cfg.rule)
    out.parent.mkdir(parents=True, exist_ok=True)
    spec.save(out)
    write_run_manifest(out, "split", [cfg], seed=cfg.seed, inputs=[data], outputs=[out], started=started)
    click.echo(f"train {len(spec.train_paths)} / test {len(spec.test_paths)} -> {out}")


@cli.command("stats")
@_data_option()
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Also summarise each side of this split")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="summary.json")
@_cli_errors
def stats(data, split_path, out):
    """Recordings, frames, gaze coverage and hours of a dataset root."""
    started = _now()
    summary = {"all": summarize_dataset(data).as_dict()}
    if split_path is not None:
        spec = SplitSpec.load(split_path)
        summary["train"] = summarize_dataset(data, set(spec.train_paths)).as_dict()
        summary["test"] = summarize_dataset(data, set(spec.test_paths)).as_dict()
    text = json.dumps(summary, indent=1)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        write_run_manifest(out, "stats", inputs=[data] + ([split_path] if split_path else []), outputs=[out],
                           started=started)
    click.echo(text)


@cli.command("train")
@_data_option()
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="TrainConfig JSON")
@click.option("--model-config", type=click.Path(path_type=Path), default=None, help="ModelConfig JSON")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Checkpoint directory")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@_device_option()
@_cli_errors
def train_cmd(data, split_path, config, model_config, out, seed, epochs, lr, device):
    """Train EgoCampusNet on the split's training paths."""
    started = _now()
    cfg = load_json_model(config, TrainConfig)
    overrides = {"seed": seed, "epochs": epochs, "learning_rate": lr, "device": device}
    cfg = TrainConfig.model_validate({**cfg.model_dump(), **{k: v for k, v in overrides.items() if v is not None}})
    model_cfg = load_json_model(model_config, ModelConfig)
    split_spec, recs = _load_split_recordings(data, split_path)
    out.mkdir(parents=True, exist_ok=True)
    save_json_model(out / "train_config.json", cfg)
    save_json_model(out / "model_config.json", model_cfg)
    result = train(model_cfg, recs, split_spec, cfg, out_dir=out)
    write_run_manifest(out, "train", [cfg, model_cfg], seed=cfg.seed, inputs=[data, split_path],
                       outputs=[result.checkpoint, out / "loss_curve.csv", out / "epochs.csv"], started=started)
    click.echo(f"checkpoint -> {result.checkpoint} ({result.wall_clock_s:.1f}s)")


def _prior_for(header: Optional[dict], recs, split_spec: SplitSpec, gaze: GazeMapCfg, hw) -> CenterPrior:
    cp = (header or {}).get("center_prior")
    if cp is not None:
        return CenterPrior.from_params(cp["mean"], cp["cov"], *hw)
    pts = np.concatenate([r.gaze_points[~r.gaze_missing] for r in recs if r.path_id in split_spec.train_paths])
    return fit_center_prior(pts, *hw, ridge=gaze.prior_ridge)


@cli.command("eval")
@_data_option()
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--ckpt", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--baseline", "baselines", type=click.Choice(BASELINES), multiple=True)
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="TrainConfig JSON (clips, sigma)")
@click.option("--metric-config", type=click.Path(path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True, help="leaderboard.csv")
@click.option("--pred-dir", type=click.Path(path_type=Path), default=None, help="Also save model maps here")
@click.option("--workers", type=int, default=1, show_default=True)
@_device_option()
@_cli_errors
def eval_cmd(data, split_path, ckpt, baselines, config, metric_config, out, pred_dir, workers, device):
    """Score a checkpoint and/or baselines on the test paths."""
    if ckpt is None and not baselines:
        raise click.UsageError("eval needs --ckpt and/or --baseline")
    started = _now()
    cfg = load_json_model(config, TrainConfig)
    metric_cfg = load_json_model(metric_config, MetricConfig)
    split_spec, recs = _load_split_recordings(data, split_path)
    hw = (recs[0].height, recs[0].width)

    predictors, header = [], None
    if ckpt is not None:
        model, header = load_checkpoint(ckpt, device or "cpu")
        predictors.append(ModelPredictor(model, f"ECN ({model.cfg.backbone})", device or "cpu"))
    for b in baselines:
        if b == "center":
            predictors.append(CenterPriorBaseline(_prior_for(header, recs, split_spec, cfg.gaze, hw)))
        elif b == "uniform":
            predictors.append(UniformBaseline())
        else:
            predictors.append(OracleBaseline(cfg.gaze.sigma_for(hw[0]), cfg.gaze.truncate))

    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in predictors:
        row = evaluate_model(p, recs, split_spec.test_paths, cfg.clips, cfg.gaze, metric_cfg, workers=workers,
                             pred_dir=pred_dir if isinstance(p, ModelPredictor) else None)
        slug = p.name.lower().replace(" ", "_").replace("(", "").replace(")", "")
        write_metric_csv(row.report, out.parent / f"frames_{slug}.csv")
        rows.append(row)
    text, csv_text = leaderboard(rows)
    out.write_text(csv_text, encoding="utf-8")
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    write_run_manifest(out, "eval", [cfg, metric_cfg], seed=split_spec.seed,
                       inputs=[data, split_path] + ([ckpt] if ckpt else []), outputs=[out], started=started)
    click.echo(text)


@cli.command("predict")
@_data_option()
@click.option("--ckpt", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Predict only the test paths of this split")
@click.option("--recording", "recording_id", default=None, help="Predict only this recording")
@click.option("--frame", type=int, default=None, help="Query frame of the one clip to predict (needs --recording)")
@click.option("--overlay", type=click.Path(path_type=Path), default=None,
              help="PNG of the map over its frame with the stored gaze (needs --frame)")
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="TrainConfig JSON (clips)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Prediction directory")
@_device_option()
@_cli_errors
def predict_cmd(data, ckpt, split_path, recording_id, frame, overlay, config, out, device):
    """Write <recording_id>/<frame>.f32 maps for every query frame, or for one clip."""
    if split_path is not None and recording_id is not None:
        raise click.UsageError("--split and --recording are exclusive")
    if frame is not None and recording_id is None:
        raise click.UsageError("--frame needs --recording")
    if overlay is not None and frame is None:
        raise click.UsageError("--overlay needs --recording and --frame")
    started = _now()
    cfg = load_json_model(config, TrainConfig)
    model, _ = load_checkpoint(ckpt, device or "cpu")
    if split_path is not None:
        split_spec, recs = _load_split_recordings(data, split_path)
        paths = split_spec.test_paths
    elif recording_id is not None:
        rec_dir = Path(data) / recording_id
        if not (rec_dir / "manifest.json").exists():
            raise FileNotFoundError(f"no recording {recording_id!r} under {data}")
        recs = [load_recording(rec_dir)]
        paths = {recs[0].path_id}
    else:
        recs = load_dataset(data)
        paths = {r.path_id for r in recs}
    jobs = query_jobs(recs, paths, cfg.clips)
    if frame is not None:
        jobs = [(r, cw) for r, cw in jobs if cw.query_frame == frame]
        if not jobs:
            raise ValueError(f"frame {frame} is not the query frame of any clip of {recording_id}")
    if not jobs:
        raise ValueError("no query frames to predict")
    written: List[Path] = []
    for rec, cw in jobs:
        rec_out = out / rec.recording_id
        rec_out.mkdir(parents=True, exist_ok=True)
        m = predict(materialize(rec, cw), model, device or "cpu")
        save_map(rec_out / f"{cw.query_frame:06d}.f32", m)
    if overlay is not None:
        written.append(save_overlay(overlay, rec.frames[cw.query_frame], m, rec.gaze_points[cw.query_frame]))
    write_run_manifest(out, "predict", [cfg, model.cfg], inputs=[data, ckpt], outputs=[out] + written,
                       started=started)
    click.echo(f"{len(jobs)} maps -> {out}")


@cli.command("metrics")
@click.option("--pred-dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--gt-dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True,
              help="Dataset root holding the recordings")
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="MetricConfig JSON")
@click.option("--sigma", type=float, default=None, help="Ground-truth sigma in px (default H/16)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="metrics.csv")
@_cli_errors
def metrics_cmd(pred_dir, gt_dir, config, sigma, out):
    """Score a prediction directory against stored gaze."""
    started = _now()
    metric_cfg = load_json_model(config, MetricConfig)
    gaze = GazeMapCfg(sigma=sigma)
    report = evaluate_prediction_dir(pred_dir, gt_dir, gaze, metric_cfg)
    write_metric_csv(report, out)
    write_run_manifest(out, "metrics", [metric_cfg, gaze], inputs=[pred_dir, gt_dir], outputs=[out], started=started)
    click.echo(json.dumps(report.as_dict()))


def _parse_pred_dirs(values) -> dict:
    out = {}
    for v in values:
        name, _, path = v.rpartition("=")
        path = Path(path)
        out[name or path.name] = path
    return out


@cli.command("plot")
@_data_option(required=False)
@click.option("--pred-dir", "pred_dirs", multiple=True, help="[NAME=]DIR of saved maps; repeat for montages")
@click.option("--loss-csv", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--recording", "recording_id", default=None, help="Recording to draw (default: first predicted)")
@click.option("--frames", "n_frames", type=int, default=4, show_default=True, help="Montage rows / overlay limit")
@click.option("--config", "config", type=click.Path(path_type=Path), default=None, help="PlotCfg JSON")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output directory")
@_cli_errors
def plot_cmd(data, pred_dirs, loss_csv, recording_id, n_frames, config, out):
    """Overlays, model montages and loss curves as PNG."""
    started = _now()
    cfg = load_json_model(config, PlotCfg)
    if not pred_dirs and loss_csv is None:
        raise click.UsageError("plot needs --pred-dir and/or --loss-csv")
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if loss_csv is not None:
        written.append(save_loss_curve(loss_csv, out / "loss_curve.png", cfg=cfg))
    if pred_dirs:
        if data is None:
            raise click.UsageError("overlays need --data (or $EGOGAZE_DATA)")
        dirs = _parse_pred_dirs(pred_dirs)
        first = next(iter(dirs.values()))
        rec_ids = sorted(p.name for p in first.iterdir() if p.is_dir())
        if not rec_ids:
            raise ValueError(f"no predictions under {first}")
        rid = recording_id or rec_ids[0]
        rec = load_recording(Path(data) / rid)
        maps = {name: {int(f.stem): load_map(f, (rec.height, rec.width)) for f in sorted((d / rid).glob("*.f32"))}
                for name, d in dirs.items()}
        written += plot_recording(out / rid, rec.frames, rec.gaze_points, maps[next(iter(maps))], cfg, limit=n_frames)
        if len(dirs) > 1:
            common = sorted(set.intersection(*(set(m) for m in maps.values())))[:n_frames]
            if not common:
                raise ValueError(f"no frame of {rid} is predicted by every model")
            written.append(save_montage(out / f"montage_{rid}.png", [rec.frames[i] for i in common],
                                        {name: [m[i] for i in common] for name, m in maps.items()},
                                        [rec.gaze_points[i] for i in common], cfg))
    write_run_manifest(out, "plot", [cfg], outputs=written, started=started)
    click.echo(f"{len(written)} images -> {out}")


def main():
    cli(prog_name="egogaze")


if __name__ == "__main__":
    main()
