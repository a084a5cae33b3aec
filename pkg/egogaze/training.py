# egogaze/training.py
"""
Training loop: Adam on per-pixel MSE between the predicted probability map
and the Gaussian density of the query gaze. Maps are compared after scaling
by H*W (a uniform map has value 1 everywhere) so gradients stay well above
Adam's epsilon; the minimiser is unchanged.

Validation NSS on held-out training paths selects the checkpoint.
"""

__version__ = "1.2.0"

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from egogaze.app_models import ClipCfg, ModelConfig, TrainConfig
from egogaze.backbones import normalize_video
from egogaze.gaze_maps import TRUNCATE, CenterPrior, fit_center_prior, ground_truth
from egogaze.logger import CsvLogger
from egogaze.metrics import nss
from egogaze.model_ecn import EgoCampusNet, build_model, parameter_checksum, save_checkpoint
from egogaze.recording import Recording
from egogaze.sampling import ClipWindow, SplitSpec, sample_clip_windows

log = logging.getLogger("egogaze.train")


class ClipDataset(Dataset):
    """Lazily gathers clip frames; yields normalised clip, density target and gaze."""

    def __init__(self, recordings: Sequence[Recording], windows: Sequence[ClipWindow], sigma: float,
                 truncate: float = TRUNCATE):
        self.recs: Dict[str, Recording] = {r.recording_id: r for r in recordings}
        self.windows = list(windows)
        self.sigma = sigma
        self.truncate = truncate

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, i):
        cw = self.windows[i]
        rec = self.recs[cw.recording_id]
        frames = torch.from_numpy(np.ascontiguousarray(rec.frames[list(cw.frame_indices)]))
        clip = normalize_video(frames.permute(3, 0, 1, 2).float().unsqueeze(0))[0]
        _, dens = ground_truth(cw.gaze_target, rec.height, rec.width, self.sigma, self.truncate)
        return {
            "clip": clip,
            "query_index": cw.query_index,
            "target": torch.from_numpy(dens.grid.astype(np.float32)),
            "gaze": torch.tensor(cw.gaze_target, dtype=torch.float32),
            "frame_id": f"{cw.recording_id}:{cw.query_frame:06d}",
        }


def build_clip_index(recordings: Sequence[Recording], clips: ClipCfg) -> List[ClipWindow]:
    out: List[ClipWindow] = []
    for rec in recordings:
        out.extend(sample_clip_windows(rec, clips.window, clips.clip_len, clips.hop))
    return out


def hold_out_paths(train_paths, n_val: int, seed: int) -> Tuple[List[str], List[str]]:
    """(fit_paths, val_paths); validation is disabled when too few paths remain."""
    paths = sorted(train_paths)
    if n_val <= 0 or len(paths) <= n_val:
        return paths, []
    perm = np.random.default_rng(seed + 1).permutation(len(paths))
    val = sorted(paths[i] for i in perm[:n_val])
    return [p for p in paths if p not in val], val


def _check_resolution(recordings: Sequence[Recording], model_cfg: ModelConfig):
    want = tuple(model_cfg.input_size)
    for rec in recordings:
        if (rec.height, rec.width) != want:
            raise ValueError(f"{rec.recording_id} is {rec.height}x{rec.width}; model input is {want[0]}x{want[1]}")


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    hw = pred.shape[-1] * pred.shape[-2]
    return F.mse_loss(pred * hw, target * hw)


def train_step(model: EgoCampusNet, opt: torch.optim.Optimizer, batch: dict, device) -> float:
    clip = batch["clip"].to(device)
    target = batch["target"].to(device)
    q = int(batch["query_index"][0])
    pred = model(clip, q)
    loss = mse_loss(pred, target)
    if not torch.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss.item()} on frames {list(batch['frame_id'])}")
    opt.zero_grad(set_to_none=True)
    loss.backward()
    opt.step()
    return float(loss.item())


def make_optimizer(model: EgoCampusNet, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=lr)


@torch.no_grad()
def validation_nss(model: EgoCampusNet, loader: DataLoader, device) -> float:
    model.eval()
    scores = []
    for batch in loader:
        pred = model(batch["clip"].to(device), int(batch["query_index"][0])).double().cpu().numpy()
        h, w = pred.shape[1:]
        for p, g in zip(pred, batch["gaze"].numpy()):
            fix, _ = ground_truth(g, h, w, sigma=1.0)
            try:
                scores.append(nss(p, fix))
            except ValueError:
                pass
    return float(np.mean(scores)) if scores else float("nan")


@dataclass
class TrainResult:
    model: EgoCampusNet
    prior: CenterPrior
    loss_curve: List[dict] = field(default_factory=list)     # epoch, step, loss
    epochs: List[dict] = field(default_factory=list)         # epoch, train_loss, val_nss, seconds
    best_epoch: int = -1
    best_val_nss: float = float("nan")
    fit_paths: List[str] = field(default_factory=list)
    val_paths: List[str] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    wall_clock_s: float = 0.0


def _loader(ds: Dataset, cfg: TrainConfig, shuffle: bool) -> DataLoader:
    g = torch.Generator()
    g.manual_seed(cfg.seed)
    return DataLoader(ds, batch_size=cfg.batch_size, shuffle=shuffle, num_workers=cfg.num_workers, generator=g)


def train(model_cfg: ModelConfig, recordings: Sequence[Recording], split: SplitSpec, cfg: TrainConfig,
          out_dir: Optional[Path] = None, model: Optional[EgoCampusNet] = None) -> TrainResult:
    t_start = time.time()
    torch.manual_seed(cfg.seed)
    device = torch.device(cfg.device)
    _check_resolution(recordings, model_cfg)
    h, w = model_cfg.input_size

    fit_paths, val_paths = hold_out_paths(split.train_paths, cfg.val_paths, cfg.seed)
    fit_recs = [r for r in recordings if r.path_id in fit_paths]
    val_recs = [r for r in recordings if r.path_id in val_paths]
    fit_windows = build_clip_index(fit_recs, cfg.clips)
    if not fit_windows:
        raise ValueError("empty split: no training clips")
    val_windows = build_clip_index(val_recs, cfg.clips)
    log.info(f"[TRAIN] {len(fit_windows)} train clips from {len(fit_paths)} paths, "
             f"{len(val_windows)} validation clips from {len(val_paths)} paths")

    gaze = np.concatenate([r.gaze_points[~r.gaze_missing] for r in fit_recs])
    prior = fit_center_prior(gaze, h, w, ridge=cfg.gaze.prior_ridge)
    if model is None:
        model = build_model(model_cfg, prior)
    else:
        model.set_center_prior(prior)
    model.to(device)

    sigma, truncate = cfg.gaze.sigma_for(h), cfg.gaze.truncate
    train_loader = _loader(ClipDataset(fit_recs, fit_windows, sigma, truncate), cfg, shuffle=True)
    val_loader = _loader(ClipDataset(val_recs, val_windows, sigma, truncate), cfg, shuffle=False) if val_windows else None
    opt = make_optimizer(model, cfg.learning_rate)

    result = TrainResult(model=model, prior=prior, fit_paths=fit_paths, val_paths=val_paths)
    best_state = None
    curve_log = CsvLogger(Path(out_dir) / "loss_curve.csv", ["epoch", "step", "loss"]) if out_dir else None
    backbone_sum = parameter_checksum(model.backbone)
    try:
        step = 0
        for epoch in range(cfg.epochs):
            t_epoch = time.time()
            model.train()
            losses = []
            for i, batch in enumerate(train_loader):
                if cfg.max_steps_per_epoch is not None and i >= cfg.max_steps_per_epoch:
                    break
                try:
                    loss = train_step(model, opt, batch, device)
                except FloatingPointError as e:
                    raise FloatingPointError(f"epoch {epoch} step {step}: {e}") from e
                losses.append(loss)
                row = {"epoch": epoch, "step": step, "loss": loss}
                result.loss_curve.append(row)
                if curve_log:
                    curve_log.write(row)
                step += 1
            if parameter_checksum(model.backbone) != backbone_sum:
                raise RuntimeError("backbone parameters changed during training")

            val = validation_nss(model, val_loader, device) if val_loader else float("nan")
            summary = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_nss": val,
                       "seconds": time.time() - t_epoch}
            result.epochs.append(summary)
            if curve_log:
                curve_log.flush()
            log.info(f"[TRAIN] epoch {epoch + 1}/{cfg.epochs} loss={summary['train_loss']:.5f} "
                     f"val_nss={val:.4f} ({summary['seconds']:.1f}s)")
            if val_loader is None:
                improved = True
            else:
                improved = not np.isnan(val) and (np.isnan(result.best_val_nss) or val > result.best_val_nss)
            if improved:
                result.best_val_nss = val
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
    finally:
        if curve_log:
            curve_log.close()

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        result.best_epoch = cfg.epochs - 1
    result.wall_clock_s = time.time() - t_start
    if out_dir:
        out_dir = Path(out_dir)
        with CsvLogger(out_dir / "epochs.csv", ["epoch", "train_loss", "val_nss", "seconds"]) as ep_log:
            ep_log.write_many(result.epochs)
        result.checkpoint = save_checkpoint(model, out_dir / "model.egck", extra={
            "train_config": cfg.model_dump(mode="json"),
            "split": split.to_dict(),
            "fit_paths": fit_paths,
            "val_paths": val_paths,
            "best_epoch": result.best_epoch,
            "best_val_nss": None if np.isnan(result.best_val_nss) else result.best_val_nss,
        })
    log.info(f"[TRAIN] done in {result.wall_clock_s:.1f}s, best epoch {result.best_epoch + 1} "
             f"(val NSS {result.best_val_nss:.4f})")
    return result


def overfit(model: EgoCampusNet, dataset: ClipDataset, steps: int = 200, lr: float = 0.002,
            device="cpu") -> List[float]:
    """Repeatedly fit one batch holding the whole dataset; returns the loss per step."""
    loader = DataLoader(dataset, batch_size=len(dataset), shuffle=False)
    batch = next(iter(loader))
    model.to(device).train()
    opt = make_optimizer(model, lr)
    return [train_step(model, opt, batch, device) for _ in range(steps)]
