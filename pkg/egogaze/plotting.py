# egogaze/plotting.py
"""
PNG artifacts: heatmap overlays, model montages, loss curves.

Overlays are composed as arrays (colormapped heatmap alpha-blended onto the
frame, "+" drawn at the gaze pixel) and written with matplotlib, so the
pixel content does not depend on figure layout.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from egogaze.app_models import PlotCfg  # noqa: E402
from egogaze.filters import moving_average  # noqa: E402
from egogaze.gaze_maps import round_half_away  # noqa: E402

log = logging.getLogger("egogaze.plot")

MARKER_COLOR = np.array([255, 255, 255], dtype=np.uint8)


def _heat_rgb(m: np.ndarray, cmap: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    scaled = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    return matplotlib.colormaps[cmap](scaled)[..., :3] * 255.0


def draw_cross(img: np.ndarray, x: float, y: float, half: int, color=MARKER_COLOR) -> np.ndarray:
    h, w = img.shape[:2]
    cx, cy = (int(v) for v in round_half_away([x, y]))
    if not (0 <= cx < w and 0 <= cy < h):
        return img
    img[cy, max(0, cx - half):min(w, cx + half + 1)] = color
    img[max(0, cy - half):min(h, cy + half + 1), cx] = color
    return img


def overlay(frame: np.ndarray, heatmap: np.ndarray, gaze=None, cfg: PlotCfg = PlotCfg()) -> np.ndarray:
    """(H, W, 3) uint8 frame + (H, W) map -> (H, W, 3) uint8; '+' only when gaze is finite."""
    frame = np.asarray(frame)
    heatmap = np.asarray(heatmap)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"frame must be (H, W, 3), got {frame.shape}")
    if heatmap.shape != frame.shape[:2]:
        raise ValueError(f"shape mismatch: map {heatmap.shape} vs frame {frame.shape[:2]}")
    out = (1.0 - cfg.alpha) * frame.astype(np.float64) + cfg.alpha * _heat_rgb(heatmap, cfg.cmap)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if gaze is not None and np.all(np.isfinite(np.asarray(gaze, dtype=np.float64))):
        draw_cross(out, gaze[0], gaze[1], half=max(1, int(cfg.marker_size) // 2))
    return out


def save_overlay(path: Path, frame, heatmap, gaze=None, cfg: PlotCfg = PlotCfg()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, overlay(frame, heatmap, gaze, cfg))
    return path


def montage_tiles(frames: Sequence[np.ndarray], maps: Dict[str, Sequence[np.ndarray]], gaze=None,
                  cfg: PlotCfg = PlotCfg()) -> List[np.ndarray]:
    """k frames x m models -> k*m overlays, row-major (one row per frame, models in dict order)."""
    k = len(frames)
    for name, ms in maps.items():
        if len(ms) != k:
            raise ValueError(f"length mismatch: {name} has {len(ms)} maps for {k} frames")
    gaze = [None] * k if gaze is None else list(gaze)
    return [overlay(frames[i], ms[i], gaze[i], cfg) for i in range(k) for ms in maps.values()]


def save_montage(path: Path, frames, maps: Dict[str, Sequence[np.ndarray]], gaze=None,
                 cfg: PlotCfg = PlotCfg()) -> Path:
    tiles = montage_tiles(frames, maps, gaze, cfg)
    k, m = len(frames), len(maps)
    fig, axes = plt.subplots(k, m, figsize=(2.0 * m, 2.0 * k), squeeze=False)
    names = list(maps)
    for i, tile in enumerate(tiles):
        ax = axes[i // m][i % m]
        ax.imshow(tile)
        ax.set_xticks([])
        ax.set_yticks([])
        if i < m:
            ax.set_title(names[i], fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=cfg.dpi)
    plt.close(fig)
    log.info(f"[PLOT] montage {k}x{m} -> {path}")
    return path


def save_loss_curve(csv_path: Path, path: Path, smooth: int = 10, cfg: PlotCfg = PlotCfg()) -> Path:
    df = pd.read_csv(csv_path)
    if df.empty:
        raise ValueError(f"{csv_path}: no loss rows")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(df["step"], df["loss"], lw=0.8, alpha=0.5, label="loss")
    sm = moving_average(df["loss"].to_numpy(), smooth)
    if len(sm) < len(df):
        ax.plot(df["step"].to_numpy()[smooth - 1:], sm, lw=1.5, label=f"mean of {smooth}")
    ax.set_xlabel("step")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=cfg.dpi)
    plt.close(fig)
    return path


def plot_recording(out_dir: Path, frames: np.ndarray, gaze: np.ndarray, preds: Dict[int, np.ndarray],
                   cfg: PlotCfg = PlotCfg(), limit: Optional[int] = None) -> List[Path]:
    """One overlay PNG per predicted frame index: <out_dir>/<frame:06d>.png."""
    written = []
    for n, (i, m) in enumerate(sorted(preds.items())):
        if limit is not None and n >= limit:
            break
        written.append(save_overlay(Path(out_dir) / f"{i:06d}.png", frames[i], m, gaze[i], cfg))
    return written
