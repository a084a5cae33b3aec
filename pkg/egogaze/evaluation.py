# egogaze/evaluation.py
"""
Leaderboard evaluation on held-out paths.

Every predictor maps (recording, clip window) -> (H, W) probability map.
evaluate_model runs one predictor over every clip of the test paths and
scores the query frames against fixation + density ground truth.

Saved prediction layout (predict / metrics commands):
    <out>/<recording_id>/<frame:06d>.f32
"""

__version__ = "1.1.0"  # prediction directories can be scored offline

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from egogaze.app_models import ClipCfg, GazeMapCfg, MetricConfig
from egogaze.gaze_maps import TRUNCATE, CenterPrior, ground_truth, load_map, save_map, uniform_map
from egogaze.metrics import LOWER_IS_BETTER, METRICS, MetricReport, evaluate_all
from egogaze.model_ecn import EgoCampusNet, count_parameters, predict
from egogaze.recording import Recording, list_recordings, load_recording
from egogaze.sampling import ClipWindow, materialize, sample_clip_windows

log = logging.getLogger("egogaze.eval")

# ==================== PREDICTORS ====================

class Predictor:
    name = "predictor"
    parameter_count = 0

    def __call__(self, rec: Recording, cw: ClipWindow) -> np.ndarray:
        raise NotImplementedError


class ModelPredictor(Predictor):
    def __init__(self, model: EgoCampusNet, name: str = "ECN", device="cpu"):
        self.model = model.to(device)
        self.device = device
        self.name = name
        self.parameter_count = count_parameters(model)["total"]

    def __call__(self, rec, cw):
        return predict(materialize(rec, cw), self.model, self.device)


class CenterPriorBaseline(Predictor):
    """The fitted prior grid, repeated for every frame."""
    name = "Center Prior"
    parameter_count = 5   # mean (2) + symmetric covariance (3)

    def __init__(self, prior: CenterPrior):
        self.prior = prior

    def __call__(self, rec, cw):
        if self.prior.shape != (rec.height, rec.width):
            raise ValueError(f"center prior {self.prior.shape} vs recording {(rec.height, rec.width)}")
        return self.prior.grid


class UniformBaseline(Predictor):
    name = "Uniform"

    def __call__(self, rec, cw):
        return uniform_map(rec.height, rec.width)


class OracleBaseline(Predictor):
    """Ground-truth density of the query gaze; an upper bound, not a model."""
    name = "Oracle"

    def __init__(self, sigma: Optional[float] = None, truncate: float = TRUNCATE):
        self.sigma = sigma
        self.truncate = truncate

    def __call__(self, rec, cw):
        sigma = self.sigma if self.sigma is not None else rec.height / 16.0
        _, dens = ground_truth(cw.gaze_target, rec.height, rec.width, sigma, self.truncate)
        return dens.grid

# ==================== EVALUATION ====================

@dataclass
class LeaderboardRow:
    model_name: str
    report: MetricReport
    parameter_count: int = 0

    def __post_init__(self):
        self.report.check_bounds()

    def as_dict(self) -> dict:
        return {"model_name": self.model_name, **self.report.as_dict(),
                "parameter_count": self.parameter_count, "frames_evaluated": self.report.frames_evaluated}


def frame_id(recording_id: str, frame: int) -> str:
    return f"{recording_id}:{frame:06d}"


def query_jobs(recordings: Sequence[Recording], test_paths: Iterable[str],
               clips: ClipCfg = ClipCfg()) -> List[Tuple[Recording, ClipWindow]]:
    paths = set(test_paths)
    out = []
    for rec in sorted(recordings, key=lambda r: r.recording_id):
        if rec.path_id not in paths:
            continue
        out.extend((rec, cw) for cw in sample_clip_windows(rec, clips.window, clips.clip_len, clips.hop))
    return out


def evaluate_model(predictor: Predictor, recordings: Sequence[Recording], test_paths: Iterable[str],
                   clips: ClipCfg = ClipCfg(), gaze: GazeMapCfg = GazeMapCfg(),
                   metric_cfg: MetricConfig = MetricConfig(), workers: int = 1,
                   pred_dir: Optional[Path] = None) -> LeaderboardRow:
    test_paths = sorted(set(test_paths))
    if not test_paths:
        raise ValueError("empty split: no test paths")
    jobs = query_jobs(recordings, test_paths, clips)
    if not jobs:
        raise ValueError(f"empty split: no test clips in paths {test_paths}")

    preds, gts, ids = [], [], []
    with torch.no_grad():
        for rec, cw in jobs:
            pred = np.asarray(predictor(rec, cw), dtype=np.float64)
            fid = frame_id(rec.recording_id, cw.query_frame)
            if pred_dir is not None:
                out = Path(pred_dir) / rec.recording_id
                out.mkdir(parents=True, exist_ok=True)
                save_map(out / f"{cw.query_frame:06d}.f32", pred)
            preds.append(pred)
            gts.append(ground_truth(cw.gaze_target, rec.height, rec.width, gaze.sigma_for(rec.height),
                                    gaze.truncate))
            ids.append(fid)

    log.info(f"[EVAL] {predictor.name}: {len(jobs)} query frames from {len(test_paths)} test paths")
    report = evaluate_all(preds, gts, metric_cfg, frame_ids=ids, workers=workers)
    return LeaderboardRow(predictor.name, report, predictor.parameter_count)


def evaluate_prediction_dir(pred_dir: Path, data_root: Path, gaze: GazeMapCfg = GazeMapCfg(),
                            metric_cfg: MetricConfig = MetricConfig(), workers: int = 1) -> MetricReport:
    """Score saved <recording_id>/<frame>.f32 maps against the recordings under data_root."""
    pred_dir = Path(pred_dir)
    recs: Dict[str, Path] = {p.name: p for p in list_recordings(data_root)}
    preds, gts, ids = [], [], []
    for rec_pred in sorted(p for p in pred_dir.iterdir() if p.is_dir()):
        if rec_pred.name not in recs:
            raise FileNotFoundError(f"no recording {rec_pred.name!r} under {data_root}")
        rec = load_recording(recs[rec_pred.name])
        for f in sorted(rec_pred.glob("*.f32")):
            frame = int(f.stem)
            if not 0 <= frame < len(rec):
                raise ValueError(f"{f}: frame {frame} outside recording of {len(rec)} frames")
            if rec.gaze_missing[frame]:
                log.debug(f"[EVAL] {f}: no gaze at frame {frame}; skipped")
                continue
            preds.append(load_map(f, (rec.height, rec.width)))
            gts.append(ground_truth(rec.gaze_points[frame], rec.height, rec.width, gaze.sigma_for(rec.height),
                                    gaze.truncate))
            ids.append(frame_id(rec.recording_id, frame))
    if not preds:
        raise ValueError(f"no predictions with ground truth under {pred_dir}")
    return evaluate_all(preds, gts, metric_cfg, frame_ids=ids, workers=workers)

# ==================== LEADERBOARD ====================

def leaderboard(rows: Sequence[LeaderboardRow], precision: int = 3) -> Tuple[str, str]:
    """
    Rows sorted by NSS (descending), ties by model name.
    Returns (text, csv_text); text marks each column's best value with '*'.
    """
    if not rows:
        raise ValueError("leaderboard needs at least one row")
    df = pd.DataFrame([r.as_dict() for r in rows])
    df = df.sort_values(["nss", "model_name"], ascending=[False, True], kind="mergesort",
                        na_position="last").reset_index(drop=True)

    best: Dict[str, set] = {}
    for m in METRICS:
        col = df[m]
        if col.isna().all():
            best[m] = set()
            continue
        target = col.min() if m in LOWER_IS_BETTER else col.max()
        best[m] = set(df.index[np.isclose(col, target, rtol=0.0, atol=1e-12)])
    df["best_in"] = [";".join(m for m in METRICS if i in best[m]) for i in df.index]

    text_df = df[["model_name", *METRICS, "parameter_count"]].copy()
    for m in METRICS:
        text_df[m] = [("nan" if np.isnan(v) else f"{v:.{precision}f}") + ("*" if i in best[m] else "")
                      for i, v in zip(df.index, df[m])]
    text_df = text_df.rename(columns={"model_name": "model", "auc_judd": "AUC-J", "cc": "CC", "kld": "KLD",
                                      "sim": "SIM", "nss": "NSS", "parameter_count": "params"})
    text = text_df.to_string(index=False)
    return text, df.to_csv(index=False)
