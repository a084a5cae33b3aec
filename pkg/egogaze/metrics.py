# egogaze/metrics.py
"""
Saliency evaluation metrics: AUC-Judd, CC, KLD, SIM, NSS.

Conventions:
- population standard deviation everywhere
- AUC-Judd thresholds are the distinct predicted values at fixated pixels;
  a pixel counts as positive at threshold t when its value is >= t
- KLD is sum_i Q(i) log(Q(i) / (P(i) + eps)) with eps only in the denominator
- duplicate fixations weight NSS and the fixation-based Q by multiplicity
"""

__version__ = "1.0.2"

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from egogaze.app_models import MetricConfig
from egogaze.gaze_maps import DensityMap, FixationMap
from egogaze.logger import CsvLogger

log = logging.getLogger("egogaze.metrics")

METRICS = ("auc_judd", "cc", "kld", "sim", "nss")
LOWER_IS_BETTER = {"kld"}

Target = Union[FixationMap, DensityMap, np.ndarray]


def _as_map(x) -> np.ndarray:
    if isinstance(x, (FixationMap, DensityMap)):
        x = x.grid
    m = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("map contains non-finite values")
    return m


def _check_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: prediction {a.shape} vs ground truth {b.shape}")


def _distribution(target: Target) -> np.ndarray:
    """Q as a PMF: fixation multiplicity / N, or a density map divided by its sum."""
    if isinstance(target, FixationMap):
        if target.fixation_count == 0:
            raise ValueError("no fixations")
        return target.multiplicity() / target.fixation_count
    q = _as_map(target)
    if np.any(q < 0):
        raise ValueError("ground truth has negative values")
    s = q.sum()
    if s <= 0:
        raise ValueError("ground truth sums to zero")
    return q / s


def _prediction_pmf(pred) -> np.ndarray:
    p = _as_map(pred)
    if np.any(p < 0):
        raise ValueError("prediction has negative values")
    s = p.sum()
    if s <= 0:
        raise ValueError("empty prediction")
    return p / s

# ==================== METRICS ====================

def auc_judd(pred, fix: FixationMap, with_flag: bool = False):
    s = _as_map(pred)
    _check_shape(s, fix.grid)
    s = s.ravel()
    f = fix.grid.ravel() > 0
    n_fix = int(f.sum())
    n_neg = s.size - n_fix
    if n_fix == 0:
        raise ValueError("no fixations")
    if n_neg == 0:
        raise ValueError("every pixel is fixated; ROC undefined")

    if s.max() == s.min():
        return (0.5, True) if with_flag else 0.5

    pos = np.sort(s[f])
    neg = np.sort(s[~f])
    thresholds = np.unique(pos)[::-1]
    tpr = (n_fix - np.searchsorted(pos, thresholds, side="left")) / n_fix
    fpr = (n_neg - np.searchsorted(neg, thresholds, side="left")) / n_neg
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    score = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) * 0.5))
    return (score, False) if with_flag else score


def cc(pred, gt: Target) -> float:
    p = _as_map(pred)
    q = _as_map(gt.grid if isinstance(gt, (FixationMap, DensityMap)) else gt)
    _check_shape(p, q)
    if p.max() == p.min() or q.max() == q.min():
        raise ValueError("zero variance")
    p = p - p.mean()
    q = q - q.mean()
    return float(np.mean(p * q) / (np.sqrt(np.mean(p * p)) * np.sqrt(np.mean(q * q))))


def kld(pred, gt: Target, cfg: MetricConfig = MetricConfig()) -> float:
    p = _prediction_pmf(pred)
    q = _distribution(gt)
    _check_shape(p, q)
    mask = q > 0
    return float(np.sum(q[mask] * np.log(q[mask] / (p[mask] + cfg.epsilon))))


def sim(pred, gt: Target) -> float:
    p = _prediction_pmf(pred)
    q = _distribution(gt)
    _check_shape(p, q)
    return float(np.minimum(p, q).sum())


def nss(pred, fix: FixationMap) -> float:
    s = _as_map(pred)
    _check_shape(s, fix.grid)
    if fix.fixation_count == 0:
        raise ValueError("no fixations")
    if s.max() == s.min():
        raise ValueError("zero variance")
    z = (s - s.mean()) / s.std()
    return float(z[fix.coords[:, 1], fix.coords[:, 0]].mean())

# ==================== BATCH ====================

@dataclass
class MetricReport:
    auc_judd: float
    cc: float
    kld: float
    sim: float
    nss: float
    frames_evaluated: int
    skipped: Dict[str, int] = field(default_factory=lambda: {m: 0 for m in METRICS})
    auc_degenerate: int = 0
    rows: List[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}

    def check_bounds(self, tol: float = 1e-9):
        v = self.as_dict()
        problems = []
        if not math.isnan(v["auc_judd"]) and not -tol <= v["auc_judd"] <= 1 + tol:
            problems.append(f"auc_judd={v['auc_judd']}")
        if not math.isnan(v["sim"]) and not -tol <= v["sim"] <= 1 + tol:
            problems.append(f"sim={v['sim']}")
        if not math.isnan(v["cc"]) and not -1 - tol <= v["cc"] <= 1 + tol:
            problems.append(f"cc={v['cc']}")
        # epsilon in the denominator lets an exact match dip slightly below zero
        if not math.isnan(v["kld"]) and v["kld"] < -1e-3:
            problems.append(f"kld={v['kld']}")
        if problems:
            raise ValueError(f"metric report out of bounds: {', '.join(problems)}")


def evaluate_frame(pred, fix: FixationMap, density: DensityMap, cfg: MetricConfig = MetricConfig()) -> dict:
    """All five metrics for one frame; a metric that raises is reported as NaN."""
    target = density if cfg.distribution_target == "density" else fix
    row = {}
    degenerate = False
    for name in METRICS:
        try:
            if name == "auc_judd":
                row[name], degenerate = auc_judd(pred, fix, with_flag=True)
            elif name == "cc":
                row[name] = cc(pred, density)
            elif name == "kld":
                row[name] = kld(pred, target, cfg)
            elif name == "sim":
                row[name] = sim(pred, target)
            else:
                row[name] = nss(pred, fix)
        except ValueError as e:
            log.debug(f"[METRICS] {name} skipped: {e}")
            row[name] = float("nan")
    row["auc_degenerate"] = degenerate
    return row


def evaluate_all(preds: Sequence, gts: Sequence[Tuple[FixationMap, DensityMap]],
                 cfg: MetricConfig = MetricConfig(), frame_ids: Optional[Sequence[str]] = None,
                 workers: int = 1) -> MetricReport:
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} ground truths")
    if frame_ids is not None and len(frame_ids) != len(preds):
        raise ValueError(f"length mismatch: {len(frame_ids)} frame ids vs {len(preds)} predictions")
    ids = list(frame_ids) if frame_ids is not None else [str(i) for i in range(len(preds))]

    def _one(args):
        p, (fix, dens) = args
        return evaluate_frame(p, fix, dens, cfg)

    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="metrics-") as pool:
        rows = list(pool.map(_one, zip(preds, gts)))

    means, skipped = {}, {}
    for m in METRICS:
        vals = np.array([r[m] for r in rows], dtype=np.float64)
        ok = np.isfinite(vals)
        skipped[m] = int((~ok).sum())
        means[m] = float(vals[ok].mean()) if ok.any() else float("nan")
    for fid, r in zip(ids, rows):
        r["frame_id"] = fid
    report = MetricReport(**means, frames_evaluated=len(rows), skipped=skipped,
                          auc_degenerate=sum(bool(r["auc_degenerate"]) for r in rows), rows=rows)
    log.info(f"[METRICS] {len(rows)} frames: " + " ".join(f"{m}={means[m]:.4f}" for m in METRICS)
             + (f" skipped={skipped}" if any(skipped.values()) else ""))
    return report


def write_metric_csv(report: MetricReport, path: Path):
    """frame_id, auc_judd, cc, kld, sim, nss per frame, then a `mean` row."""
    with CsvLogger(path, ["frame_id", *METRICS]) as out:
        out.write_many(report.rows)
        out.write({"frame_id": "mean", **report.as_dict()})
