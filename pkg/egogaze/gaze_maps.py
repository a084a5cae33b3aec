# egogaze/gaze_maps.py
"""
Ground-truth maps: binary fixation maps, Gaussian density maps and the
fitted center prior. All grids are (H, W) with x = column, y = row.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from egogaze.array_io import decode_array, read_array, write_array, write_block

log = logging.getLogger("egogaze.gaze_maps")

TRUNCATE = 4.0


def round_half_away(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


@dataclass
class FixationMap:
    grid: np.ndarray          # (H, W) uint8, duplicates collapse
    coords: np.ndarray        # (N, 2) int64 (x, y), duplicates kept

    @property
    def fixation_count(self) -> int:
        return len(self.coords)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    def multiplicity(self) -> np.ndarray:
        """(H, W) float64 fixation counts per pixel."""
        m = np.zeros(self.grid.shape)
        np.add.at(m, (self.coords[:, 1], self.coords[:, 0]), 1.0)
        return m


@dataclass
class DensityMap:
    grid: np.ndarray          # (H, W) float64, >= 0, sums to 1

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape


def fixation_map_from_points(points, height: int, width: int) -> FixationMap:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    xy = round_half_away(pts)
    inside = (xy[:, 0] >= 0) & (xy[:, 0] < width) & (xy[:, 1] >= 0) & (xy[:, 1] < height)
    if not inside.all():
        log.debug(f"[MAPS] dropped {int((~inside).sum())} out-of-bounds fixations")
    xy = xy[inside]
    if len(xy) == 0:
        raise ValueError("no fixations: no point falls inside the grid")
    grid = np.zeros((height, width), dtype=np.uint8)
    grid[xy[:, 1], xy[:, 0]] = 1
    return FixationMap(grid, xy)


def blur_map(m: np.ndarray, sigma: float, truncate: float = TRUNCATE) -> np.ndarray:
    """Isotropic Gaussian blur, kernel cut at truncate*sigma, symmetric-reflect borders."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("blur_map: non-finite input")
    return gaussian_filter(m, sigma=sigma, mode="reflect", truncate=truncate)


def normalize(m: np.ndarray) -> np.ndarray:
    s = float(m.sum())
    if s <= 0:
        raise ValueError("cannot normalize a map with non-positive sum")
    return m / s


def density_from_fixations(fix: FixationMap, sigma: float, truncate: float = TRUNCATE) -> DensityMap:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return DensityMap(normalize(np.clip(blur_map(fix.grid, sigma, truncate), 0.0, None)))


def ground_truth(points, height: int, width: int, sigma: float,
                 truncate: float = TRUNCATE) -> Tuple[FixationMap, DensityMap]:
    """Fixation + density pair for gaze point(s); points are clamped onto the grid first."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2).copy()
    pts[:, 0] = np.clip(pts[:, 0], 0, width - 1)
    pts[:, 1] = np.clip(pts[:, 1], 0, height - 1)
    fix = fixation_map_from_points(pts, height, width)
    return fix, density_from_fixations(fix, sigma, truncate)

# ==================== CENTER PRIOR ====================

@dataclass
class CenterPrior:
    mean: np.ndarray          # (2,) (x, y) px
    cov: np.ndarray           # (2, 2) px^2
    grid: np.ndarray          # (H, W) sums to 1

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    def _unnormalized(self, x, y) -> np.ndarray:
        inv = np.linalg.inv(self.cov)
        dx = np.asarray(x, dtype=np.float64) - self.mean[0]
        dy = np.asarray(y, dtype=np.float64) - self.mean[1]
        q = inv[0, 0] * dx * dx + (inv[0, 1] + inv[1, 0]) * dx * dy + inv[1, 1] * dy * dy
        return np.exp(-0.5 * q)

    def pdf(self, x, y) -> np.ndarray:
        """Rasterised density at arbitrary (x, y), on the same scale as `grid`."""
        h, w = self.shape
        yy, xx = np.mgrid[0:h, 0:w]
        return self._unnormalized(x, y) / self._unnormalized(xx, yy).sum()

    @classmethod
    def from_params(cls, mean, cov, height: int, width: int) -> "CenterPrior":
        mean = np.asarray(mean, dtype=np.float64).reshape(2)
        cov = np.asarray(cov, dtype=np.float64).reshape(2, 2)
        cov = 0.5 * (cov + cov.T)
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError(f"degenerate covariance: {cov.tolist()}")
        prior = cls(mean, cov, np.zeros((height, width)))
        yy, xx = np.mgrid[0:height, 0:width]
        prior.grid = normalize(prior._unnormalized(xx, yy))
        return prior

    def save(self, path: Path):
        with open(path, "wb") as fh:
            for arr in (self.mean, self.cov, self.grid):
                write_block(fh, arr)

    @classmethod
    def load(cls, path: Path) -> "CenterPrior":
        buf = Path(path).read_bytes()
        mean, off = decode_array(buf, 0)
        cov, off = decode_array(buf, off)
        grid, _ = decode_array(buf, off)
        return cls(mean.astype(np.float64), cov.astype(np.float64), grid.astype(np.float64))


def fit_center_prior(train_gaze: Sequence, height: int, width: int, ridge: float = 1.0) -> CenterPrior:
    """Maximum-likelihood Gaussian over training gaze, plus ridge*I, rasterised onto H x W."""
    pts = np.asarray(train_gaze, dtype=np.float64).reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) < 2:
        raise ValueError(f"center prior needs >= 2 gaze points, got {len(pts)}")
    mean = pts.mean(axis=0)
    cov = np.cov(pts.T, bias=True) + ridge * np.eye(2)
    prior = CenterPrior.from_params(mean, cov, height, width)
    log.info(f"[PRIOR] fitted on {len(pts)} points: mean=({mean[0]:.1f}, {mean[1]:.1f}) "
             f"std=({np.sqrt(cov[0, 0]):.1f}, {np.sqrt(cov[1, 1]):.1f})")
    return prior


def uniform_map(height: int, width: int) -> np.ndarray:
    return np.full((height, width), 1.0 / (height * width))


def save_map(path: Path, m: np.ndarray):
    write_array(path, np.asarray(m, dtype=np.float32))


def load_map(path: Path, expect_shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    m = read_array(path).astype(np.float64)
    if expect_shape is not None and m.shape != tuple(expect_shape):
        raise ValueError(f"{path}: map shape {m.shape} != expected {tuple(expect_shape)}")
    return m
