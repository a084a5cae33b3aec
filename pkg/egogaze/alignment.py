# egogaze/alignment.py
"""
Sensor alignment onto the RGB frame clock.

- gaze: nearest frame timestamp, earlier frame on ties, mean per frame
- IMU:  nearest frame bucket, component-wise mean, empty buckets copy the
        nearest non-empty frame
- frames: bilinear downscale, gaze rescaled into the new pixel grid
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from egogaze.app_models import IngestCfg
from egogaze.recording import ImuSample, RawStreams, Recording

log = logging.getLogger("egogaze.align")

ArrayLike = Union[np.ndarray, Sequence]


def _check_frames(frame_timestamps: ArrayLike) -> np.ndarray:
    ft = np.asarray(frame_timestamps, dtype=np.int64).reshape(-1)
    if ft.size == 0:
        raise ValueError("no frames")
    if np.any(np.diff(ft) <= 0):
        raise ValueError("unsorted timestamps: frame timestamps must be strictly increasing")
    return ft


def nearest_frame(frame_timestamps: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Index of the frame closest to each t; the earlier frame wins exact ties."""
    t = np.asarray(t, dtype=np.int64)
    right = np.searchsorted(frame_timestamps, t, side="left")
    right = np.clip(right, 0, len(frame_timestamps) - 1)
    left = np.clip(right - 1, 0, len(frame_timestamps) - 1)
    d_left = np.abs(t - frame_timestamps[left])
    d_right = np.abs(frame_timestamps[right] - t)
    return np.where(d_left <= d_right, left, right)


def _split_stream(stream, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """(timestamps int64, values float64) from a list of rows or an (N, 1+width) array."""
    if isinstance(stream, np.ndarray):
        arr = stream.reshape(-1, 1 + width)
        return arr[:, 0].astype(np.int64), arr[:, 1:].astype(np.float64)
    rows = list(stream)
    if not rows:
        return np.zeros(0, np.int64), np.zeros((0, width))
    if isinstance(rows[0], ImuSample):
        return (np.array([s.timestamp for s in rows], dtype=np.int64),
                np.array([s.as_vector() for s in rows], dtype=np.float64))
    return (np.array([int(r[0]) for r in rows], dtype=np.int64),
            np.array([r[1:] for r in rows], dtype=np.float64).reshape(-1, width))


def align_gaze_to_frames(gaze_stream: ArrayLike, frame_timestamps: ArrayLike,
                         max_gap_ns: Optional[int] = None) -> np.ndarray:
    """
    gaze_stream: rows of (timestamp_ns, x, y), sorted by timestamp.
    Returns (T, 2) float64 per-frame gaze; NaN rows are frames with no sample.
    """
    ft = _check_frames(frame_timestamps)
    gt, xy = _split_stream(gaze_stream, 2)
    return _align_gaze(gt, xy, ft, max_gap_ns)


def _align_gaze(gt: np.ndarray, xy: np.ndarray, ft: np.ndarray, max_gap_ns: Optional[int]) -> np.ndarray:
    out = np.full((len(ft), 2), np.nan)
    if gt.size == 0:
        log.warning("[ALIGN] empty gaze stream; every frame flagged missing")
        return out
    if np.any(np.diff(gt) < 0):
        raise ValueError("unsorted timestamps: gaze stream is not sorted")

    keep = np.all(np.isfinite(xy), axis=1)
    idx = nearest_frame(ft, gt)
    if max_gap_ns is not None:
        keep &= np.abs(gt - ft[idx]) <= max_gap_ns
    idx, xy = idx[keep], xy[keep]

    sums = np.zeros((len(ft), 2))
    counts = np.zeros(len(ft))
    np.add.at(sums, idx, xy)
    np.add.at(counts, idx, 1.0)
    hit = counts > 0
    out[hit] = sums[hit] / counts[hit, None]
    log.debug(f"[ALIGN] gaze: {int(keep.sum())}/{len(gt)} samples -> {int(hit.sum())}/{len(ft)} frames")
    return out


def aggregate_imu_per_frame(imu_stream, frame_timestamps: ArrayLike) -> np.ndarray:
    """
    imu_stream: list of ImuSample (or (N, 7) array t, ax, ay, az, gx, gy, gz).
    Returns (T, 6) float64; all-NaN when the stream is empty.
    """
    ft = _check_frames(frame_timestamps)
    out = np.full((len(ft), 6), np.nan)
    it, vals = _split_stream(imu_stream, 6)
    if it.size == 0:
        log.warning("[ALIGN] empty IMU stream; every frame flagged missing-IMU")
        return out
    if np.any(np.diff(it) < 0):
        raise ValueError("unsorted timestamps: IMU stream is not sorted")

    idx = nearest_frame(ft, it)
    sums = np.zeros((len(ft), 6))
    counts = np.zeros(len(ft))
    np.add.at(sums, idx, vals)
    np.add.at(counts, idx, 1.0)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled, None]

    empty = np.flatnonzero(~filled)
    if empty.size:
        donors = np.flatnonzero(filled)
        out[empty] = out[donors[nearest_frame(ft[donors], ft[empty])]]
    return out


def rescale_gaze(gaze: np.ndarray, src_hw: Tuple[int, int], dst_hw: Tuple[int, int]) -> np.ndarray:
    """Scale (x, y) by (W/W0, H/H0) and clamp into [0, W) x [0, H); NaN rows stay NaN."""
    (h0, w0), (h, w) = src_hw, dst_hw
    g = np.asarray(gaze, dtype=np.float64).reshape(-1, 2) * np.array([w / w0, h / h0])
    # float32 upper bound so the clamp survives storage in gaze.f32
    x_max = float(np.nextafter(np.float32(w), np.float32(0)))
    y_max = float(np.nextafter(np.float32(h), np.float32(0)))
    g[:, 0] = np.clip(g[:, 0], 0.0, x_max)
    g[:, 1] = np.clip(g[:, 1], 0.0, y_max)
    return g


def downscale_frames(frames: np.ndarray, target: Tuple[int, int],
                     gaze: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Bilinear resize of a (T, H0, W0, 3) uint8 sequence to target (H, W).
    Returns (frames, gaze) with gaze rescaled when given, else None.
    """
    h, w = int(target[0]), int(target[1])
    if h <= 0 or w <= 0:
        raise ValueError(f"target size must be positive, got {target}")
    frames = np.asarray(frames, dtype=np.uint8)
    h0, w0 = frames.shape[1:3]
    if h0 < h or w0 < w:
        raise ValueError(f"cannot downscale {h0}x{w0} to larger {h}x{w}")
    if (h0, w0) == (h, w):
        resized = frames.copy()
    else:
        resized = np.stack([
            np.asarray(Image.fromarray(f).resize((w, h), Image.BILINEAR), dtype=np.uint8) for f in frames
        ]) if len(frames) else np.zeros((0, h, w, 3), np.uint8)
    new_gaze = rescale_gaze(gaze, (h0, w0), (h, w)) if gaze is not None else None
    return resized, new_gaze


def ingest_recording(raw: RawStreams, cfg: IngestCfg = IngestCfg(), recording_id: str = "") -> Recording:
    """Align, aggregate and downscale raw device streams into a stored-resolution Recording."""
    ft = _check_frames(raw.frame_timestamps)
    gaze = _align_gaze(np.asarray(raw.gaze_timestamps, dtype=np.int64).reshape(-1),
                       np.asarray(raw.gaze_xy, dtype=np.float64).reshape(-1, 2),
                       ft, cfg.max_gap_ns)
    h0, w0 = raw.frames.shape[1:3]
    outside = np.isfinite(gaze).all(axis=1) & (
        (gaze[:, 0] < 0) | (gaze[:, 0] >= w0) | (gaze[:, 1] < 0) | (gaze[:, 1] >= h0))
    if outside.any():
        log.info(f"[INGEST] {raw.path_id}: {int(outside.sum())} frames with off-sensor gaze flagged missing")
        gaze[outside] = np.nan
    imu = aggregate_imu_per_frame(raw.imu, ft)
    frames, gaze = downscale_frames(raw.frames, tuple(cfg.size), gaze)
    rec = Recording(
        path_id=raw.path_id,
        direction=raw.direction,
        frame_timestamps=ft,
        frames=frames,
        gaze_points=gaze,
        imu_per_frame=imu,
        source=raw.source,
        recording_id=recording_id,
        frame_format=cfg.frame_format,
    )
    log.info(f"[INGEST] {rec.recording_id}: {len(rec)} frames, "
             f"{int((~rec.gaze_missing).sum())} with gaze, {h0}x{w0} -> {rec.height}x{rec.width}")
    return rec
