# egogaze/recording.py
"""
Recording container and its on-disk layout.

<recording_id>/
    manifest.json        path_id, direction, resolution, frame count, version, timestamps
    frames/000000.jpg    (or .png in lossless mode)
    gaze.f32             (T, 2) pixel coords in stored resolution, NaN = missing
    imu.f32              (T, 6) accel xyz m/s^2, gyro xyz rad/s, NaN = missing
"""

__version__ = "1.0.1"

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from PIL import Image

from egogaze.array_io import read_array, write_array

log = logging.getLogger("egogaze.recording")

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = {1}
_IO_WORKERS = 4


@dataclass(frozen=True)
class ImuSample:
    timestamp: int                  # ns
    accel: tuple                    # (ax, ay, az) m/s^2
    gyro: tuple                     # (gx, gy, gz) rad/s

    def __post_init__(self):
        vals = [self.timestamp, *self.accel, *self.gyro]
        if len(self.accel) != 3 or len(self.gyro) != 3:
            raise ValueError("accel and gyro must be 3-vectors")
        if not np.all(np.isfinite(np.asarray(vals, dtype=np.float64))):
            raise ValueError(f"non-finite IMU sample at t={self.timestamp}")

    def as_vector(self) -> np.ndarray:
        return np.array([*self.accel, *self.gyro], dtype=np.float64)


@dataclass(eq=False)
class Recording:
    path_id: str
    direction: Literal["forward", "reverse"]
    frame_timestamps: np.ndarray      # (T,) int64 ns
    frames: np.ndarray                # (T, H, W, 3) uint8
    gaze_points: np.ndarray           # (T, 2) float32
    imu_per_frame: np.ndarray         # (T, 6) float32
    source: Literal["real", "synthetic"] = "real"
    recording_id: str = ""
    frame_format: Literal["jpg", "png"] = "jpg"

    def __post_init__(self):
        if not self.recording_id:
            self.recording_id = f"{self.path_id}_{self.direction}"
        self.frame_timestamps = np.asarray(self.frame_timestamps, dtype=np.int64)
        self.gaze_points = np.asarray(self.gaze_points, dtype=np.float32)
        self.imu_per_frame = np.asarray(self.imu_per_frame, dtype=np.float32)
        self.validate()

    def __len__(self) -> int:
        return len(self.frame_timestamps)

    @property
    def height(self) -> int:
        return int(self.frames.shape[1])

    @property
    def width(self) -> int:
        return int(self.frames.shape[2])

    @property
    def gaze_missing(self) -> np.ndarray:
        return ~np.all(np.isfinite(self.gaze_points), axis=1)

    def validate(self):
        n = len(self.frame_timestamps)
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"direction must be forward|reverse, got {self.direction!r}")
        if n and np.any(np.diff(self.frame_timestamps) <= 0):
            raise ValueError("frame timestamps must be strictly increasing")
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        for name, arr, width in (("frames", self.frames, None),
                                 ("gaze", self.gaze_points, 2),
                                 ("imu", self.imu_per_frame, 6)):
            if len(arr) != n:
                raise ValueError(f"length mismatch: {name} has {len(arr)} entries for {n} frames")
            if width is not None and (arr.ndim != 2 or arr.shape[1] != width):
                raise ValueError(f"{name} must be (T, {width}), got {arr.shape}")
        ok = ~self.gaze_missing
        g = self.gaze_points[ok]
        if len(g) and (np.any(g < 0) or np.any(g[:, 0] >= self.width) or np.any(g[:, 1] >= self.height)):
            raise ValueError("gaze point outside [0, W) x [0, H)")


@dataclass
class RawStreams:
    """Unaligned sensor streams as they come off the device (or the generator)."""
    path_id: str
    direction: Literal["forward", "reverse"]
    frame_timestamps: np.ndarray      # (T,) int64 ns
    frames: np.ndarray                # (T, H0, W0, 3) uint8
    gaze_timestamps: np.ndarray       # (G,) int64 ns
    gaze_xy: np.ndarray               # (G, 2) source-resolution px, NaN = blink
    imu: List[ImuSample] = field(default_factory=list)
    source: Literal["real", "synthetic"] = "real"

# ==================== DISK I/O ====================

def _frame_name(i: int, fmt: str) -> str:
    return f"{i:06d}.{fmt}"


def _write_frame(args):
    path, frame, fmt, quality = args
    img = Image.fromarray(frame)
    if fmt == "jpg":
        img.save(path, format="JPEG", quality=quality)
    else:
        img.save(path, format="PNG")


def _read_frame(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_recording(rec: Recording, root: Path, jpeg_quality: int = 95) -> Path:
    """Write `rec` under root/<recording_id>/ and return that directory."""
    rec.validate()
    out = Path(root) / rec.recording_id
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    fmt = rec.frame_format
    for stale in frames_dir.glob("*"):
        stale.unlink()
    jobs = [(frames_dir / _frame_name(i, fmt), f, fmt, jpeg_quality) for i, f in enumerate(rec.frames)]
    with ThreadPoolExecutor(max_workers=_IO_WORKERS, thread_name_prefix="frames-") as pool:
        list(pool.map(_write_frame, jobs))
    write_array(out / "gaze.f32", rec.gaze_points)
    write_array(out / "imu.f32", rec.imu_per_frame)
    manifest = {
        "version": FORMAT_VERSION,
        "recording_id": rec.recording_id,
        "path_id": rec.path_id,
        "direction": rec.direction,
        "source": rec.source,
        "resolution": [rec.height, rec.width],
        "frame_count": len(rec),
        "frame_format": fmt,
        "frame_timestamps_ns": [int(t) for t in rec.frame_timestamps],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    log.info(f"[REC] Saved {rec.recording_id}: {len(rec)} frames ({fmt}) -> {out}")
    return out


def read_manifest(rec_dir: Path) -> dict:
    path = Path(rec_dir) / "manifest.json"
    if not path.exists():
        raise ValueError(f"missing manifest: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"corrupt manifest {path}: {e}") from e
    version = manifest.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise ValueError(f"unsupported version {version!r} in {path}")
    for key in ("path_id", "direction", "resolution", "frame_count", "frame_timestamps_ns"):
        if key not in manifest:
            raise ValueError(f"corrupt manifest {path}: missing key {key!r}")
    return manifest


def load_recording(rec_dir: Path) -> Recording:
    rec_dir = Path(rec_dir)
    manifest = read_manifest(rec_dir)
    n = int(manifest["frame_count"])
    fmt = manifest.get("frame_format", "jpg")
    timestamps = np.asarray(manifest["frame_timestamps_ns"], dtype=np.int64)
    if len(timestamps) != n:
        raise ValueError(f"length mismatch: {len(timestamps)} timestamps for {n} frames")
    frame_paths = sorted((rec_dir / "frames").glob(f"*.{fmt}"))
    if len(frame_paths) != n:
        raise ValueError(f"length mismatch: {len(frame_paths)} frame files for {n} frames")
    gaze = read_array(rec_dir / "gaze.f32")
    imu = read_array(rec_dir / "imu.f32")
    for name, arr in (("gaze", gaze), ("imu", imu)):
        if len(arr) != n:
            raise ValueError(f"length mismatch: {name}.f32 has {len(arr)} rows for {n} frames")
    with ThreadPoolExecutor(max_workers=_IO_WORKERS, thread_name_prefix="frames-") as pool:
        frames = list(pool.map(_read_frame, frame_paths))
    frames = np.stack(frames) if frames else np.zeros((0, *manifest["resolution"], 3), np.uint8)
    h, w = manifest["resolution"]
    if frames.shape[1:3] != (h, w):
        raise ValueError(f"frames are {frames.shape[1:3]}, manifest says {(h, w)}")
    return Recording(
        path_id=manifest["path_id"],
        direction=manifest["direction"],
        frame_timestamps=timestamps,
        frames=frames,
        gaze_points=gaze,
        imu_per_frame=imu,
        source=manifest.get("source", "real"),
        recording_id=manifest.get("recording_id", rec_dir.name),
        frame_format=fmt,
    )


def list_recordings(root: Path) -> List[Path]:
    """Recording directories (those holding a manifest.json) under root, sorted."""
    return sorted(p.parent for p in Path(root).glob("*/manifest.json"))


def load_dataset(root: Path, path_ids: Optional[set] = None) -> List[Recording]:
    recs = []
    for rec_dir in list_recordings(root):
        if path_ids is not None and read_manifest(rec_dir)["path_id"] not in path_ids:
            continue
        recs.append(load_recording(rec_dir))
    return recs


def recordings_equal(a: Recording, b: Recording, frames_atol: int = 0) -> bool:
    if (a.path_id, a.direction, a.source, a.recording_id) != (b.path_id, b.direction, b.source, b.recording_id):
        return False
    if not np.array_equal(a.frame_timestamps, b.frame_timestamps):
        return False
    if not (np.array_equal(a.gaze_points, b.gaze_points, equal_nan=True)
            and np.array_equal(a.imu_per_frame, b.imu_per_frame, equal_nan=True)):
        return False
    if a.frames.shape != b.frames.shape:
        return False
    diff = np.abs(a.frames.astype(np.int16) - b.frames.astype(np.int16))
    return int(diff.max(initial=0)) <= frames_atol


@dataclass
class DatasetSummary:
    recordings: int
    paths: int
    frames: int
    frames_with_gaze: int
    seconds: float
    sources: Dict[str, int] = field(default_factory=dict)

    @property
    def gaze_coverage(self) -> float:
        return self.frames_with_gaze / self.frames if self.frames else float("nan")

    @property
    def hours(self) -> float:
        return self.seconds / 3600.0

    def as_dict(self) -> dict:
        return {"recordings": self.recordings, "paths": self.paths, "frames": self.frames,
                "frames_with_gaze": self.frames_with_gaze, "gaze_coverage": self.gaze_coverage,
                "seconds": self.seconds, "hours": self.hours, "sources": dict(self.sources)}


def summarize_dataset(root: Path, path_ids: Optional[set] = None) -> DatasetSummary:
    """Counts from manifests and gaze.f32 only; frames are not decoded."""
    rec_dirs = list_recordings(root)
    paths, sources = set(), {}
    frames = with_gaze = 0
    seconds = 0.0
    n = 0
    for rec_dir in rec_dirs:
        manifest = read_manifest(rec_dir)
        if path_ids is not None and manifest["path_id"] not in path_ids:
            continue
        n += 1
        paths.add(manifest["path_id"])
        src = manifest.get("source", "real")
        sources[src] = sources.get(src, 0) + 1
        ts = np.asarray(manifest["frame_timestamps_ns"], dtype=np.int64)
        frames += len(ts)
        with_gaze += int(np.isfinite(read_array(rec_dir / "gaze.f32")).all(axis=1).sum())
        if len(ts) > 1:
            # the last frame lasts one median frame period
            seconds += float(ts[-1] - ts[0] + np.median(np.diff(ts))) / 1e9
    if n == 0:
        raise ValueError(f"no recordings under {root}")
    summary = DatasetSummary(n, len(paths), frames, with_gaze, seconds, sources)
    log.info(f"[REC] {root}: {n} recordings, {len(paths)} paths, {frames} frames, "
             f"gaze on {summary.gaze_coverage:.1%}, {summary.hours:.3f} h")
    return summary

# ==================== RAW STREAMS (ingest input) ====================
# <raw_dir>/
#     meta.json               {"path_id": ..., "direction": ...}
#     frames/*.jpg|png        any resolution, sorted by name
#     frame_timestamps.csv    timestamp_ns
#     gaze.csv                timestamp_ns,x,y   (source px, empty/NaN = blink)
#     imu.csv                 timestamp_ns,ax,ay,az,gx,gy,gz

_IMU_COLS = ["ax", "ay", "az", "gx", "gy", "gz"]


def load_raw_streams(raw_dir: Path) -> RawStreams:
    raw_dir = Path(raw_dir)
    meta_path = raw_dir / "meta.json"
    if not meta_path.exists():
        raise ValueError(f"missing meta.json in {raw_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    ts = pd.read_csv(raw_dir / "frame_timestamps.csv", dtype={"timestamp_ns": np.int64})
    frame_paths = sorted(p for p in (raw_dir / "frames").iterdir() if p.suffix.lower() in (".jpg", ".jpeg", ".png"))
    if len(frame_paths) != len(ts):
        raise ValueError(f"length mismatch: {len(frame_paths)} frame files, {len(ts)} frame timestamps")
    with ThreadPoolExecutor(max_workers=_IO_WORKERS, thread_name_prefix="frames-") as pool:
        frames = list(pool.map(_read_frame, frame_paths))

    gaze = pd.read_csv(raw_dir / "gaze.csv", dtype={"timestamp_ns": np.int64, "x": np.float64, "y": np.float64},
                       float_precision="round_trip")
    imu_path = raw_dir / "imu.csv"
    imu: List[ImuSample] = []
    if imu_path.exists():
        imu_df = pd.read_csv(imu_path, dtype={"timestamp_ns": np.int64}, float_precision="round_trip")
        for row in imu_df.itertuples(index=False):
            imu.append(ImuSample(int(row.timestamp_ns), (row.ax, row.ay, row.az), (row.gx, row.gy, row.gz)))

    log.info(f"[INGEST] {raw_dir.name}: {len(frame_paths)} frames, {len(gaze)} gaze, {len(imu)} imu samples")
    return RawStreams(
        path_id=str(meta["path_id"]),
        direction=meta.get("direction", "forward"),
        frame_timestamps=ts["timestamp_ns"].to_numpy(dtype=np.int64),
        frames=np.stack(frames) if frames else np.zeros((0, 1, 1, 3), np.uint8),
        gaze_timestamps=gaze["timestamp_ns"].to_numpy(dtype=np.int64),
        gaze_xy=gaze[["x", "y"]].to_numpy(dtype=np.float64),
        imu=imu,
        source=meta.get("source", "real"),
    )


def save_raw_streams(raw: RawStreams, raw_dir: Path, frame_format: str = "png") -> Path:
    """Inverse of load_raw_streams; used to stage synthetic device dumps."""
    raw_dir = Path(raw_dir)
    frames_dir = raw_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(frames_dir / _frame_name(i, frame_format), f, frame_format, 95) for i, f in enumerate(raw.frames)]
    with ThreadPoolExecutor(max_workers=_IO_WORKERS, thread_name_prefix="frames-") as pool:
        list(pool.map(_write_frame, jobs))
    meta = {"path_id": raw.path_id, "direction": raw.direction, "source": raw.source}
    (raw_dir / "meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    pd.DataFrame({"timestamp_ns": np.asarray(raw.frame_timestamps, np.int64)}).to_csv(
        raw_dir / "frame_timestamps.csv", index=False)
    g = np.asarray(raw.gaze_xy, dtype=np.float64).reshape(-1, 2)
    pd.DataFrame({"timestamp_ns": np.asarray(raw.gaze_timestamps, np.int64), "x": g[:, 0], "y": g[:, 1]}).to_csv(
        raw_dir / "gaze.csv", index=False, float_format="%.17g")
    imu = pd.DataFrame([[s.timestamp, *s.accel, *s.gyro] for s in raw.imu], columns=["timestamp_ns", *_IMU_COLS])
    imu.to_csv(raw_dir / "imu.csv", index=False, float_format="%.17g")
    return raw_dir
