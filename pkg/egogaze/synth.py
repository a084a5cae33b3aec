# egogaze/synth.py
"""
Synthetic traversal generator.

Renders a scrolling blurred texture (forward egomotion with lateral sway)
with 1-3 bright moving blobs. Gaze is a convex mix of the image center and
the blob nearest the center plus low-passed noise, so a model that looks at
the frames can beat the center prior. IMU is the analytic camera motion
plus white noise at imu_rate_hz.

Raw streams go through the same align / aggregate / downscale path as real
device dumps.
"""

__version__ = "1.1.0"  # blink_fraction, per-path seeds from SeedSequence

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from egogaze.alignment import ingest_recording
from egogaze.app_models import IngestCfg, SceneCfg
from egogaze.filters import smooth_noise
from egogaze.recording import ImuSample, RawStreams, Recording, save_recording

log = logging.getLogger("egogaze.synth")

T0_NS = 1_000_000_000
PX_TO_M = 0.005          # native px of sway -> metres of head displacement
STEP_HZ = 1.8            # walking cadence (vertical bob)
GRAVITY = 9.81

_BLOB_COLORS = np.array([[255, 40, 40], [40, 230, 255], [255, 240, 40]], dtype=np.float64)


@dataclass
class SceneTrace:
    """Ground truth of a rendered scene, native resolution."""
    attractors: np.ndarray     # (T, K, 2) px
    target: np.ndarray         # (T, 2) nearest-to-center attractor per frame
    gaze: np.ndarray           # (T, 2) px, before jitter/blinks
    center: Tuple[float, float]


def _texture(rng: np.random.Generator, h: int, w: int, blur: float) -> np.ndarray:
    tex = gaussian_filter(rng.random((h, w, 3)), sigma=(blur, blur, 0), mode="wrap")
    lo = tex.min(axis=(0, 1), keepdims=True)
    hi = tex.max(axis=(0, 1), keepdims=True)
    return 40.0 + 130.0 * (tex - lo) / np.maximum(hi - lo, 1e-12)


def _attractor_paths(rng: np.random.Generator, scene: SceneCfg, t: np.ndarray) -> np.ndarray:
    h0, w0 = scene.native_size
    k = scene.n_attractors
    base = np.array([w0 / 2, h0 / 2]) + rng.uniform(-0.25, 0.25, (k, 2)) * np.array([w0, h0])
    amp = rng.uniform(0.10, 0.20, (k, 1)) * min(h0, w0)
    freq = rng.uniform(0.1, 0.4, (k, 1))
    phase = rng.uniform(0, 2 * np.pi, (k, 2))
    arg = 2 * np.pi * freq * t[None, :]                                    # (K, T)
    x = base[:, :1] + amp * np.cos(arg + phase[:, :1])
    y = base[:, 1:] + amp * np.sin(arg + phase[:, 1:])
    return np.stack([x, y], axis=-1).transpose(1, 0, 2)                      # (T, K, 2)


def _paint_blob(img: np.ndarray, cx: float, cy: float, r: float, color: np.ndarray):
    h, w = img.shape[:2]
    y0, y1 = max(0, int(cy - 2 * r)), min(h, int(cy + 2 * r) + 1)
    x0, x1 = max(0, int(cx - 2 * r)), min(w, int(cx + 2 * r) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xx - cx, yy - cy)
    m = np.clip((1.3 * r - d) / (0.3 * r), 0.0, 1.0)[..., None]
    img[y0:y1, x0:x1] = img[y0:y1, x0:x1] * (1 - m) + color * m


def imu_signal(t: np.ndarray, scene: SceneCfg, sway_sign: float = 1.0) -> np.ndarray:
    """Noise-free (N, 6) accel/gyro of the simulated head at times t (s)."""
    w = 2 * np.pi * scene.sway_hz
    a = scene.sway_amplitude_px * PX_TO_M * sway_sign
    ws = 2 * np.pi * STEP_HZ
    out = np.zeros((len(t), 6))
    out[:, 0] = -a * w * w * np.sin(w * t)
    out[:, 1] = GRAVITY + 0.3 * np.sin(ws * t)
    out[:, 3] = 0.05 * np.cos(ws * t)
    out[:, 4] = a * w * np.cos(w * t)
    return out


def render_scene(scene: SceneCfg, seed: int, path_id: str = "synth_000",
                 direction: str = "forward") -> Tuple[RawStreams, SceneTrace]:
    tex_rng, attr_rng, gaze_rng, imu_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    h0, w0 = scene.native_size
    h, w = scene.size
    n = int(round(scene.duration_s * scene.fps))
    if n < 1:
        raise ValueError(f"duration {scene.duration_s}s at {scene.fps} fps yields no frames")
    period_ns = int(round(1e9 / scene.fps))
    frame_ts = T0_NS + np.arange(n, dtype=np.int64) * period_ns
    t = (frame_ts - frame_ts[0]) / 1e9
    sway_sign = 1.0 if direction == "forward" else -1.0

    # background
    sway_pad = int(np.ceil(scene.sway_amplitude_px)) + 1
    scroll = scene.forward_speed_px * (n - 1)
    tex = _texture(tex_rng, h0 + int(np.ceil(scroll)) + 2, w0 + 2 * sway_pad, max(1.0, 0.02 * w0))
    if direction == "reverse":
        tex = tex[:, ::-1]
    sway = sway_sign * scene.sway_amplitude_px * np.sin(2 * np.pi * scene.sway_hz * t)

    attractors = _attractor_paths(attr_rng, scene, t)
    radius = scene.attractor_radius * min(h0, w0)

    frames = np.empty((n, h0, w0, 3), dtype=np.uint8)
    for i in range(n):
        y = int(round(scene.forward_speed_px * (n - 1 - i)))
        x = int(round(sway_pad + sway[i]))
        img = tex[y:y + h0, x:x + w0].copy()
        for k in range(scene.n_attractors):
            _paint_blob(img, attractors[i, k, 0], attractors[i, k, 1], radius, _BLOB_COLORS[k])
        frames[i] = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    # gaze
    center = np.array([w0 / 2.0, h0 / 2.0])
    nearest = np.argmin(np.linalg.norm(attractors - center, axis=-1), axis=1)
    target = attractors[np.arange(n), nearest]
    noise_std = scene.gaze_noise_px * (w0 / w)
    noise = smooth_noise(gaze_rng, n, 2, scene.fps, scene.noise_cutoff_hz, noise_std) if noise_std > 0 else np.zeros((n, 2))
    alpha = scene.attractor_weight
    gaze = (1 - alpha) * center + alpha * target + noise
    gaze[:, 0] = np.clip(gaze[:, 0], 0.0, w0 - 1e-3)
    gaze[:, 1] = np.clip(gaze[:, 1], 0.0, h0 - 1e-3)

    jitter_ns = min(scene.gaze_jitter_ms * 1e6, 0.45 * period_ns)
    gaze_ts = frame_ts + np.rint(gaze_rng.uniform(-jitter_ns, jitter_ns, n)).astype(np.int64)
    gaze_xy = gaze.copy()
    if scene.blink_fraction > 0:
        gaze_xy[gaze_rng.random(n) < scene.blink_fraction] = np.nan

    # IMU
    step_ns = int(round(1e9 / scene.imu_rate_hz))
    imu_ts = np.arange(frame_ts[0] - period_ns // 2, frame_ts[-1] + period_ns // 2 + 1, step_ns, dtype=np.int64)
    imu_vals = imu_signal((imu_ts - frame_ts[0]) / 1e9, scene, sway_sign)
    imu_vals += imu_rng.normal(0.0, scene.imu_noise, imu_vals.shape)
    imu = [ImuSample(int(ts), tuple(v[:3]), tuple(v[3:])) for ts, v in zip(imu_ts, imu_vals)]

    raw = RawStreams(
        path_id=path_id,
        direction=direction,
        frame_timestamps=frame_ts,
        frames=frames,
        gaze_timestamps=gaze_ts,
        gaze_xy=gaze_xy,
        imu=imu,
        source="synthetic",
    )
    return raw, SceneTrace(attractors, target, gaze, (float(center[0]), float(center[1])))


def synthesize_raw_streams(scene: SceneCfg, seed: int, path_id: str = "synth_000",
                           direction: str = "forward") -> RawStreams:
    return render_scene(scene, seed, path_id, direction)[0]


def generate_synthetic_recording(scene: SceneCfg, seed: int, path_id: str = "synth_000",
                                 direction: str = "forward") -> Recording:
    raw = synthesize_raw_streams(scene, seed, path_id, direction)
    cfg = IngestCfg(size=scene.size, frame_format=scene.frame_format)
    return ingest_recording(raw, cfg)


def path_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_synthetic_dataset(root: Path, n_paths: int, seed: int, scene: Optional[SceneCfg] = None,
                               workers: int = 1) -> List[str]:
    """Write n_paths recordings plus dataset.json under root; returns the path ids."""
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    scene = scene or SceneCfg()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(f"path_{i:03d}", "forward" if i % 2 == 0 else "reverse", path_seed(seed, i)) for i in range(n_paths)]

    def _one(job):
        pid, direction, s = job
        rec = generate_synthetic_recording(scene, s, pid, direction)
        save_recording(rec, root)
        return {"recording_id": rec.recording_id, "path_id": pid, "direction": direction, "seed": s,
                "frames": len(rec)}

    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="synth-") as pool:
        entries = list(pool.map(_one, jobs))

    index = {"seed": seed, "n_paths": n_paths, "scene": scene.model_dump(mode="json"), "recordings": entries}
    (root / "dataset.json").write_text(json.dumps(index, indent=2), encoding="utf-8")
    log.info(f"[SYNTH] {n_paths} recordings -> {root} (seed={seed})")
    return [e["path_id"] for e in entries]
