# egogaze/sampling.py
"""
Clip sampling and path-level train/test splits.

A clip is clip_len frames taken at stride window/clip_len from a window of
`window` consecutive frames; the query frame is the clip's last frame.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Literal, Tuple

import numpy as np

from egogaze.recording import Recording

log = logging.getLogger("egogaze.sampling")


@dataclass(frozen=True)
class ClipWindow:
    """Index-only clip; frames are gathered from the recording on demand."""
    recording_id: str
    path_id: str
    window_start: int
    frame_indices: Tuple[int, ...]     # absolute frame indices, strictly increasing
    query_index: int                   # position inside frame_indices
    gaze_target: Tuple[float, float]   # (x, y) px at the query frame

    @property
    def query_frame(self) -> int:
        return self.frame_indices[self.query_index]


@dataclass
class ClipSample:
    frames: np.ndarray                 # (T, H, W, 3) uint8
    query_index: int
    gaze_target: Tuple[float, float]
    source_recording: str
    window_start: int
    frame_indices: Tuple[int, ...] = ()

    @property
    def clip_len(self) -> int:
        return len(self.frames)

    @property
    def query_frame(self) -> np.ndarray:
        return self.frames[self.query_index]


def clip_offsets(window: int = 64, clip_len: int = 16) -> np.ndarray:
    """Relative frame indices {0, s, 2s, ..., (clip_len-1)s}, s = window / clip_len."""
    if clip_len < 1 or window < 1:
        raise ValueError(f"window and clip_len must be positive, got {window}/{clip_len}")
    if window % clip_len:
        raise ValueError(f"window {window} is not divisible by clip_len {clip_len}")
    return np.arange(clip_len) * (window // clip_len)


def sample_clip_windows(rec: Recording, window: int = 64, clip_len: int = 16, hop: int = 16) -> List[ClipWindow]:
    offsets = clip_offsets(window, clip_len)
    if hop < 1:
        raise ValueError(f"hop must be positive, got {hop}")
    n = len(rec)
    if n < window:
        log.warning(f"[CLIPS] {rec.recording_id}: {n} frames < window {window}; no clips")
        return []
    missing = rec.gaze_missing
    out: List[ClipWindow] = []
    dropped = 0
    for start in range(0, n - window + 1, hop):
        idx = start + offsets
        q = int(idx[-1])
        if missing[q]:
            dropped += 1
            continue
        gx, gy = rec.gaze_points[q]
        out.append(ClipWindow(rec.recording_id, rec.path_id, start, tuple(int(i) for i in idx),
                              len(idx) - 1, (float(gx), float(gy))))
    if dropped:
        log.info(f"[CLIPS] {rec.recording_id}: dropped {dropped} clips with missing query gaze")
    return out


def materialize(rec: Recording, cw: ClipWindow) -> ClipSample:
    return ClipSample(
        frames=rec.frames[list(cw.frame_indices)],
        query_index=cw.query_index,
        gaze_target=cw.gaze_target,
        source_recording=cw.recording_id,
        window_start=cw.window_start,
        frame_indices=cw.frame_indices,
    )


def sample_clips(rec: Recording, window: int = 64, clip_len: int = 16, hop: int = 16) -> List[ClipSample]:
    return [materialize(rec, cw) for cw in sample_clip_windows(rec, window, clip_len, hop)]

# ==================== SPLITS ====================

@dataclass(frozen=True)
class SplitSpec:
    train_paths: frozenset
    test_paths: frozenset
    seed: int
    ratio: float = 0.70
    rule: str = "test_plus_one"

    def __post_init__(self):
        if self.train_paths & self.test_paths:
            raise ValueError(f"train/test overlap: {sorted(self.train_paths & self.test_paths)}")

    @property
    def all_paths(self) -> frozenset:
        return self.train_paths | self.test_paths

    def side(self, path_id: str) -> str:
        if path_id in self.train_paths:
            return "train"
        if path_id in self.test_paths:
            return "test"
        raise KeyError(f"path {path_id!r} is not part of this split")

    def to_dict(self) -> dict:
        return {"train_paths": sorted(self.train_paths), "test_paths": sorted(self.test_paths),
                "seed": self.seed, "ratio": self.ratio, "rule": self.rule}

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "SplitSpec":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(frozenset(d["train_paths"]), frozenset(d["test_paths"]), int(d["seed"]),
                   float(d.get("ratio", 0.70)), d.get("rule", "test_plus_one"))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def split_sizes(n: int, ratio: float, rule: Literal["test_plus_one", "nearest"] = "test_plus_one") -> Tuple[int, int]:
    """(n_train, n_test). The test_plus_one rule gives 16/9 for 25 paths at 0.70."""
    if rule == "test_plus_one":
        n_test = _round_half_up((1.0 - ratio) * n) + 1
        n_train = n - n_test
    elif rule == "nearest":
        n_train = _round_half_up(ratio * n)
    else:
        raise ValueError(f"unknown split rule {rule!r}")
    n_train = min(max(n_train, 1), n - 1)
    return n_train, n - n_train


def make_split(path_ids: Iterable[str], ratio: float = 0.70, seed: int = 0,
               rule: Literal["test_plus_one", "nearest"] = "test_plus_one") -> SplitSpec:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    ids = sorted(set(str(p) for p in path_ids))
    if len(ids) < 2:
        raise ValueError(f"need at least 2 paths to split, got {len(ids)}")
    n_train, n_test = split_sizes(len(ids), ratio, rule)
    perm = np.random.default_rng(seed).permutation(len(ids))
    train = frozenset(ids[i] for i in perm[:n_train])
    test = frozenset(ids[i] for i in perm[n_train:])
    log.info(f"[SPLIT] {len(ids)} paths -> {n_train} train / {n_test} test (seed={seed}, rule={rule})")
    return SplitSpec(train, test, seed, ratio, rule)
