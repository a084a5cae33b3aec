# egogaze/app_models.py
"""
Configuration Models v1.2.0

One pydantic model per concern, all JSON-serialisable so every run can
echo its configuration into checkpoints and run manifests.

STRUCTURE:
- SceneCfg / IngestCfg / SplitCfg   -> dataset pipeline
- GazeMapCfg / MetricConfig         -> ground truth and evaluation
- ModelConfig (EncoderCfg, PostCfg) -> EgoCampusNet
- TrainConfig                       -> optimisation
- RunManifest                       -> provenance written next to artifacts
"""

__version__ = "1.2.0"  # Added distribution_target to MetricConfig

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

log = logging.getLogger("egogaze.config")

CFG_DIR = Path(__file__).resolve().parent / "config"

# ==================== DATASET PIPELINE ====================

class SceneCfg(BaseModel):
    """Synthetic traversal parameters"""
    duration_s: float = 10.0
    fps: float = 30.0
    native_size: Tuple[int, int] = (448, 448)   # (H, W) rendered before downscale
    size: Tuple[int, int] = (224, 224)          # (H, W) stored
    n_attractors: int = Field(2, ge=1, le=3)
    attractor_radius: float = 0.05              # fraction of min(H, W)
    attractor_weight: float = Field(0.7, ge=0.0, le=1.0)
    gaze_noise_px: float = 6.0                  # std of smooth noise, stored-resolution px
    noise_cutoff_hz: float = 0.5
    forward_speed_px: float = 3.0               # background scroll per frame, native px
    sway_amplitude_px: float = 12.0
    sway_hz: float = 0.4
    imu_rate_hz: float = 1000.0
    imu_noise: float = 0.02
    gaze_jitter_ms: float = 2.0
    blink_fraction: float = Field(0.0, ge=0.0, lt=1.0)  # gaze samples dropped as NaN
    frame_format: Literal["jpg", "png"] = "jpg"

    @field_validator("duration_s")
    @classmethod
    def _positive_duration(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("duration must be positive")
        return v


class IngestCfg(BaseModel):
    size: Tuple[int, int] = (224, 224)
    frame_format: Literal["jpg", "png"] = "jpg"
    jpeg_quality: int = 95
    max_gap_ns: Optional[int] = None  # None = assign every gaze sample


class SplitCfg(BaseModel):
    ratio: float = 0.70
    seed: int = 0
    rule: Literal["test_plus_one", "nearest"] = "test_plus_one"

    @field_validator("ratio")
    @classmethod
    def _open_unit(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {v}")
        return v


class ClipCfg(BaseModel):
    window: int = 64
    clip_len: int = 16
    hop: int = 16

# ==================== GROUND TRUTH / METRICS ====================

class GazeMapCfg(BaseModel):
    sigma: Optional[float] = None      # None -> H / 16
    truncate: float = 4.0
    prior_ridge: float = 1.0           # px^2 added to the fitted covariance

    def sigma_for(self, height: int) -> float:
        return self.sigma if self.sigma is not None else height / 16.0


class MetricConfig(BaseModel):
    epsilon: float = Field(1e-7, gt=0.0)
    std_mode: Literal["population"] = "population"
    distribution_target: Literal["density", "fixations"] = "density"

# ==================== MODEL ====================

class EncoderCfg(BaseModel):
    feature_channels: int = 96   # channels of S' and I
    cardinality: int = 8
    depth: int = 2               # residual blocks per branch
    stem_channels: int = 64
    image_width: int = 1536      # bottleneck width, query-image branch
    st_width: int = 1280         # bottleneck width, spatio-temporal branch
    decoder_width: int = 48


class PostCfg(BaseModel):
    blur_sigma: float = 6.0
    prior_weight: float = 0.3

    @field_validator("prior_weight")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("prior weight must be >= 0")
        return v


class ModelConfig(BaseModel):
    """
    EgoCampusNet configuration.

    Parameter count is a function of backbone + encoder widths; the defaults
    land near 12.8M (x3d), 42.5M (slow_r50), 6.1M (none).
    """
    backbone: Literal["x3d", "slow_r50", "none"] = "x3d"
    pretrained_backbone: bool = True
    clip_len: int = 16
    input_size: Tuple[int, int] = (224, 224)
    encoder: EncoderCfg = EncoderCfg()
    post: PostCfg = PostCfg()
    notes: str = ""

    @model_validator(mode="after")
    def _check_shapes(self):
        h, w = self.input_size
        stride = 32 if self.backbone != "none" else 4
        if h % stride or w % stride:
            raise ValueError(f"input_size {self.input_size} must be divisible by {stride}")
        if self.encoder.image_width % self.encoder.cardinality or self.encoder.st_width % self.encoder.cardinality:
            raise ValueError("bottleneck widths must be divisible by cardinality")
        return self

# ==================== TRAINING ====================

class TrainConfig(BaseModel):
    learning_rate: float = Field(0.002, ge=0.0)   # 0 allowed: frozen-run sanity check
    optimizer: Literal["adam"] = "adam"
    loss: Literal["mse"] = "mse"
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(16, ge=1)
    seed: int = 0
    val_paths: int = Field(1, ge=0)     # training paths held out for validation NSS
    num_workers: int = 0
    device: str = "cpu"
    max_steps_per_epoch: Optional[int] = None
    clips: ClipCfg = ClipCfg()
    gaze: GazeMapCfg = GazeMapCfg()


class PlotCfg(BaseModel):
    alpha: float = 0.5
    cmap: str = "jet"
    marker_size: float = 12.0
    dpi: int = 100

# ==================== PROVENANCE ====================

class RunManifest(BaseModel):
    command: str
    config_hash: str = ""
    seed: Optional[int] = None
    inputs: List[str] = []
    outputs: List[str] = []
    tool_version: str = ""
    started: str = ""
    finished: str = ""

# ==================== HELPERS ====================

M = TypeVar("M", bound=BaseModel)


def config_hash(*cfgs: BaseModel) -> str:
    """sha256 of the canonical JSON form (sorted keys); several configs hash as a list"""
    dumps = [c.model_dump(mode="json") for c in cfgs]
    canon = json.dumps(dumps[0] if len(dumps) == 1 else dumps, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def load_json_model(path: Optional[Path], model_cls: Type[M]) -> M:
    """
    Load a config file into `model_cls`.

    Missing path -> defaults. Invalid content -> ValueError (an experiment
    must never silently run on defaults when its config is broken).
    """
    if path is None:
        return model_cls()
    path = Path(path)
    try:
        txt = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        log.info(f"[CONFIG] {path.name} not found; using {model_cls.__name__} defaults")
        return model_cls()
    # Fast path first (JSON text)
    try:
        return model_cls.model_validate_json(txt)
    except ValidationError:
        pass
    try:
        data = json.loads(txt) if txt.strip() else {}
        return model_cls.model_validate(data)
    except (json.JSONDecodeError, ValidationError) as e:
        raise ValueError(f"invalid {model_cls.__name__} config {path}: {e}") from e


def default_config_path(name: str) -> Path:
    return CFG_DIR / f"{name}.json"


def save_json_model(path: Path, cfg: BaseModel):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.model_dump(mode="json"), indent=2), encoding="utf-8")
