# tests/conftest.py
import numpy as np
import pytest

from egogaze.app_models import ModelConfig, SceneCfg, TrainConfig, default_config_path, load_json_model
from egogaze.recording import Recording
from egogaze.synth import generate_synthetic_recording


@pytest.fixture(scope="session")
def tiny_scene() -> SceneCfg:
    return load_json_model(default_config_path("scene_tiny"), SceneCfg)


@pytest.fixture(scope="session")
def tiny_model_cfg() -> ModelConfig:
    return load_json_model(default_config_path("model_tiny"), ModelConfig)


@pytest.fixture(scope="session")
def tiny_train_cfg() -> TrainConfig:
    return load_json_model(default_config_path("train_tiny"), TrainConfig)


@pytest.fixture(scope="session")
def tiny_recording(tiny_scene) -> Recording:
    """120 frames at 64x64; shared read-only."""
    return generate_synthetic_recording(tiny_scene, seed=3, path_id="path_000")


def make_recording(n: int = 8, h: int = 16, w: int = 16, seed: int = 0, path_id: str = "p",
                   direction: str = "forward", fmt: str = "png") -> Recording:
    rng = np.random.default_rng(seed)
    gaze = rng.uniform(0, [w - 1, h - 1], (n, 2))
    gaze[1] = np.nan
    return Recording(
        path_id=path_id,
        direction=direction,
        frame_timestamps=1_000 + np.arange(n, dtype=np.int64) * 33_333_333,
        frames=rng.integers(0, 256, (n, h, w, 3), dtype=np.uint8),
        gaze_points=gaze,
        imu_per_frame=rng.normal(size=(n, 6)),
        source="synthetic",
        frame_format=fmt,
    )
