# tests/test_training.py
import numpy as np
import pandas as pd
import pytest
import torch

from egogaze import training
from egogaze.app_models import PostCfg
from egogaze.gaze_maps import fit_center_prior
from egogaze.model_ecn import build_model, read_checkpoint_header
from egogaze.sampling import SplitSpec, sample_clip_windows
from egogaze.synth import generate_synthetic_recording
from egogaze.training import ClipDataset, build_clip_index, hold_out_paths, mse_loss, overfit, train
from tests.conftest import make_recording


@pytest.fixture(scope="module")
def three_paths(tiny_scene, tiny_recording):
    return [tiny_recording] + [generate_synthetic_recording(tiny_scene, seed=10 + i, path_id=f"path_{i:03d}",
                                                            direction="reverse" if i % 2 else "forward")
                               for i in (1, 2)]


def _split(train_paths, test_paths=("path_999",)) -> SplitSpec:
    return SplitSpec(frozenset(train_paths), frozenset(test_paths), seed=0)


class TestHelpers:
    def test_hold_out_is_deterministic(self):
        paths = [f"p{i}" for i in range(6)]
        a = hold_out_paths(paths, 2, seed=4)
        assert a == hold_out_paths(reversed(paths), 2, seed=4)
        fit, val = a
        assert len(val) == 2 and not set(fit) & set(val)
        assert sorted(fit + val) == sorted(paths)

    def test_hold_out_disabled_when_too_few(self):
        assert hold_out_paths(["a"], 1, seed=0) == (["a"], [])
        assert hold_out_paths(["a", "b"], 0, seed=0) == (["a", "b"], [])

    def test_mse_scaled_by_area(self):
        pred = torch.full((1, 4, 4), 1 / 16)
        target = torch.zeros(1, 4, 4)
        target[0, 0, 0] = 1.0
        # scaled: pred == 1 everywhere, target == 16 at one pixel
        assert mse_loss(pred, target).item() == pytest.approx((15 ** 2 + 15) / 16)

    def test_dataset_items(self, tiny_recording, tiny_train_cfg):
        windows = build_clip_index([tiny_recording], tiny_train_cfg.clips)
        ds = ClipDataset([tiny_recording], windows, sigma=4.0)
        item = ds[0]
        assert item["clip"].shape == (3, 16, 64, 64)
        assert item["target"].sum().item() == pytest.approx(1.0, abs=1e-5)
        assert item["query_index"] == 15
        assert item["frame_id"] == f"{tiny_recording.recording_id}:{windows[0].query_frame:06d}"

    def test_dataset_target_uses_truncate(self, tiny_recording, tiny_train_cfg):
        windows = build_clip_index([tiny_recording], tiny_train_cfg.clips)[:1]
        full = ClipDataset([tiny_recording], windows, sigma=4.0)[0]["target"]
        short = ClipDataset([tiny_recording], windows, sigma=4.0, truncate=1.0)[0]["target"]
        assert int((short > 0).sum()) <= 9 * 9 < int((full > 0).sum())


class TestOverfit:
    def test_memorises_eight_clips(self, tiny_scene, tiny_model_cfg):
        scene = tiny_scene.model_copy(update={"attractor_weight": 1.0, "gaze_noise_px": 0.0})
        rec = generate_synthetic_recording(scene, seed=5, path_id="path_fit")
        windows = sample_clip_windows(rec, window=64, clip_len=16, hop=8)
        assert len(windows) == 8
        ds = ClipDataset([rec], windows, sigma=4.0)

        torch.manual_seed(0)
        cfg = tiny_model_cfg.model_copy(update={"post": PostCfg(blur_sigma=3.0, prior_weight=0.05)})
        prior = fit_center_prior(rec.gaze_points, 64, 64)
        model = build_model(cfg, prior)
        losses = overfit(model, ds, steps=200, lr=0.005)

        assert len(losses) == 200
        assert losses[-1] <= 0.1 * losses[0]
        smoothed = pd.Series(losses).rolling(10).mean().dropna().to_numpy()
        assert smoothed[-1] < smoothed[0]
        assert np.all(np.diff(smoothed) <= 0.05 * smoothed[0])

        batch = next(iter(torch.utils.data.DataLoader(ds, batch_size=len(ds))))
        with torch.no_grad():
            pred = model(batch["clip"], 15).numpy()
        for p, (gx, gy) in zip(pred, batch["gaze"].numpy()):
            y, x = np.unravel_index(np.argmax(p), p.shape)
            assert np.hypot(x - gx, y - gy) <= 10.0


class TestTrain:
    def test_zero_learning_rate_freezes_weights(self, three_paths, tiny_model_cfg, tiny_train_cfg):
        torch.manual_seed(0)
        model = build_model(tiny_model_cfg)
        before = [p.detach().clone() for p in model.parameters()]
        cfg = tiny_train_cfg.model_copy(update={"learning_rate": 0.0, "val_paths": 0})
        train(tiny_model_cfg, three_paths[:2], _split(["path_000", "path_001"]), cfg, model=model)
        for a, b in zip(before, model.parameters()):
            assert torch.equal(a, b.detach())

    def test_same_seed_same_run(self, three_paths, tiny_model_cfg, tiny_train_cfg):
        split = _split(["path_000", "path_001", "path_002"])
        a = train(tiny_model_cfg, three_paths, split, tiny_train_cfg)
        b = train(tiny_model_cfg, three_paths, split, tiny_train_cfg)
        assert a.val_paths == b.val_paths and len(a.val_paths) == 1
        assert [r["loss"] for r in a.loss_curve] == pytest.approx([r["loss"] for r in b.loss_curve], rel=1e-6)
        assert a.best_val_nss == pytest.approx(b.best_val_nss, abs=1e-3)

    def test_artifacts(self, tmp_path, three_paths, tiny_model_cfg, tiny_train_cfg):
        cfg = tiny_train_cfg.model_copy(update={"epochs": 2, "val_paths": 0})
        res = train(tiny_model_cfg, three_paths, _split(["path_000", "path_001"]), cfg, out_dir=tmp_path)
        assert res.best_epoch == 1
        curve = pd.read_csv(tmp_path / "loss_curve.csv")
        assert list(curve.columns) == ["epoch", "step", "loss"]
        assert len(curve) == len(res.loss_curve) and curve["step"].is_monotonic_increasing
        assert len(pd.read_csv(tmp_path / "epochs.csv")) == 2
        header, _, _ = read_checkpoint_header(res.checkpoint)
        assert header["extra"]["fit_paths"] == ["path_000", "path_001"]
        assert header["center_prior"] is not None

    def test_non_finite_loss(self, monkeypatch, three_paths, tiny_model_cfg, tiny_train_cfg):
        monkeypatch.setattr(training, "mse_loss", lambda pred, target: pred.sum() * float("nan"))
        with pytest.raises(FloatingPointError, match="epoch 0 step 0"):
            train(tiny_model_cfg, three_paths, _split(["path_000"]), tiny_train_cfg)

    def test_empty_split(self, three_paths, tiny_model_cfg, tiny_train_cfg):
        with pytest.raises(ValueError, match="empty split"):
            train(tiny_model_cfg, three_paths, _split(["path_777"]), tiny_train_cfg)

    def test_resolution_mismatch(self, tiny_model_cfg, tiny_train_cfg):
        rec = make_recording(n=80, h=16, w=16)
        with pytest.raises(ValueError, match="model input"):
            train(tiny_model_cfg, [rec], _split(["p"]), tiny_train_cfg)
