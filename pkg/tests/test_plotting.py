# tests/test_plotting.py
import numpy as np
import pytest
from PIL import Image

from egogaze.app_models import PlotCfg
from egogaze.logger import CsvLogger
from egogaze.plotting import (
    MARKER_COLOR, montage_tiles, overlay, plot_recording, save_loss_curve, save_montage, save_overlay,
)


def _frame(h=32, w=32):
    return np.zeros((h, w, 3), dtype=np.uint8)


def _peak(h=32, w=32, y=10, x=20):
    m = np.zeros((h, w))
    m[y, x] = 1.0
    return m


class TestOverlay:
    def test_marker_at_gaze(self):
        out = overlay(_frame(), _peak(), gaze=(5.4, 7.6), cfg=PlotCfg(marker_size=4))
        assert out.dtype == np.uint8 and out.shape == (32, 32, 3)
        assert (out[8, 5] == MARKER_COLOR).all()
        assert (out[8, 3:8] == MARKER_COLOR).all()
        assert (out[6:11, 5] == MARKER_COLOR).all()
        assert not (out[8, 9] == MARKER_COLOR).all()

    def test_no_marker_without_gaze(self):
        plain = overlay(_frame(), _peak(), gaze=None)
        assert np.array_equal(plain, overlay(_frame(), _peak(), gaze=(np.nan, np.nan)))
        assert not (plain == MARKER_COLOR).all(axis=-1).any()

    def test_heatmap_blended(self):
        cfg = PlotCfg(alpha=0.5, cmap="gray")
        out = overlay(_frame(), _peak(), cfg=cfg)
        assert out[10, 20].tolist() == [128, 128, 128]
        assert out[0, 0].tolist() == [0, 0, 0]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            overlay(_frame(), np.zeros((16, 16)))

    def test_frame_must_be_rgb(self):
        with pytest.raises(ValueError, match="H, W, 3"):
            overlay(np.zeros((32, 32)), np.zeros((32, 32)))

    def test_saved_png_matches_array(self, tmp_path):
        path = save_overlay(tmp_path / "o.png", _frame(), _peak(), gaze=(3, 3))
        img = np.asarray(Image.open(path).convert("RGB"))
        assert np.array_equal(img, overlay(_frame(), _peak(), gaze=(3, 3)))


class TestMontage:
    def test_tiles_row_major(self):
        frames = [_frame(), np.full((32, 32, 3), 255, dtype=np.uint8)]
        maps = {"a": [_peak(), _peak()], "b": [_peak(), _peak()], "c": [_peak(), _peak()]}
        tiles = montage_tiles(frames, maps)
        assert len(tiles) == 6
        # first row from the black frame, second row from the white one
        assert tiles[0][0, 0].tolist() < tiles[3][0, 0].tolist()
        assert all(np.array_equal(tiles[0], t) for t in tiles[:3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            montage_tiles([_frame()], {"a": [_peak(), _peak()]})

    def test_save_montage(self, tmp_path):
        path = save_montage(tmp_path / "m.png", [_frame()], {"a": [_peak()], "b": [_peak()]}, gaze=[(4, 4)])
        assert path.exists() and path.stat().st_size > 0


class TestFiles:
    def test_loss_curve(self, tmp_path):
        with CsvLogger(tmp_path / "loss_curve.csv", ["epoch", "step", "loss"]) as log:
            log.write_many({"epoch": 0, "step": i, "loss": 10.0 / (i + 1)} for i in range(30))
        path = save_loss_curve(tmp_path / "loss_curve.csv", tmp_path / "loss.png")
        assert Image.open(path).size[0] > 0

    def test_empty_loss_curve(self, tmp_path):
        CsvLogger(tmp_path / "empty.csv", ["epoch", "step", "loss"]).close()
        with pytest.raises(ValueError, match="no loss rows"):
            save_loss_curve(tmp_path / "empty.csv", tmp_path / "loss.png")

    def test_plot_recording_names_and_limit(self, tmp_path):
        frames = np.zeros((5, 32, 32, 3), dtype=np.uint8)
        gaze = np.full((5, 2), 8.0)
        preds = {4: _peak(), 1: _peak(), 3: _peak()}
        written = plot_recording(tmp_path, frames, gaze, preds, limit=2)
        assert [p.name for p in written] == ["000001.png", "000003.png"]
