# tests/test_alignment.py
import numpy as np
import pytest

from egogaze.alignment import (
    aggregate_imu_per_frame, align_gaze_to_frames, downscale_frames, ingest_recording, nearest_frame, rescale_gaze,
)
from egogaze.app_models import IngestCfg
from egogaze.recording import ImuSample, RawStreams

MS = 1_000_000


class TestAlignGaze:
    def test_identity_assignment(self):
        ft = np.array([0, 33, 66]) * MS
        stream = [(t, float(i), 2.0 * i) for i, t in enumerate(ft)]
        np.testing.assert_array_equal(align_gaze_to_frames(stream, ft), [[0, 0], [1, 2], [2, 4]])

    def test_nearest_frame(self):
        out = align_gaze_to_frames([(16 * MS, 5.0, 6.0)], [0, 33 * MS])
        np.testing.assert_array_equal(out[0], [5.0, 6.0])
        assert np.isnan(out[1]).all()

    def test_tie_goes_to_earlier_frame(self):
        out = align_gaze_to_frames([(20, 1.0, 1.0)], [0, 40])
        assert np.isfinite(out[0]).all() and np.isnan(out[1]).all()
        assert nearest_frame(np.array([0, 40]), np.array([20])).tolist() == [0]

    def test_collisions_are_averaged(self):
        out = align_gaze_to_frames([(-1, 1.0, 2.0), (1, 3.0, 6.0)], [0, 100])
        np.testing.assert_allclose(out[0], [2.0, 4.0])

    def test_blink_samples_ignored(self):
        out = align_gaze_to_frames([(0, np.nan, np.nan), (100, 1.0, 1.0)], [0, 100])
        assert np.isnan(out[0]).all()

    def test_errors(self):
        with pytest.raises(ValueError, match="no frames"):
            align_gaze_to_frames([(0, 1.0, 1.0)], [])
        with pytest.raises(ValueError, match="unsorted timestamps"):
            align_gaze_to_frames([(0, 1.0, 1.0)], [10, 5])
        with pytest.raises(ValueError, match="unsorted timestamps"):
            align_gaze_to_frames([(9, 1.0, 1.0), (3, 1.0, 1.0)], [0, 10])

    def test_permutation_stable(self):
        rng = np.random.default_rng(4)
        ft = np.arange(20, dtype=np.int64) * 33 * MS
        t = np.sort(rng.integers(0, 20 * 33 * MS, 200))
        stream = np.column_stack([t, rng.uniform(0, 100, (200, 2))])
        shuffled = stream[rng.permutation(200)]
        resorted = shuffled[np.argsort(shuffled[:, 0], kind="stable")]
        np.testing.assert_array_equal(align_gaze_to_frames(stream, ft), align_gaze_to_frames(resorted, ft))

    def test_max_gap(self):
        out = align_gaze_to_frames([(0, 1.0, 1.0), (400, 2.0, 2.0)], [0, 1000], max_gap_ns=100)
        np.testing.assert_array_equal(out[0], [1.0, 1.0])
        assert np.isnan(out[1]).all()


class TestAggregateImu:
    def _s(self, t, v):
        return ImuSample(t, (v, v, v), (v, v, v))

    def test_constant_stream(self):
        ft = np.array([0, 10, 20])
        out = aggregate_imu_per_frame([self._s(t, 2.5) for t in range(-4, 25)], ft)
        np.testing.assert_allclose(out, 2.5)

    def test_mean_of_bucket(self):
        out = aggregate_imu_per_frame([self._s(-1, 1.0), self._s(1, 3.0), self._s(10, 7.0)], [0, 10])
        np.testing.assert_allclose(out[0], 2.0)
        np.testing.assert_allclose(out[1], 7.0)

    def test_empty_bucket_copies_neighbour(self):
        out = aggregate_imu_per_frame([self._s(0, 1.0), self._s(10, 4.0)], [0, 10, 20])
        np.testing.assert_allclose(out[2], out[1])

    def test_empty_stream_is_all_missing(self):
        assert np.isnan(aggregate_imu_per_frame([], [0, 10])).all()


class TestDownscale:
    def test_default_resolution(self):
        frames = np.zeros((1, 1408, 1408, 3), np.uint8)
        out, g = downscale_frames(frames, (224, 224), np.array([[704.0, 704.0], [1407.0, 0.0]]))
        assert out.shape == (1, 224, 224, 3)
        np.testing.assert_allclose(g[0], [112.0, 112.0])
        assert 223.8 < g[1, 0] < 224.0 and g[1, 1] == 0.0

    def test_identity(self):
        frames = np.random.default_rng(0).integers(0, 256, (2, 8, 8, 3), dtype=np.uint8)
        out, g = downscale_frames(frames, (8, 8), np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(out, frames)
        np.testing.assert_array_equal(g, [[3.0, 4.0]])

    def test_errors(self):
        frames = np.zeros((1, 8, 8, 3), np.uint8)
        with pytest.raises(ValueError, match="positive"):
            downscale_frames(frames, (0, 4))
        with pytest.raises(ValueError, match="larger"):
            downscale_frames(frames, (16, 16))

    def test_clamp_survives_float32(self):
        g = rescale_gaze(np.array([[10.0, 10.0]]), (10, 10), (5, 5)).astype(np.float32)
        assert g[0, 0] < 5 and g[0, 1] < 5

    def test_nan_rows_stay_nan(self):
        assert np.isnan(rescale_gaze(np.array([[np.nan, np.nan]]), (10, 10), (5, 5))).all()


class TestIngest:
    def test_off_sensor_gaze_flagged(self):
        raw = RawStreams(
            path_id="x", direction="forward",
            frame_timestamps=np.array([0, 10, 20], np.int64),
            frames=np.zeros((3, 16, 16, 3), np.uint8),
            gaze_timestamps=np.array([0, 10, 20], np.int64),
            gaze_xy=np.array([[4.0, 4.0], [20.0, 4.0], [8.0, 8.0]]),
        )
        rec = ingest_recording(raw, IngestCfg(size=(8, 8)))
        assert rec.gaze_missing.tolist() == [False, True, False]
        np.testing.assert_allclose(rec.gaze_points[[0, 2]], [[2.0, 2.0], [4.0, 4.0]])
        assert np.isnan(rec.imu_per_frame).all()
        assert rec.frames.shape == (3, 8, 8, 3)
