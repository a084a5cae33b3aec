# tests/test_sampling.py
import numpy as np
import pytest

from egogaze.sampling import (
    SplitSpec, clip_offsets, make_split, materialize, sample_clip_windows, sample_clips, split_sizes,
)
from tests.conftest import make_recording


class TestClipOffsets:
    def test_default_stride(self):
        assert clip_offsets(64, 16).tolist() == list(range(0, 64, 4))

    def test_not_divisible(self):
        with pytest.raises(ValueError, match="divisible"):
            clip_offsets(64, 15)


class TestSampleClips:
    def test_window_starts(self):
        rec = make_recording(n=128, h=8, w=8)
        rec.gaze_points[:] = 1.0
        wins = sample_clip_windows(rec, window=64, clip_len=16, hop=64)
        assert [w.window_start for w in wins] == [0, 64]
        assert len(sample_clip_windows(rec, 64, 16, 16)) == 5

    def test_short_recording_is_empty(self, caplog):
        rec = make_recording(n=63, h=8, w=8)
        assert sample_clips(rec) == []
        assert "no clips" in caplog.text

    def test_indices_inside_window_with_constant_stride(self):
        rec = make_recording(n=100, h=8, w=8)
        rec.gaze_points[:] = 2.0
        for cw in sample_clip_windows(rec, 32, 8, 5):
            idx = np.array(cw.frame_indices)
            assert idx[0] == cw.window_start and idx[-1] < cw.window_start + 32
            assert set(np.diff(idx)) == {4}
            assert cw.query_index == 7 and cw.query_frame == idx[-1]

    def test_missing_query_gaze_dropped_but_context_kept(self):
        rec = make_recording(n=16, h=8, w=8)
        rec.gaze_points[:] = 3.0
        rec.gaze_points[0] = np.nan
        rec.gaze_points[14] = np.nan
        starts = [w.window_start for w in sample_clip_windows(rec, 8, 4, 4)]
        assert starts == [0, 4]

    def test_materialize(self):
        rec = make_recording(n=16, h=8, w=8)
        rec.gaze_points[:] = 3.0
        cw = sample_clip_windows(rec, 8, 4, 8)[1]
        clip = materialize(rec, cw)
        assert clip.clip_len == 4
        np.testing.assert_array_equal(clip.frames, rec.frames[[8, 10, 12, 14]])
        np.testing.assert_array_equal(clip.query_frame, rec.frames[14])
        assert clip.gaze_target == (3.0, 3.0)
        assert clip.source_recording == rec.recording_id


class TestSplit:
    def test_published_protocol_sizes(self):
        spec = make_split([f"p{i:02d}" for i in range(25)], 0.70, seed=0)
        assert (len(spec.train_paths), len(spec.test_paths)) == (16, 9)

    def test_two_paths(self):
        spec = make_split(["a", "b"], 0.70, seed=1)
        assert len(spec.train_paths) == 1 and len(spec.test_paths) == 1

    @pytest.mark.parametrize("n,rule,expected", [(25, "nearest", (18, 7)), (8, "test_plus_one", (5, 3)),
                                                 (10, "test_plus_one", (6, 4)), (3, "nearest", (2, 1))])
    def test_rules(self, n, rule, expected):
        assert split_sizes(n, 0.70, rule) == expected

    def test_deterministic_and_disjoint(self):
        ids = [f"p{i}" for i in range(12)]
        a, b = make_split(ids, 0.7, seed=5), make_split(reversed(ids), 0.7, seed=5)
        assert a == b
        assert not a.train_paths & a.test_paths
        assert a.all_paths == frozenset(ids)

    def test_errors(self):
        with pytest.raises(ValueError, match="ratio"):
            make_split(["a", "b"], 1.0)
        with pytest.raises(ValueError, match="at least 2"):
            make_split(["a"], 0.5)
        with pytest.raises(ValueError, match="overlap"):
            SplitSpec(frozenset({"a"}), frozenset({"a"}), 0)

    def test_save_load(self, tmp_path):
        spec = make_split(["a", "b", "c", "d"], 0.5, seed=2, rule="nearest")
        spec.save(tmp_path / "split.json")
        assert SplitSpec.load(tmp_path / "split.json") == spec
        assert spec.side(sorted(spec.test_paths)[0]) == "test"
        with pytest.raises(KeyError):
            spec.side("zzz")
