# tests/test_filters_logger.py
import csv

import numpy as np

from egogaze.filters import OnePoleLPFBank, moving_average, smooth_noise
from egogaze.logger import CsvLogger


class TestOnePoleLPFBank:
    def test_constant_input_passes(self):
        bank = OnePoleLPFBank()
        bank.configure(100.0, [1.0, 5.0])
        out = bank.filter_sequence(np.full((50, 2), 3.0))
        np.testing.assert_allclose(out, 3.0)

    def test_zero_cutoff_is_passthrough(self):
        bank = OnePoleLPFBank()
        bank.configure(100.0, [0.0])
        x = np.random.default_rng(0).normal(size=(20, 1))
        np.testing.assert_allclose(bank.filter_sequence(x), x)

    def test_step_response_is_monotone(self):
        bank = OnePoleLPFBank()
        bank.configure(100.0, [2.0])
        x = np.zeros((40, 1))
        x[1:] = 1.0
        y = bank.filter_sequence(x)[:, 0]
        assert np.all(np.diff(y) >= 0)
        assert 0 < y[-1] < 1


class TestSmoothNoise:
    def test_std_and_mean(self):
        n = smooth_noise(np.random.default_rng(1), 500, 2, 30.0, 0.5, 4.0)
        assert n.shape == (500, 2)
        np.testing.assert_allclose(n.std(axis=0), 4.0, rtol=1e-9)
        np.testing.assert_allclose(n.mean(axis=0), 0.0, atol=1e-9)

    def test_lowpassed_is_smoother_than_white(self):
        rng = np.random.default_rng(2)
        n = smooth_noise(rng, 1000, 1, 30.0, 0.5, 1.0)[:, 0]
        assert np.mean(np.abs(np.diff(n))) < 0.5


class TestMovingAverage:
    def test_values(self):
        np.testing.assert_allclose(moving_average([1, 2, 3, 4], 2), [1.5, 2.5, 3.5])

    def test_short_input_unchanged(self):
        np.testing.assert_allclose(moving_average([1, 2], 5), [1, 2])


class TestCsvLogger:
    def test_rows_and_numpy_scalars(self, tmp_path):
        p = tmp_path / "sub" / "log.csv"
        with CsvLogger(p, ["step", "loss", "note"]) as out:
            out.write({"step": np.int64(3), "loss": np.float64(0.25)})
            out.write_many([{"step": 4, "loss": 0.125, "note": "x"}])
        rows = list(csv.reader(p.open()))
        assert rows == [["step", "loss", "note"], ["3", "0.25", ""], ["4", "0.125", "x"]]

    def test_flush_makes_rows_visible(self, tmp_path):
        p = tmp_path / "curve.csv"
        log = CsvLogger(p, ["step", "loss"])
        log.write({"step": 0, "loss": 1.5})
        log.flush()
        assert p.read_text().splitlines() == ["step,loss", "0,1.5"]
        log.close()
