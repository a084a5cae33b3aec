# egogaze/filters.py
import math

import numpy as np


class OnePoleLPFBank:
    """
    Bank of first-order low-pass filters, one per channel.

    y[n] = a*y[n-1] + (1-a)*x[n],  a = exp(-2*pi*fc/rate)
    A cutoff of 0 (or None) passes the channel through.
    """

    def __init__(self):
        self.alpha = np.zeros(0)
        self.state = None

    def configure(self, rate_hz: float, cutoff_list):
        dt = 1.0 / max(1.0, rate_hz)
        self.alpha = np.array([
            math.exp(-2.0 * math.pi * fc * dt) if fc and fc > 0 else 0.0
            for fc in cutoff_list
        ])
        self.state = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.state is None:
            self.state = x.copy()
            return x.copy()
        y = self.alpha * self.state + (1.0 - self.alpha) * x
        self.state = y
        return y

    def filter_sequence(self, xs: np.ndarray) -> np.ndarray:
        """Run the bank over a (T, channels) sequence from a cold state."""
        self.state = None
        return np.stack([self.apply(x) for x in np.asarray(xs, dtype=np.float64)])


def smooth_noise(rng: np.random.Generator, n: int, channels: int, rate_hz: float,
                 cutoff_hz: float, std: float) -> np.ndarray:
    """Low-passed white noise rescaled to the requested per-channel std."""
    bank = OnePoleLPFBank()
    bank.configure(rate_hz, [cutoff_hz] * channels)
    out = bank.filter_sequence(rng.standard_normal((n, channels)))
    out -= out.mean(axis=0, keepdims=True)
    scale = out.std(axis=0, keepdims=True)
    scale[scale == 0] = 1.0
    return out / scale * std


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if window <= 1 or len(x) < window:
        return x.copy()
    return np.convolve(x, np.ones(window) / window, mode="valid")
