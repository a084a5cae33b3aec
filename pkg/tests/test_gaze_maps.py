# tests/test_gaze_maps.py
import numpy as np
import pytest

from egogaze.gaze_maps import (
    CenterPrior, blur_map, density_from_fixations, fit_center_prior, fixation_map_from_points, ground_truth,
    load_map, round_half_away, save_map, uniform_map,
)


def _reflect(i: int, n: int) -> int:
    while not 0 <= i < n:
        i = -i - 1 if i < 0 else 2 * n - 1 - i
    return i


def _delta_density_oracle(x0: int, y0: int, h: int, w: int, sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Truncated Gaussian response to one delta, reflect borders, evaluated term by term."""
    r = int(truncate * sigma + 0.5)
    offs = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (offs / sigma) ** 2)
    k /= k.sum()
    ky = np.zeros(h)
    kx = np.zeros(w)
    for i in range(h):
        for u, wt in zip(offs, k):
            if _reflect(i + u, h) == y0:
                ky[i] += wt
    for j in range(w):
        for v, wt in zip(offs, k):
            if _reflect(j + v, w) == x0:
                kx[j] += wt
    out = np.outer(ky, kx)
    return out / out.sum()


class TestFixationMap:
    def test_round_half_away(self):
        assert round_half_away([2.5, -2.5, 3.49, 0.5]).tolist() == [3, -3, 3, 1]

    def test_single_point(self):
        fix = fixation_map_from_points([(2.4, 3.6)], 8, 8)
        assert fix.grid.sum() == 1 and fix.grid[4, 2] == 1
        assert fix.coords.tolist() == [[2, 4]]

    def test_duplicates(self):
        fix = fixation_map_from_points([(1, 1), (1, 1)], 8, 8)
        assert fix.fixation_count == 2
        assert fix.grid.sum() == 1
        assert fix.multiplicity()[1, 1] == 2.0

    def test_out_of_bounds_only(self):
        with pytest.raises(ValueError, match="no fixations"):
            fixation_map_from_points([(9.0, 1.0), (-3.0, 2.0)], 8, 8)

    def test_nan_points_dropped(self):
        fix = fixation_map_from_points([(np.nan, 1.0), (3.0, 3.0)], 8, 8)
        assert fix.fixation_count == 1

    def test_ground_truth_clamps(self):
        fix, dens = ground_truth((7.9, 8.0), 8, 8, sigma=1.0)
        assert fix.coords.tolist() == [[7, 7]]
        assert abs(dens.grid.sum() - 1) < 1e-12

    def test_ground_truth_truncate(self):
        _, short = ground_truth((16, 16), 32, 32, sigma=2.0, truncate=1.0)
        _, full = ground_truth((16, 16), 32, 32, sigma=2.0)
        ys, xs = np.nonzero(short.grid)
        assert (ys.min(), ys.max(), xs.min(), xs.max()) == (14, 18, 14, 18)
        assert np.count_nonzero(full.grid) > np.count_nonzero(short.grid)
        assert abs(short.grid.sum() - 1) < 1e-12


class TestDensity:
    def test_single_central_fixation(self):
        dens = density_from_fixations(fixation_map_from_points([(16, 12)], 32, 32), 3.0)
        assert np.unravel_index(np.argmax(dens.grid), dens.shape) == (12, 16)
        assert abs(dens.grid.sum() - 1.0) < 1e-6
        assert dens.grid.min() >= 0

    def test_two_far_fixations(self):
        dens = density_from_fixations(fixation_map_from_points([(8, 8), (40, 40)], 48, 48), 2.0).grid
        for x, y in ((8, 8), (40, 40)):
            patch = dens[y - 1:y + 2, x - 1:x + 2]
            assert dens[y, x] == patch.max()

    @pytest.mark.parametrize("x0,y0", [(32, 32), (3, 60)])
    def test_matches_explicit_convolution(self, x0, y0):
        dens = density_from_fixations(fixation_map_from_points([(x0, y0)], 64, 64), 8.0).grid
        np.testing.assert_allclose(dens, _delta_density_oracle(x0, y0, 64, 64, 8.0), atol=1e-6)

    def test_translation_equivariance(self):
        a = density_from_fixations(fixation_map_from_points([(20, 20)], 64, 64), 2.0).grid
        b = density_from_fixations(fixation_map_from_points([(25, 23)], 64, 64), 2.0).grid
        np.testing.assert_allclose(a[10:30, 10:30], b[13:33, 15:35], atol=1e-12)

    def test_sigma_must_be_positive(self):
        fix = fixation_map_from_points([(1, 1)], 4, 4)
        with pytest.raises(ValueError):
            density_from_fixations(fix, 0.0)


class TestBlur:
    def test_constant(self):
        np.testing.assert_allclose(blur_map(np.full((10, 12), 0.7), 2.0), 0.7)

    def test_delta_neighbourhood(self):
        m = np.zeros((15, 15))
        m[7, 7] = 1.0
        out = blur_map(m, 1.0)
        k = np.exp(-0.5 * np.arange(-4, 5) ** 2)
        k /= k.sum()
        np.testing.assert_allclose(out[6:9, 6:9], np.outer(k[3:6], k[3:6]), atol=1e-6)
        assert abs(out.sum() - 1.0) < 1e-6

    def test_semigroup(self):
        m = np.zeros((64, 64))
        m[32, 32] = 1.0
        once = blur_map(m, np.sqrt(2.0 ** 2 + 3.0 ** 2))
        twice = blur_map(blur_map(m, 2.0), 3.0)
        assert np.max(np.abs(once - twice)) < 1e-4

    def test_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            blur_map(np.array([[np.nan, 0.0]]), 1.0)


class TestCenterPrior:
    def test_all_points_at_center(self):
        prior = fit_center_prior(np.tile([32.0, 24.0], (10, 1)), 48, 64, ridge=1.0)
        np.testing.assert_allclose(prior.mean, [32.0, 24.0])
        np.testing.assert_allclose(prior.cov, np.eye(2))
        assert np.unravel_index(np.argmax(prior.grid), prior.shape) == (24, 32)

    def test_mirrored_points(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 64, (50, 2))
        mirrored = np.column_stack([64 - pts[:, 0], pts[:, 1]])
        prior = fit_center_prior(np.vstack([pts, mirrored]), 64, 64)
        assert abs(prior.mean[0] - 32.0) < 1e-9

    def test_recovers_known_gaussian(self):
        rng = np.random.default_rng(1)
        cov = np.array([[100.0, 20.0], [20.0, 50.0]])
        pts = rng.multivariate_normal([100.0, 90.0], cov, size=10_000)
        prior = fit_center_prior(pts, 224, 224, ridge=1.0)
        assert np.all(np.abs(prior.mean - [100.0, 90.0]) < 0.02 * 224)
        np.testing.assert_allclose(prior.cov, cov, rtol=0.10, atol=2.0)

    def test_grid_properties(self):
        prior = CenterPrior.from_params([20.0, 10.0], [[30.0, 5.0], [5.0, 12.0]], 32, 40)
        assert abs(prior.grid.sum() - 1.0) < 1e-12
        assert prior.grid.max() == pytest.approx(float(prior.pdf(20.0, 10.0)))
        np.testing.assert_allclose(prior.cov, prior.cov.T)

    def test_errors(self):
        with pytest.raises(ValueError, match=">= 2"):
            fit_center_prior([[1.0, 1.0]], 8, 8)
        with pytest.raises(ValueError, match="degenerate covariance"):
            CenterPrior.from_params([1.0, 1.0], np.zeros((2, 2)), 8, 8)
        with pytest.raises(ValueError, match="degenerate covariance"):
            fit_center_prior(np.tile([1.0, 1.0], (5, 1)), 8, 8, ridge=0.0)

    def test_persistence(self, tmp_path):
        prior = fit_center_prior([[1.0, 2.0], [5.0, 6.0], [3.0, 1.0]], 8, 10)
        prior.save(tmp_path / "prior.f32")
        back = CenterPrior.load(tmp_path / "prior.f32")
        np.testing.assert_allclose(back.mean, prior.mean, rtol=1e-6)
        np.testing.assert_allclose(back.grid, prior.grid, rtol=1e-6)


class TestMapIO:
    def test_save_load(self, tmp_path):
        m = uniform_map(4, 6)
        save_map(tmp_path / "m.f32", m)
        np.testing.assert_allclose(load_map(tmp_path / "m.f32", (4, 6)), m, rtol=1e-7)
        with pytest.raises(ValueError, match="shape"):
            load_map(tmp_path / "m.f32", (6, 4))
