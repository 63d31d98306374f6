import numpy as np
import pytest

from models.geometry import PointPattern, Region, region_from_rects
from models.surface import KernelSpec
from services import smooth
from services.surfaces import integrate, integrate_window
from utils.errors import DomainError, InsufficientDataError


class TestRegionIntegral:

    def test_empty_pattern(self, window):
        assert smooth.smoothed_region_integral(PointPattern.empty(), KernelSpec(0.1), Region.whole(window)) == 0.0

    def test_narrow_kernel_keeps_mass(self, window):
        pattern = PointPattern(np.array([[0.5, 0.5], [0.3, 0.6]]))
        value = smooth.smoothed_region_integral(pattern, KernelSpec(0.01), Region.whole(window))
        assert value == pytest.approx(2.0, abs=1e-9)

    def test_mass_leaks_near_the_border(self, window):
        pattern = PointPattern(np.array([[0.0, 0.5]]))
        value = smooth.smoothed_region_integral(pattern, KernelSpec(0.05), Region.whole(window))
        assert value == pytest.approx(0.5, abs=1e-6)

    def test_additive_over_parts(self, window):
        pattern = PointPattern(np.array([[0.45, 0.55], [0.7, 0.2]]))
        kernel = KernelSpec(0.2)
        left = region_from_rects([[0.0, 0.0, 0.5, 1.0]], window)
        right = left.complement()
        total = smooth.smoothed_region_integral(pattern, kernel, Region.whole(window))
        parts = smooth.smoothed_region_integral(pattern, kernel, left) + \
            smooth.smoothed_region_integral(pattern, kernel, right)
        assert parts == pytest.approx(total, rel=1e-12)

    def test_matches_quadrature_of_smoothed_surface(self, window, grid):
        pattern = PointPattern(np.array([[0.45, 0.55], [0.7, 0.2], [0.1, 0.9]]))
        kernel = KernelSpec(0.15)
        region = region_from_rects([[0.25, 0.25, 0.75, 0.75]], window)
        surface = smooth.smoothed_surface(pattern, kernel)
        assert integrate(surface, region, grid) == pytest.approx(
            smooth.smoothed_region_integral(pattern, kernel, region), abs=5e-3)

    def test_far_tail_is_not_cancelled(self, window):
        region = region_from_rects([[0.9, 0.0, 1.0, 1.0]], window)
        masses = smooth.rectangle_masses(np.array([[0.0, 0.5]]), (0.05, 0.05), region)
        assert 0.0 < masses[0] < 1e-60


class TestBandwidths:

    def test_rule(self):
        assert smooth.bandwidth_rule(1) == pytest.approx(10.0)
        assert smooth.bandwidth_rule(500) < smooth.bandwidth_rule(100)
        with pytest.raises(DomainError):
            smooth.bandwidth_rule(0)

    def test_scott_needs_two_points(self):
        with pytest.raises(InsufficientDataError):
            smooth.scott_bandwidth(PointPattern(np.array([[0.5, 0.5]])))

    def test_scott_rejects_coincident_points(self):
        with pytest.raises(InsufficientDataError):
            smooth.scott_bandwidth(PointPattern(np.array([[0.5, 0.5], [0.5, 0.5]])))


class TestBaselineDensity:

    def test_integrates_to_one(self, window, grid, rng):
        pattern = PointPattern(rng.uniform(size=(50, 2)))
        baseline = smooth.baseline_density(pattern, window, grid)
        assert integrate_window(baseline, grid) == pytest.approx(1.0, abs=1e-9)

    def test_explicit_bandwidths(self, window, grid):
        pattern = PointPattern(np.array([[0.5, 0.5]]))
        baseline = smooth.baseline_density(pattern, window, grid, bandwidths=(0.1, 0.2))
        assert baseline.bandwidths == (0.1, 0.2)

    def test_points_outside_window(self, window, grid):
        with pytest.raises(DomainError):
            smooth.baseline_density(PointPattern(np.array([[0.5, 0.5], [1.5, 0.5]])), window, grid)
