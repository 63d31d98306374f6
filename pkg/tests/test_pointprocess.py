import math

import numpy as np
import pytest

from models.geometry import PointPattern
from models.process import PoissonProcess
from models.surface import ConstantSurface, GridSurface, LogLinearIntensity, QuadratureGrid
from services import pointprocess
from utils.errors import DensityZeroError, DomainError, PositivityViolationError, ThinningBoundError


@pytest.fixture
def exp_one_plus_x(window):
    """λ(x, y) = exp(1 + x), con x como superficie de retícula."""
    nodes = QuadratureGrid.regular(window, 64).nodes[:64, 0]
    x = GridSurface(np.tile(nodes, (64, 1)), window)
    return LogLinearIntensity(np.array([1.0, 1.0]), (ConstantSurface(1.0), x))


class TestConstruction:

    def test_homogeneous(self, window, grid):
        process = pointprocess.homogeneous(3.0, window)
        assert process.is_homogeneous
        assert pointprocess.expected_count(process, grid) == 3.0

    def test_negative_rate(self, window):
        with pytest.raises(DomainError):
            pointprocess.homogeneous(-1.0, window)

    def test_constant_intensity_is_detected(self, window, grid):
        process = pointprocess.from_intensity(ConstantSurface(2.5), window, grid)
        assert process.is_homogeneous
        assert process.rate == 2.5

    def test_bound_from_nodes(self, window, grid, exp_one_plus_x):
        process = pointprocess.from_intensity(exp_one_plus_x, window, grid)
        node_max = exp_one_plus_x.evaluate(grid.nodes).max()
        assert process.upper_bound == pytest.approx(1.05 * node_max)

    def test_bound_must_dominate(self, window, grid, exp_one_plus_x):
        with pytest.raises(DomainError):
            pointprocess.from_intensity(exp_one_plus_x, window, grid, bound=1.0)

    def test_analytic_bound(self, window, exp_one_plus_x):
        process = pointprocess.with_analytic_bound(exp_one_plus_x, window)
        assert process.upper_bound >= exp_one_plus_x.evaluate([[1.0, 0.5]])[0]


class TestSampling:

    def test_homogeneous_counts(self, window, rng):
        process = pointprocess.homogeneous(4.0, window)
        counts = [len(pointprocess.sample(process, rng)) for _ in range(4000)]
        assert np.mean(counts) == pytest.approx(4.0, abs=0.15)

    def test_points_inside_window(self, window, rng, exp_one_plus_x, grid):
        process = pointprocess.from_intensity(exp_one_plus_x, window, grid)
        pattern = pointprocess.sample(process, rng, timestamp=7)
        assert pattern.timestamp == 7
        assert np.all(window.contains(pattern.points))

    def test_thinning_mean_count(self, window, rng, exp_one_plus_x):
        process = pointprocess.with_analytic_bound(exp_one_plus_x, window)
        counts = [len(pointprocess.sample(process, rng)) for _ in range(4000)]
        assert np.mean(counts) == pytest.approx(math.e * (math.e - 1), abs=0.1)

    def test_zero_rate(self, window, rng):
        assert len(pointprocess.sample(pointprocess.homogeneous(0.0, window), rng)) == 0

    def test_bound_violation_is_reported(self, window, exp_one_plus_x):
        process = PoissonProcess(exp_one_plus_x, window, upper_bound=3.0)
        raised = 0
        for seed in range(20):
            try:
                pointprocess.sample(process, np.random.default_rng(seed))
            except ThinningBoundError as exc:
                raised += 1
                assert exc.observed_max > 3.0
        assert raised > 0

    def test_retry_doubles_the_bound(self, window, exp_one_plus_x, caplog):
        process = PoissonProcess(exp_one_plus_x, window, upper_bound=3.0)
        for seed in range(20):
            pattern = pointprocess.sample_with_retry(process, np.random.default_rng(seed), seed)
            assert pattern.timestamp == seed
        assert "Cota de thinning superada" in caplog.text


class TestDensity:

    def test_empty_pattern(self, window, grid):
        assert pointprocess.log_density(pointprocess.homogeneous(3.0, window), PointPattern.empty(), grid) == -2.0

    def test_reuses_integral(self, window, grid, exp_one_plus_x):
        process = pointprocess.from_intensity(exp_one_plus_x, window, grid)
        pattern = PointPattern(np.array([[0.2, 0.2], [0.9, 0.1]]))
        integral = pointprocess.expected_count(process, grid)
        assert pointprocess.log_density(process, pattern, grid, integral=integral) == \
            pytest.approx(pointprocess.log_density(process, pattern, grid))

    def test_inhomogeneous_formula(self, window, grid, exp_one_plus_x):
        process = pointprocess.from_intensity(exp_one_plus_x, window, grid)
        pattern = PointPattern(np.array([[0.5, 0.5]]))
        expected = 1.0 - pointprocess.expected_count(process, grid) + math.log(exp_one_plus_x.evaluate([[0.5, 0.5]])[0])
        assert pointprocess.log_density(process, pattern, grid) == pytest.approx(expected)

    def test_zero_intensity_at_a_point(self, window, grid):
        pattern = PointPattern(np.array([[0.4, 0.6]]))
        with pytest.raises(DensityZeroError) as info:
            pointprocess.log_density(pointprocess.homogeneous(0.0, window), pattern, grid)
        assert info.value.point == (0.4, 0.6)

    def test_ratio_with_null_numerator(self, window, grid):
        pattern = PointPattern(np.array([[0.4, 0.6]]))
        ratio = pointprocess.log_density_ratio(pointprocess.homogeneous(0.0, window),
                                               pointprocess.homogeneous(2.0, window), pattern, grid)
        assert ratio == -math.inf

    def test_ratio_with_null_denominator(self, window, grid):
        pattern = PointPattern(np.array([[0.4, 0.6]]))
        with pytest.raises(PositivityViolationError) as info:
            pointprocess.log_density_ratio(pointprocess.homogeneous(2.0, window),
                                           pointprocess.homogeneous(0.0, window), pattern, grid, period=5)
        assert info.value.period == 5
        assert info.value.exit_code == 3

    def test_antisymmetric_ratio(self, window, grid, exp_one_plus_x, rng):
        inhomogeneous = pointprocess.from_intensity(exp_one_plus_x, window, grid)
        flat = pointprocess.homogeneous(3.0, window)
        for n in (0, 1, 4, 9):
            pattern = PointPattern(rng.uniform(size=(n, 2))) if n else PointPattern.empty()
            forward = pointprocess.log_density_ratio(inhomogeneous, flat, pattern, grid)
            assert forward == -pointprocess.log_density_ratio(flat, inhomogeneous, pattern, grid)
            assert pointprocess.log_density_ratio(flat, flat, pattern, grid) == 0.0


class TestNormalization:
    """Σ_n e^{-|Ω|}/n! ∫_{Ω^n} f = 1 para la densidad respecto del Poisson unitario."""

    def _total(self, log_empty, log_ratio, area, n_max=50):
        n = np.arange(n_max + 1)
        terms = -area - np.array([math.lgamma(k + 1) for k in n]) + log_empty + n * log_ratio
        return float(np.sum(np.exp(terms)))

    def test_homogeneous(self, window, grid, rng):
        process = pointprocess.homogeneous(5.0, window)
        log_f = np.array([pointprocess.log_density(process, PointPattern(rng.uniform(size=(n, 2))), grid)
                          for n in range(1, 51)])
        log_empty = pointprocess.log_density(process, PointPattern.empty(), grid)
        # f es constante en Ω^n, así que ∫ f = f · |Ω|^n
        np.testing.assert_allclose(np.diff(np.concatenate([[log_empty], log_f])), math.log(5.0), rtol=1e-12)
        log_ratio = log_f[0] - log_empty + math.log(window.area)
        assert self._total(log_empty, log_ratio, window.area) == pytest.approx(1.0, abs=1e-10)

    def test_inhomogeneous(self, window, coarse_grid, exp_one_plus_x):
        process = pointprocess.from_intensity(exp_one_plus_x, window, coarse_grid)
        log_empty = pointprocess.log_density(process, PointPattern.empty(), coarse_grid)
        # f factoriza en los puntos: ∫_{Ω^n} f = f(∅) (∫_Ω f({x}) / f(∅))^n
        single = np.array([pointprocess.log_density(process, PointPattern(node[None, :]), coarse_grid)
                           for node in coarse_grid.nodes])
        log_ratio = math.log(np.sum(coarse_grid.weights * np.exp(single - log_empty)))
        assert self._total(log_empty, log_ratio, window.area) == pytest.approx(1.0, abs=1e-10)
