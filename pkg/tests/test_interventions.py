import math

import numpy as np
import pytest

from models.geometry import PointPattern, region_from_rects
from models.intervention import InterventionSequence
from models.surface import ConstantSurface, QuadratureGrid
from services import interventions
from services.surfaces import integrate, integrate_window
from utils.errors import DegenerateInterventionError, DomainError

UNIFORM = ConstantSurface(1.0)


@pytest.fixture
def lower_left(window):
    return region_from_rects([[0.0, 0.0, 0.5, 0.5]], window, "lower_left")


class TestBuilders:

    def test_homogeneous(self, window):
        h = interventions.homogeneous(3.0, window)
        assert h.expected_count == 3.0
        assert h.label == "homogeneous(h=3)"
        with pytest.raises(DomainError):
            interventions.homogeneous(-0.1, window)

    def test_scaled_baseline(self, grid):
        h = interventions.scaled_baseline(5.0, UNIFORM, grid)
        assert h.expected_count == 5.0
        assert integrate_window(h.intensity, grid) == pytest.approx(5.0)

    def test_baseline_must_be_a_density(self, grid):
        with pytest.raises(DomainError):
            interventions.scaled_baseline(5.0, ConstantSurface(2.0), grid)

    def test_focal_keeps_expected_count(self, grid):
        h = interventions.focal(5.0, UNIFORM, (0.3, 0.7), 50.0, grid)
        assert integrate_window(h.intensity, grid) == pytest.approx(5.0, rel=1e-9)
        values = h.intensity.evaluate([[0.3, 0.7], [0.9, 0.1]])
        assert values[0] > values[1]

    def test_focal_without_precision_is_the_baseline(self, grid):
        h = interventions.focal(5.0, UNIFORM, (0.3, 0.7), 0.0, grid)
        base = interventions.scaled_baseline(5.0, UNIFORM, grid)
        xy = grid.nodes[:10]
        np.testing.assert_allclose(h.intensity.evaluate(xy), base.intensity.evaluate(xy))

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 20.0, 300.0])
    def test_focal_is_continuous_in_precision(self, grid, alpha):
        nodes = grid.nodes[::37]
        near = interventions.focal(5.0, UNIFORM, (0.3, 0.7), alpha, grid).intensity.evaluate(nodes)
        moved = interventions.focal(5.0, UNIFORM, (0.3, 0.7), alpha + 1e-4, grid).intensity.evaluate(nodes)
        np.testing.assert_allclose(moved, near, rtol=1e-3)

    def test_focal_mass_concentrates_around_the_focus(self, window):
        alpha = 400.0
        fine = QuadratureGrid.regular(window, 256)
        h = interventions.focal(5.0, UNIFORM, (0.5, 0.5), alpha, fine)
        inside = np.hypot(fine.nodes[:, 0] - 0.5, fine.nodes[:, 1] - 0.5) <= 3.0 / math.sqrt(alpha)
        share = np.sum(fine.weights[inside] * h.intensity.evaluate(fine.nodes[inside])) / 5.0
        # normal isotrópica en el plano: P(r <= 3σ) = 1 - e^{-9/2}
        assert share == pytest.approx(1.0 - math.exp(-4.5), abs=3e-3)

    def test_focal_far_from_any_mass(self, window, grid, lower_left):
        baseline = interventions.local(lower_left, 1.0, 0.0, UNIFORM, grid).intensity
        with pytest.raises(DegenerateInterventionError):
            interventions.focal(1.0, baseline, (0.95, 0.95), 1e6, grid)

    def test_local(self, window, grid, lower_left):
        h = interventions.local(lower_left, 3.0, 1.0, UNIFORM, grid)
        assert h.expected_count == 4.0
        assert integrate(h.intensity, lower_left, grid) == pytest.approx(3.0)
        assert integrate(h.intensity, lower_left.complement(), grid) == pytest.approx(1.0)
        assert h.params['region'] == "lower_left"

    def test_local_inside_count_leaves_the_complement(self, grid, lower_left):
        base = interventions.local(lower_left, 2.0, 1.0, UNIFORM, grid).intensity
        raised = interventions.local(lower_left, 5.0, 1.0, UNIFORM, grid).intensity
        outside = grid.nodes[~lower_left.contains(grid.nodes)]
        inside = grid.nodes[lower_left.contains(grid.nodes)]
        np.testing.assert_array_equal(raised.evaluate(outside), base.evaluate(outside))
        np.testing.assert_allclose(raised.evaluate(inside), 2.5 * base.evaluate(inside))

    def test_local_rejects_negative_counts(self, grid, lower_left):
        with pytest.raises(DomainError):
            interventions.local(lower_left, -1.0, 1.0, UNIFORM, grid)


class TestSequences:

    def test_iid(self, window):
        seq = interventions.iid_sequence(interventions.homogeneous(3.0, window), 2)
        assert seq.M == 2
        assert seq.label == "homogeneous(h=3)^2"

    def test_lagged_order(self, window):
        h0 = interventions.homogeneous(3.0, window)
        h1 = interventions.homogeneous(7.0, window)
        seq = interventions.lagged_sequence(h0, h1, 3)
        assert [h.params['h'] for h in seq.interventions] == [3.0, 3.0, 7.0]
        # la etiqueta se lee del período más antiguo al más reciente
        assert seq.label == "homogeneous(h=7) x homogeneous(h=3) x homogeneous(h=3)"

    def test_invalid_length(self, window):
        h = interventions.homogeneous(3.0, window)
        with pytest.raises(DomainError):
            interventions.iid_sequence(h, 0)
        with pytest.raises(DomainError):
            InterventionSequence(())

    def test_sequence_log_density(self, window, grid):
        seq = interventions.staged_sequence([interventions.homogeneous(3.0, window),
                                             interventions.homogeneous(2.0, window)])
        patterns = [PointPattern.empty(), PointPattern(np.array([[0.5, 0.5]]))]
        expected = -2.0 + (-1.0 + math.log(2.0))
        assert interventions.sequence_log_density(seq, patterns, grid) == pytest.approx(expected)
        with pytest.raises(DomainError):
            interventions.sequence_log_density(seq, patterns[:1], grid)

    def test_sampling_follows_expected_count(self, window, grid, rng):
        h = interventions.local(region_from_rects([[0.0, 0.0, 0.5, 0.5]], window, "ll"), 4.0, 0.0, UNIFORM, grid)
        draws = [interventions.sample(h, window, grid, rng) for _ in range(2000)]
        assert np.mean([len(d) for d in draws]) == pytest.approx(4.0, abs=0.2)
        points = np.vstack([d.points for d in draws if len(d)])
        assert np.all(points < 0.5)
