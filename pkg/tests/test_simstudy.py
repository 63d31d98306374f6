import math

import numpy as np
import pandas as pd
import pytest

from config import Config
from models.geometry import Region, region_from_rects
from models.simulation import DgpSpec, Targets
from models.surface import ConstantSurface, KernelSpec, LogLinearIntensity
from services import estimate, interventions, simstudy
from services.surfaces import integrate_window
from utils.errors import CalibrationError, DomainError


@pytest.fixture
def flat_series(flat_spec):
    return simstudy.generate_series(flat_spec, 31)


@pytest.fixture
def h5(window):
    return interventions.iid_sequence(interventions.homogeneous(5.0, window), 1)


class TestGenerateSeries:

    def test_same_seed_same_series(self, default_spec):
        a = simstudy.generate_series(default_spec, 7)
        b = simstudy.generate_series(default_spec, 7)
        assert a.n_periods == default_spec.T + default_spec.burn_in
        for pa, pb in zip(a.treatments + a.outcomes, b.treatments + b.outcomes):
            np.testing.assert_array_equal(pa.points, pb.points)

    def test_points_in_window_with_timestamps(self, default_spec, window):
        series = simstudy.generate_series(default_spec, 8)
        for t in range(series.n_periods):
            for pattern in (series.treatments[t], series.outcomes[t], *series.confounders[t]):
                assert pattern.timestamp == t
                assert np.all(window.contains(pattern.points))

    def test_to_frame(self, default_spec):
        series = simstudy.generate_series(default_spec, 9)
        frame = series.to_frame()
        assert list(frame.columns) == ['t', 'x', 'y', 'type']
        assert frame['t'].min() >= 1 and frame['t'].max() <= series.n_periods
        assert set(frame['type']) <= {'treatment', 'outcome', 'X3', 'X4'}
        n_treatments = sum(len(p) for p in series.treatments)
        assert (frame['type'] == 'treatment').sum() == n_treatments

    def test_covariates_by_period(self, default_spec):
        series = simstudy.generate_series(default_spec, 10)
        assert set(series.covariates(3)) == {'X1', 'X2', 'X3', 'X4'}
        assert series.lagged_covariate(0, 'X3').evaluate(np.array([[0.5, 0.5]]))[0] == 0.0
        assert series.lagged_covariate(4, 'X1') is series.static_covariates['X1']


class TestTrueLaw:

    def test_flat_treatments_are_homogeneous(self, flat_series, grid):
        log_p = simstudy.true_log_propensities(flat_series, grid)
        counts = np.array([len(p) for p in flat_series.treatments])
        np.testing.assert_allclose(log_p, 1.0 - 5.0 + counts * math.log(5.0), rtol=1e-9)

    def test_matching_intervention_has_unit_weights(self, flat_series, h5, grid):
        log_p = simstudy.true_log_propensities(flat_series, grid)
        weights = estimate.weight_series(h5, flat_series.treatments, log_p, grid, start=flat_series.burn_in)
        np.testing.assert_allclose(weights.log_weights, 0.0, atol=1e-9)

    def test_truth_oracle_recovers_the_outcome_rate(self, flat_series, h5, grid, window):
        oracle = simstudy.mc_truth_oracle(flat_series, h5, Region.whole(window), 200, 5, grid)
        assert len(oracle.values) == flat_series.T
        assert oracle.average == pytest.approx(4.0, abs=0.35)
        assert oracle.average_se > 0

    def test_truth_oracle_by_region(self, flat_series, h5, grid, window):
        lower = region_from_rects([[0.0, 0.0, 1.0, 0.5]], window, "lower")
        whole, half = simstudy.mc_truth_oracles(flat_series, h5, [Region.whole(window), lower], 50, 5, grid,
                                                period_stride=3)
        assert np.all(half.values <= whole.values)
        assert half.region == "lower"

    def test_oracle_arguments(self, flat_series, h5, grid, window):
        with pytest.raises(DomainError):
            simstudy.mc_truth_oracle(flat_series, h5, Region.whole(window), 0, 5, grid)
        with pytest.raises(DomainError):
            simstudy.mc_variance_oracle(flat_series, h5, Region.whole(window), 1, 5, KernelSpec(0.1), grid)
        with pytest.raises(DomainError):
            simstudy.oracle_periods(flat_series, 1, period_stride=0)


class TestVarianceOracle:

    def test_variance_below_second_moment(self, flat_series, h5, grid, window):
        oracle = simstudy.mc_variance_oracle(flat_series, h5, Region.whole(window), 20, 11, KernelSpec(0.1),
                                             grid, period_stride=4, use_counts=True)
        assert oracle.v_star > 0
        assert oracle.v <= oracle.v_star + 1e-12
        assert np.all(oracle.variances <= oracle.second_moments + 1e-12)

    def test_contrast_needs_equal_lengths(self, flat_series, h5, grid, window):
        h3 = interventions.iid_sequence(interventions.homogeneous(3.0, window), 2)
        with pytest.raises(DomainError):
            simstudy.mc_variance_oracle(flat_series, h5, Region.whole(window), 5, 11, KernelSpec(0.1), grid,
                                        contrast=h3)


class TestFlavors:

    def test_unadjusted_and_unknown(self, flat_series, grid, coarse_grid):
        flavors = simstudy.propensity_flavors(flat_series, grid, coarse_grid, ('unadjusted',))
        values = flavors['unadjusted']
        assert np.all(np.isnan(values[:flat_series.burn_in]))
        assert np.all(np.isfinite(values[flat_series.burn_in:]))
        with pytest.raises(DomainError):
            simstudy.propensity_flavors(flat_series, grid, coarse_grid, ('oracle',))

    def test_estimate_flavors(self, flat_series, h5, grid, coarse_grid, window):
        flavors = simstudy.propensity_flavors(flat_series, grid, coarse_grid, ('true', 'unadjusted'))
        results = simstudy.estimate_flavors(flat_series, h5, Region.whole(window), KernelSpec(0.1), grid, flavors,
                                            use_counts=True)
        assert [(r.descriptor['propensity'], r.estimator) for r in results] == [
            ('true', 'ipw'), ('true', 'hajek'), ('unadjusted', 'ipw'), ('unadjusted', 'hajek')]
        # con pesos unitarios IPW es el promedio de conteos
        observed = [len(p) for p in flat_series.outcomes[flat_series.burn_in:]]
        assert results[0].estimate == pytest.approx(np.mean(observed), rel=1e-9)


class TestCalibration:

    def test_closed_form_without_slopes(self, flat_spec, grid):
        spec = simstudy.calibrate_intercepts(flat_spec, 3, grid)
        assert spec.treatment.intercept == pytest.approx(math.log(5.0))
        assert spec.outcome.intercept == pytest.approx(math.log(21.0))
        statics = simstudy.static_covariates(spec)
        for j in range(2):
            lam = LogLinearIntensity(np.array([spec.covariates.rho0[j], spec.covariates.rho1[j]]),
                                     (ConstantSurface(1.0), statics['X1']))
            assert integrate_window(lam, grid) == pytest.approx(10.0, rel=1e-9)

    def test_bisection(self):
        root = simstudy._bisect(math.exp, 5.0, 1.0, 0.001, "x")
        assert math.exp(root) == pytest.approx(5.0, rel=0.001)

    def test_bisection_without_bracket(self):
        with pytest.raises(CalibrationError, match="no queda entre"):
            simstudy._bisect(lambda a: a, 10.0, 0.0, 0.01, "x")

    def test_targets_must_be_positive(self, flat_spec, grid):
        with pytest.raises(CalibrationError):
            simstudy.calibrate_intercepts(flat_spec, 3, grid, targets=Targets(treatment_mean=0.0))


class TestCoverageSummary:

    def test_summary_by_cell(self):
        base = {'T': 100, 'M': 1, 'intervention': 'h', 'region': 'window', 'estimator': 'ipw',
                'propensity': 'true', 'variance': 'bound', 'truth': 2.0, 'se': 1.0}
        rows = [dict(base, level=0.95, estimate=e, covered=c)
                for e, c in ((1.0, True), (2.0, True), (3.0, False), (6.0, False))]
        rows.append(dict(base, level=0.9, estimate=2.5, covered=True))
        table = simstudy.summarize_coverage(pd.DataFrame(rows))
        assert len(table) == 2
        cell = table[table['level'] == 0.95].iloc[0]
        assert cell['n_datasets'] == 4
        assert cell['coverage'] == pytest.approx(0.5)
        assert cell['mean_estimate'] == pytest.approx(3.0)
        assert cell['median_abs_error'] == pytest.approx(1.0)
        assert cell['uncertainty_ratio'] == pytest.approx(math.sqrt(14.0 / 3.0))


@pytest.mark.slow
class TestExperiments:

    def test_small_coverage_experiment(self, flat_spec, grid, coarse_grid, window):
        h5 = interventions.iid_sequence(interventions.homogeneous(5.0, window), 1)
        h3 = interventions.iid_sequence(interventions.homogeneous(3.0, window), 1)
        design = simstudy.CoverageDesign(
            sequences=(h5, h3), regions=(Region.whole(window),), T_grid=(20,), n_datasets=2, R=20,
            flavors=('true', 'unadjusted'), contrasts=((0, 1),), use_counts=True,
        )
        table, records = simstudy.coverage_experiment(flat_spec, design, 17, grid, coarse_grid)
        # 2 intervenciones + 1 contraste, 2 sabores, 2 estimadores, 2 datasets
        assert len(records) == 3 * 2 * 2 * 2
        assert set(table['n_datasets']) == {2}
        assert records['covered'].dtype == bool

    def test_truth_oracle_independent_of_processes(self, flat_spec, grid, window):
        series = simstudy.generate_series(flat_spec, 44)
        h5 = interventions.iid_sequence(interventions.homogeneous(5.0, window), 2)
        serial = simstudy.mc_truth_oracle(series, h5, Region.whole(window), 10, 3, grid, threads=1)
        pooled = simstudy.mc_truth_oracle(series, h5, Region.whole(window), 10, 3, grid, threads=2)
        np.testing.assert_array_equal(serial.values, pooled.values)


class TestTrueVarianceRows:

    def test_true_variance_adds_oracle_rows(self, flat_spec, grid, coarse_grid, window):
        h5 = interventions.iid_sequence(interventions.homogeneous(5.0, window), 1)
        design = simstudy.CoverageDesign(
            sequences=(h5,), regions=(Region.whole(window),), T_grid=(10,), n_datasets=1, R=5,
            flavors=('true',), true_variance=True, variance_R=5, variance_stride=3, use_counts=True,
        )
        _, records = simstudy.coverage_experiment(flat_spec, design, 23, grid, coarse_grid)
        assert set(records['variance']) == {'bound', 'true', 'true_bound'}
        oracle_rows = records[records['variance'] != 'bound']
        assert set(oracle_rows['estimator']) == {'ipw'}
        assert set(oracle_rows['propensity']) == {'true'}
        se = oracle_rows.set_index('variance')['se']
        # v <= v*, así que el intervalo con la cota verdadera es el más ancho
        assert se['true'] <= se['true_bound'] + 1e-12
        assert oracle_rows['estimate'].nunique() == 1


@pytest.fixture(scope="module")
def long_series():
    """Una serie del DGP por defecto con T = 500."""
    return simstudy.generate_series(DgpSpec.from_toml(Config.DEFAULT_DGP_SPEC).with_T(500), 1)


@pytest.mark.slow
class TestAcceptance:

    def test_default_dgp_mean_counts(self, long_series):
        spec = long_series.spec
        counts = [long_series.mean_counts()] + [simstudy.generate_series(spec, seed).mean_counts()
                                                for seed in (2, 3)]
        assert np.mean([c['treatment'] for c in counts]) == pytest.approx(5.0, abs=0.5)
        assert np.mean([c['outcome'] for c in counts]) == pytest.approx(21.0, abs=2.0)

    def test_true_weights_average_one(self, long_series, window, grid):
        # E[f_h(W) / p(W)] = 1 bajo la ley observada
        log_p = simstudy.true_log_propensities(long_series, grid)
        h5 = interventions.iid_sequence(interventions.homogeneous(5.0, window), 1)
        weights = estimate.weight_series(h5, long_series.treatments, log_p, grid, start=long_series.burn_in)
        assert 0.8 <= np.mean(np.exp(weights.log_weights)) <= 1.2

    def test_ipw_degrades_as_M_grows(self, long_series, window, grid):
        log_p = simstudy.true_log_propensities(long_series, grid)
        region = Region.whole(window)
        ess, bounds = [], []
        for M in (1, 3, 7):
            seq = interventions.iid_sequence(interventions.homogeneous(5.0, window), M)
            weights = estimate.weight_series(seq, long_series.treatments, log_p, grid, start=long_series.burn_in)
            result = estimate.estimate_outcome(weights, long_series.outcomes, KernelSpec(0.1), region, 'ipw',
                                               use_counts=True)
            ess.append(weights.effective_sample_size())
            bounds.append(result.variance_bound)
        assert ess[0] > ess[1] > ess[2]
        assert bounds[2] > bounds[0]

    @pytest.mark.parametrize("M", [1, 2])
    def test_period_estimator_is_unbiased(self, default_spec, window, grid, M):
        series = simstudy.generate_series(default_spec, 61)
        seq = interventions.iid_sequence(interventions.homogeneous(5.0, window), M)
        region = Region.whole(window)
        R = 2000
        spread = simstudy.mc_variance_oracle(series, seq, region, R, 5, KernelSpec(0.1), grid,
                                             period_stride=3, use_counts=True)
        truth = simstudy.mc_truth_oracle(series, seq, region, R, 9, grid, period_stride=3)
        np.testing.assert_array_equal(spread.periods, truth.periods)
        n = len(truth.periods)
        se = math.sqrt(np.sum(spread.variances) / R / n ** 2 + truth.average_se ** 2)
        assert abs(np.mean(spread.means) - truth.average) <= 3 * se

    def test_bound_close_to_the_variance(self, default_spec, window, grid):
        series = simstudy.generate_series(default_spec, 62)
        seq = interventions.iid_sequence(interventions.homogeneous(5.0, window), 3)
        lower_left = region_from_rects([[0.0, 0.0, 0.5, 0.5]], window, "lower_left")
        oracle = simstudy.mc_variance_oracle(series, seq, lower_left, 1000, 7, KernelSpec(0.1), grid,
                                             use_counts=True)
        assert 1.0 <= oracle.v_star / oracle.v <= 1.5

    def test_interval_coverage(self, long_series, window, grid, coarse_grid):
        sequences = tuple(interventions.iid_sequence(interventions.homogeneous(5.0, window), M) for M in (1, 3))
        design = simstudy.CoverageDesign(
            sequences=sequences, regions=(Region.whole(window),), T_grid=(200,), n_datasets=50, R=20,
            flavors=('true',), true_variance=True, variance_R=50, variance_stride=20, period_stride=5,
            use_counts=True,
        )
        table, _ = simstudy.coverage_experiment(long_series.spec, design, 101, grid, coarse_grid,
                                                threads=Config.THREADS)
        hajek = table[(table['estimator'] == 'hajek') & (table['variance'] == 'bound')]
        ipw = table[(table['estimator'] == 'ipw') & (table['variance'] == 'true')]
        assert len(hajek) == 2 and len(ipw) == 2
        assert np.all(hajek['coverage'] >= 0.85)
        assert np.all(ipw['coverage'] >= 0.80)

    def test_hajek_consistency_and_confounding(self, long_series, window, grid, coarse_grid):
        seq = interventions.iid_sequence(interventions.homogeneous(5.0, window), 3)
        design = simstudy.CoverageDesign(
            sequences=(seq,), regions=(Region.whole(window),), T_grid=(200, 500), n_datasets=20, R=20,
            estimator_kinds=('hajek',), flavors=('true', 'unadjusted'), period_stride=5, use_counts=True,
        )
        _, records = simstudy.coverage_experiment(long_series.spec, design, 103, grid, coarse_grid,
                                                  threads=Config.THREADS)
        records['error'] = (records['estimate'] - records['truth']).abs()
        adjusted = records[records['propensity'] == 'true']
        medians = adjusted.groupby('T')['error'].median()
        assert medians[500] < medians[200]
        errors = records[records['T'] == 500].pivot(index='dataset', columns='propensity', values='error')
        assert np.mean(errors['true'] < errors['unadjusted']) >= 0.8

    def test_balance_experiment(self, default_spec, grid, coarse_grid):
        spec = default_spec.with_T(60)
        summary, rows = simstudy.balance_experiment(spec, 3, 71, grid, coarse_grid)
        assert len(summary) == len(simstudy.correct_features(spec))
        assert set(summary['n_datasets']) == {3}
        assert len(rows) == 3 * len(summary)
        assert np.all(np.isfinite(summary['mean_weighted_coefficient']))
        assert np.all((summary['median_unweighted_p_value'] >= 0) & (summary['median_unweighted_p_value'] <= 1))
