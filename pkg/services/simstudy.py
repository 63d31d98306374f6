"""
Estudio de simulación: confusores, DGP de tratamientos y resultados, oráculos
Monte Carlo de la verdad y de la varianza teórica, y los experimentos de
cobertura, balance y calibración de interceptos.

Streams aleatorios: cada período de cada dataset usa child_stream(seed, t, tag)
con tags distintos por propósito, así cualquier período se regenera aislado.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.estimate import EstimateResult
from models.geometry import PointPattern, Region
from models.intervention import InterventionSequence
from models.simulation import DgpSpec, SimulatedSeries
from models.surface import ConstantSurface, KernelSpec, LogLinearIntensity, QuadratureGrid, Surface
from services import estimate as estimators
from services import pointprocess, propensity
from services.geom import count_in_region
from services.interventions import as_process
from services.smooth import bandwidth_rule, smoothed_region_integral
from services.surfaces import decay_surface, integrate_window
from utils.errors import CalibrationError, DensityZeroError, DomainError
from utils.parallel import map_tasks
from utils.rng import child_stream, derive_seed

logger = logging.getLogger(__name__)

ONE = ConstantSurface(1.0)
PROPENSITY_FLAVORS = ('true', 'estimated', 'unadjusted')


# ---------------------------------------------------------------------------
# DGP
# ---------------------------------------------------------------------------

def static_covariates(spec: DgpSpec) -> Dict[str, Surface]:
    c = spec.covariates
    return {
        'X1': decay_surface(spec.lines, c.x1_scale, c.x1_amplitude),
        'X2': decay_surface(spec.arcs, c.x2_scale, c.x2_amplitude),
    }


def confounder_intensity(spec: DgpSpec, statics: Dict[str, Surface], j: int) -> LogLinearIntensity:
    """exp{ρ0 + ρ1 X1} para el confusor j (0 -> X3, 1 -> X4)."""
    c = spec.covariates
    return LogLinearIntensity(np.array([c.rho0[j], c.rho1[j]]), (ONE, statics['X1']), ('intercept', 'X1'))


def _decay(pattern: PointPattern, spec: DgpSpec) -> Surface:
    return decay_surface(pattern, spec.history_scale)


def treatment_intensity(spec: DgpSpec, covariates: Dict[str, Surface], w_prev: PointPattern,
                        y_prev: PointPattern) -> LogLinearIntensity:
    w = spec.treatment
    beta = np.array([w.intercept, *w.covariates, w.lagged_treatment, w.lagged_outcome])
    features = (ONE, covariates['X1'], covariates['X2'], covariates['X3'], covariates['X4'],
                _decay(w_prev, spec), _decay(y_prev, spec))
    return LogLinearIntensity(beta, features)


def outcome_intensity(spec: DgpSpec, covariates: Dict[str, Surface], lagged_covariate: Surface,
                      recent_treatments: Sequence[PointPattern], y_prev: PointPattern) -> LogLinearIntensity:
    """
    El resultado depende de los tratamientos de los últimos
    recent_treatment_periods períodos (incluido t) vía la distancia a su unión.
    """
    y = spec.outcome
    chunks = [p.points for p in recent_treatments if len(p)]
    union = PointPattern(np.vstack(chunks)) if chunks else PointPattern.empty()
    beta = np.array([y.intercept, *y.covariates, y.lagged_covariate_coefficient, y.recent_treatment, y.lagged_outcome])
    features = (ONE, covariates['X1'], covariates['X2'], covariates['X3'], covariates['X4'],
                lagged_covariate, _decay(union, spec), _decay(y_prev, spec))
    return LogLinearIntensity(beta, features)


def _draw(intensity, spec: DgpSpec, rng: np.random.Generator, t: int) -> PointPattern:
    process = pointprocess.with_analytic_bound(intensity, spec.window)
    return pointprocess.sample_with_retry(process, rng, t)


def _recent(treatments, t: int, spec: DgpSpec) -> List[PointPattern]:
    first = max(0, t - spec.outcome.recent_treatment_periods + 1)
    return [treatments[j] for j in range(first, t + 1)]


def generate_series(spec: DgpSpec, seed: int) -> SimulatedSeries:
    """Genera burn_in + T períodos: confusores, W_t y luego Y_t."""
    statics = static_covariates(spec)
    empty = PointPattern.empty()
    scale = spec.covariates.confounder_scale
    treatments: List[PointPattern] = []
    outcomes: List[PointPattern] = []
    confounders = []
    dynamics = []

    for t in range(spec.n_periods):
        x3_points = _draw(confounder_intensity(spec, statics, 0), spec, child_stream(seed, t, 'X3'), t)
        x4_points = _draw(confounder_intensity(spec, statics, 1), spec, child_stream(seed, t, 'X4'), t)
        dynamic = {'X3': decay_surface(x3_points, scale), 'X4': decay_surface(x4_points, scale)}
        covariates = {**statics, **dynamic}
        confounders.append((x3_points, x4_points))
        dynamics.append(dynamic)

        w_prev = treatments[t - 1] if t > 0 else empty
        y_prev = outcomes[t - 1] if t > 0 else empty
        w_t = _draw(treatment_intensity(spec, covariates, w_prev, y_prev), spec, child_stream(seed, t, 'treatment'), t)
        treatments.append(w_t)

        lagged = _lagged_covariate(spec, statics, dynamics, t)
        lam_y = outcome_intensity(spec, covariates, lagged, _recent(treatments, t, spec), y_prev)
        outcomes.append(_draw(lam_y, spec, child_stream(seed, t, 'outcome'), t))

    series = SimulatedSeries(
        spec=spec,
        seed=int(seed),
        treatments=tuple(treatments),
        outcomes=tuple(outcomes),
        confounders=tuple(confounders),
        static_covariates=statics,
        dynamic_covariates=tuple(dynamics),
    )
    counts = series.mean_counts()
    logger.info(
        "Serie simulada (semilla %d, T=%d, burn-in %d): %.2f tratamientos y %.2f resultados por período",
        seed, series.T, series.burn_in, counts['treatment'], counts['outcome'],
    )
    return series


def _lagged_covariate(spec: DgpSpec, statics, dynamics, t: int) -> Surface:
    name = spec.outcome.lagged_covariate
    if name in statics:
        return statics[name]
    if t == 0:
        return ConstantSurface(0.0)
    return dynamics[t - 1][name]


def correct_features(spec: DgpSpec) -> Tuple[str, ...]:
    """Features del modelo de propensity correctamente especificado."""
    scale = f"{spec.history_scale:g}"
    return ('intercept', 'covariate:X1', 'covariate:X2', 'covariate:X3', 'covariate:X4',
            f'treatment_decay:1@{scale}', f'outcome_decay:1@{scale}')


def true_log_propensities(series: SimulatedSeries, grid: QuadratureGrid) -> np.ndarray:
    """log p_t(W_t) bajo la ley de tratamiento del DGP, para todos los períodos."""
    spec = series.spec
    empty = PointPattern.empty()
    out = np.empty(series.n_periods)
    for t in range(series.n_periods):
        w_prev = series.treatments[t - 1] if t > 0 else empty
        y_prev = series.outcomes[t - 1] if t > 0 else empty
        lam = treatment_intensity(spec, series.covariates(t), w_prev, y_prev)
        process = pointprocess.with_analytic_bound(lam, spec.window)
        out[t] = pointprocess.log_density(process, series.treatments[t], grid)
    return out


# ---------------------------------------------------------------------------
# Oráculos Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TruthOracle:
    region: str
    periods: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    R: int

    @property
    def average(self) -> float:
        return float(np.mean(self.values))

    @property
    def average_se(self) -> float:
        return float(math.sqrt(np.sum(self.standard_errors ** 2)) / len(self.values))

    def to_dict(self):
        return {
            'region': self.region,
            'R': self.R,
            'average': self.average,
            'average_se': self.average_se,
            'periods': self.periods.tolist(),
            'values': self.values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class VarianceOracle:
    periods: np.ndarray
    variances: np.ndarray
    second_moments: np.ndarray
    R: int
    # media Monte Carlo del estimador de cada período
    means: Optional[np.ndarray] = None

    @property
    def v(self) -> float:
        return float(np.mean(self.variances))

    @property
    def v_star(self) -> float:
        return float(np.mean(self.second_moments))

    def to_dict(self):
        return {'R': self.R, 'v': self.v, 'v_star': self.v_star, 'periods': len(self.periods)}


def oracle_periods(series: SimulatedSeries, M: int, period_stride: int = 1) -> np.ndarray:
    if period_stride < 1:
        raise DomainError(f"period_stride debe ser >= 1 (recibido {period_stride})")
    return estimators.estimation_periods(series.n_periods, series.burn_in, M)[::period_stride]


def _prepared(sequence: InterventionSequence, grid: QuadratureGrid):
    window = grid.window
    return [as_process(h, window, grid) for h in sequence.interventions]


def _truth_chunk(task) -> np.ndarray:
    series, sequence, regions, R, seed, grid, periods = task
    spec = series.spec
    processes = _prepared(sequence, grid)
    M = sequence.M
    empty = PointPattern.empty()
    counts = np.zeros((len(regions), len(periods), R))
    for i, t in enumerate(periods):
        rng = child_stream(seed, int(t), 'truth')
        first = t - M + 1
        for r in range(R):
            path = list(series.treatments[:first])
            for j in range(first, t + 1):
                path.append(pointprocess.sample_with_retry(processes[t - j], rng, j))
            y_prev = series.outcomes[first - 1] if first > 0 else empty
            for j in range(first, t + 1):
                lagged = series.lagged_covariate(j, spec.outcome.lagged_covariate)
                lam = outcome_intensity(spec, series.covariates(j), lagged, _recent(path, j, spec), y_prev)
                y_prev = _draw(lam, spec, rng, j)
            for b, region in enumerate(regions):
                counts[b, i, r] = count_in_region(y_prev, region)
    return counts


def _chunks(periods: np.ndarray, threads: int) -> List[np.ndarray]:
    if threads <= 1:
        return [periods]
    return [c for c in np.array_split(periods, min(len(periods), 4 * threads)) if len(c)]


def mc_truth_oracles(series: SimulatedSeries, sequence: InterventionSequence, regions: Sequence[Region],
                     R: int, seed: int, grid: QuadratureGrid, period_stride: int = 1,
                     threads: int = 1) -> List[TruthOracle]:
    """
    Para cada t: R veces sortea tratamientos de la intervención en t-M+1..t,
    regenera los resultados con la ley del DGP condicionando en la historia
    observada previa, y cuenta puntos de Y_t en cada región.
    """
    if R < 1:
        raise DomainError(f"R debe ser >= 1 (recibido {R})")
    periods = oracle_periods(series, sequence.M, period_stride)
    tasks = [(series, sequence, list(regions), R, seed, grid, chunk) for chunk in _chunks(periods, threads)]
    counts = np.concatenate(map_tasks(_truth_chunk, tasks, threads), axis=1)
    out = []
    for b, region in enumerate(regions):
        values = counts[b].mean(axis=1)
        se = counts[b].std(axis=1, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(len(periods))
        out.append(TruthOracle(region.label, periods, values, se, R))
        logger.info("Oráculo de verdad %s en %s: %.4f (R=%d)", sequence.label, region.label, out[-1].average, R)
    return out


def mc_truth_oracle(series: SimulatedSeries, sequence: InterventionSequence, region: Region, R: int, seed: int,
                    grid: QuadratureGrid, period_stride: int = 1, threads: int = 1) -> TruthOracle:
    return mc_truth_oracles(series, sequence, [region], R, seed, grid, period_stride, threads)[0]


def _variance_chunk(task) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    series, sequence, contrast, region, kernel, R, seed, grid, periods, use_counts = task
    spec = series.spec
    M = sequence.M
    seqs = [sequence] if contrast is None else [sequence, contrast]
    processes = [_prepared(s, grid) for s in seqs]
    integrals = [[pointprocess.expected_count(p, grid) for p in procs] for procs in processes]
    empty = PointPattern.empty()
    variances = np.zeros(len(periods))
    second = np.zeros(len(periods))
    means = np.zeros(len(periods))
    for i, t in enumerate(periods):
        rng = child_stream(seed, int(t), 'variance')
        first = t - M + 1
        values = np.zeros(R)
        for r in range(R):
            path = list(series.treatments[:first])
            y_prev = series.outcomes[first - 1] if first > 0 else empty
            log_w = np.zeros(len(seqs))
            for j in range(first, t + 1):
                covariates = series.covariates(j)
                w_prev = path[j - 1] if j > 0 else empty
                lam_w = treatment_intensity(spec, covariates, w_prev, y_prev)
                process = pointprocess.with_analytic_bound(lam_w, spec.window)
                w_j = pointprocess.sample_with_retry(process, rng, j)
                path.append(w_j)
                log_p = pointprocess.log_density(process, w_j, grid)
                for s in range(len(seqs)):
                    try:
                        num = pointprocess.log_density(processes[s][t - j], w_j, grid, integrals[s][t - j])
                    except DensityZeroError:
                        num = -math.inf
                    log_w[s] += num - log_p
                lagged = series.lagged_covariate(j, spec.outcome.lagged_covariate)
                lam_y = outcome_intensity(spec, covariates, lagged, _recent(path, j, spec), y_prev)
                y_prev = _draw(lam_y, spec, rng, j)
            g = count_in_region(y_prev, region) if use_counts else smoothed_region_integral(y_prev, kernel, region)
            estimates = np.where(np.isfinite(log_w), np.exp(np.minimum(log_w, 700.0)), 0.0) * g
            values[r] = estimates[-1] - estimates[0] if contrast is not None else estimates[0]
        variances[i] = values.var()
        second[i] = np.mean(values ** 2)
        means[i] = values.mean()
    return variances, second, means


def mc_variance_oracle(series: SimulatedSeries, sequence: InterventionSequence, region: Region, R: int,
                       seed: int, kernel: KernelSpec, grid: QuadratureGrid, period_stride: int = 1,
                       contrast: Optional[InterventionSequence] = None, use_counts: bool = False,
                       threads: int = 1) -> VarianceOracle:
    """
    Para cada t: R veces genera tratamientos y resultados de t-M+1..t con la
    ley del DGP, calcula el estimador del período con el propensity verdadero
    y acumula varianza y segundo momento. Con `contrast` el estimador es
    Ŷ(contrast) - Ŷ(sequence).
    """
    if R < 2:
        raise DomainError(f"El oráculo de varianza necesita R >= 2 (recibido {R})")
    if contrast is not None and contrast.M != sequence.M:
        raise DomainError("Las secuencias del contraste deben tener el mismo M")
    periods = oracle_periods(series, sequence.M, period_stride)
    tasks = [(series, sequence, contrast, region, kernel, R, seed, grid, chunk, use_counts)
             for chunk in _chunks(periods, threads)]
    parts = map_tasks(_variance_chunk, tasks, threads)
    variances = np.concatenate([p[0] for p in parts])
    second = np.concatenate([p[1] for p in parts])
    means = np.concatenate([p[2] for p in parts])
    oracle = VarianceOracle(periods, variances, second, R, means)
    logger.info("Oráculo de varianza %s en %s: v=%.5g, v*=%.5g", sequence.label, region.label, oracle.v, oracle.v_star)
    return oracle


# ---------------------------------------------------------------------------
# Estimación por sabor de propensity
# ---------------------------------------------------------------------------

def propensity_flavors(series: SimulatedSeries, grid: QuadratureGrid, fit_grid: QuadratureGrid,
                       flavors: Sequence[str] = PROPENSITY_FLAVORS) -> Dict[str, np.ndarray]:
    """Log-propensities alineados con la serie para cada sabor pedido."""
    out: Dict[str, np.ndarray] = {}
    start = series.burn_in
    observed_w = series.treatments[start:]
    for flavor in flavors:
        values = np.full(series.n_periods, np.nan)
        if flavor == 'true':
            values = true_log_propensities(series, grid)
        elif flavor == 'estimated':
            frames = propensity.build_frames(series.treatments, series.outcomes, series.all_covariates(),
                                             correct_features(series.spec), start=start)
            model = propensity.fit(frames, observed_w, fit_grid)
            values[start:] = propensity.log_propensities(model, frames, observed_w, grid)
        elif flavor == 'unadjusted':
            model = propensity.fit_homogeneous(observed_w, series.spec.window)
            values[start:] = propensity.homogeneous_log_propensities(model, observed_w, series.spec.window)
        else:
            raise DomainError(f"Sabor de propensity desconocido '{flavor}' (opciones: {', '.join(PROPENSITY_FLAVORS)})")
        out[flavor] = values
    return out


def estimate_flavors(series: SimulatedSeries, sequence: InterventionSequence, region: Region, kernel: KernelSpec,
                     grid: QuadratureGrid, log_propensities: Dict[str, np.ndarray],
                     estimator_kinds: Sequence[str] = ('ipw', 'hajek'), level: float = 0.95,
                     use_counts: bool = False) -> List[EstimateResult]:
    """Un EstimateResult por (sabor de propensity, estimador) sobre el mismo dataset."""
    results = []
    for flavor, values in log_propensities.items():
        weights = estimators.weight_series(sequence, series.treatments, values, grid, start=series.burn_in)
        for kind in estimator_kinds:
            results.append(estimators.estimate_outcome(
                weights, series.outcomes, kernel, region, kind, level, use_counts,
                descriptor={'intervention': sequence.label, 'propensity': flavor},
            ))
    return results


# ---------------------------------------------------------------------------
# Experimentos
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoverageDesign:
    """Grilla de un experimento de cobertura (lo que varía entre celdas)."""

    sequences: Tuple[InterventionSequence, ...]
    regions: Tuple[Region, ...]
    T_grid: Tuple[int, ...]
    n_datasets: int
    R: int
    levels: Tuple[float, ...] = (0.95,)
    estimator_kinds: Tuple[str, ...] = ('ipw', 'hajek')
    flavors: Tuple[str, ...] = PROPENSITY_FLAVORS
    true_variance: bool = False
    variance_R: int = 100
    variance_stride: int = 10
    period_stride: int = 1
    bandwidth: Optional[float] = None
    use_counts: bool = False
    contrasts: Tuple[Tuple[int, int], ...] = ()


def _coverage_dataset(task) -> List[dict]:
    spec, design, T, index, seed, grid, fit_grid = task
    dataset_seed = derive_seed(seed, T, index)
    series = generate_series(spec.with_T(T), dataset_seed)
    kernel = KernelSpec(design.bandwidth if design.bandwidth else bandwidth_rule(T))
    log_props = propensity_flavors(series, grid, fit_grid, design.flavors)

    truths = {}
    results = {}
    for s, sequence in enumerate(design.sequences):
        oracles = mc_truth_oracles(series, sequence, design.regions, design.R,
                                   derive_seed(dataset_seed, 'truth', s), grid, design.period_stride)
        for region, oracle in zip(design.regions, oracles):
            truths[(s, region.label)] = oracle.average
            results[(s, region.label)] = estimate_flavors(
                series, sequence, region, kernel, grid, log_props, design.estimator_kinds,
                design.levels[0], design.use_counts,
            )

    records = []

    def emit(label, M, region, result, truth, variance_flavor, bound):
        for level in design.levels:
            lower, upper = estimators.confidence_interval(result.estimate, bound, level)
            records.append({
                'T': T, 'M': M, 'intervention': label, 'region': region,
                'estimator': result.estimator, 'propensity': result.descriptor.get('propensity'),
                'variance': variance_flavor, 'level': level, 'dataset': index,
                'estimate': result.estimate, 'truth': truth, 'se': math.sqrt(bound),
                'lower': lower, 'upper': upper, 'covered': bool(lower <= truth <= upper),
            })

    for (s, region_label), res_list in results.items():
        sequence = design.sequences[s]
        for result in res_list:
            emit(sequence.label, sequence.M, region_label, result, truths[(s, region_label)],
                 'bound', result.variance_bound)
        if design.true_variance:
            region = next(r for r in design.regions if r.label == region_label)
            oracle = mc_variance_oracle(series, sequence, region, design.variance_R,
                                        derive_seed(dataset_seed, 'variance', s), kernel, grid,
                                        design.variance_stride, use_counts=design.use_counts)
            for result in res_list:
                if result.estimator == 'ipw' and result.descriptor.get('propensity') == 'true':
                    truth = truths[(s, region_label)]
                    emit(sequence.label, sequence.M, region_label, result, truth, 'true', oracle.v / result.T)
                    emit(sequence.label, sequence.M, region_label, result, truth, 'true_bound',
                         oracle.v_star / result.T)

    for first, second in design.contrasts:
        for region in design.regions:
            truth = truths[(second, region.label)] - truths[(first, region.label)]
            pairs = zip(results[(first, region.label)], results[(second, region.label)])
            for r1, r2 in pairs:
                contrast = estimators.effect_contrast(r1, r2)
                label = f"{design.sequences[second].label} - {design.sequences[first].label}"
                emit(label, design.sequences[first].M, region.label, contrast, truth, 'bound', contrast.variance_bound)
    return records


def summarize_coverage(records: pd.DataFrame) -> pd.DataFrame:
    """Una fila por celda (T, M, intervención, región, estimador, propensity, varianza, nivel)."""
    keys = ['T', 'M', 'intervention', 'region', 'estimator', 'propensity', 'variance', 'level']
    grouped = records.groupby(keys, sort=True)
    table = grouped.agg(
        n_datasets=('covered', 'size'),
        coverage=('covered', 'mean'),
        mean_estimate=('estimate', 'mean'),
        mean_truth=('truth', 'mean'),
        mc_sd=('estimate', 'std'),
        mean_se=('se', 'mean'),
    ).reset_index()
    errors = (records['estimate'] - records['truth']).abs()
    table['median_abs_error'] = errors.groupby([records[k] for k in keys], sort=True).median().to_numpy()
    # s.d. Monte Carlo entre datasets sobre el error estándar estimado medio
    table['uncertainty_ratio'] = table['mc_sd'] / table['mean_se']
    return table


def coverage_experiment(spec: DgpSpec, design: CoverageDesign, seed: int, grid: QuadratureGrid,
                        fit_grid: QuadratureGrid, threads: int = 1) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Devuelve (tabla de cobertura por celda, registros por dataset)."""
    tasks = [(spec, design, T, i, seed, grid, fit_grid) for T in design.T_grid for i in range(design.n_datasets)]
    logger.info("Experimento de cobertura: %d datasets en %d procesos", len(tasks), threads)
    chunks = map_tasks(_coverage_dataset, tasks, threads)
    records = pd.DataFrame([row for chunk in chunks for row in chunk])
    return summarize_coverage(records), records


def _balance_dataset(task) -> List[dict]:
    spec, index, seed, quantile, grid, fit_grid, source = task
    dataset_seed = derive_seed(seed, 'balance', index)
    series = generate_series(spec, dataset_seed)
    start = series.burn_in
    observed = series.treatments[start:]
    frames = propensity.build_frames(series.treatments, series.outcomes, series.all_covariates(),
                                     correct_features(spec), start=start)
    model = propensity.fit(frames, observed, fit_grid)
    if source == 'true':
        log_p = true_log_propensities(series, grid)[start:]
    else:
        log_p = None
    report = propensity.balance_check(model, frames, observed, grid, quantile, log_p, fit_grid=fit_grid)
    return [{'dataset': index, **row.to_dict()} for row in report.rows]


def balance_experiment(spec: DgpSpec, n_datasets: int, seed: int, grid: QuadratureGrid,
                       fit_grid: QuadratureGrid, truncation_quantile: float = 0.9,
                       weights_source: str = 'true', threads: int = 1) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Coeficientes y p-valores del modelo sin pesos y ponderado por 1/p en
    n_datasets réplicas. Devuelve (resumen por feature, filas por dataset).
    """
    if weights_source not in ('true', 'estimated'):
        raise DomainError(f"Fuente de pesos desconocida '{weights_source}'")
    tasks = [(spec, i, seed, truncation_quantile, grid, fit_grid, weights_source) for i in range(n_datasets)]
    rows = pd.DataFrame([r for chunk in map_tasks(_balance_dataset, tasks, threads) for r in chunk])
    grouped = rows.groupby('feature', sort=False)
    summary = grouped.agg(
        n_datasets=('dataset', 'size'),
        mean_weighted_coefficient=('weighted_coefficient', 'mean'),
        sd_weighted_coefficient=('weighted_coefficient', 'std'),
        median_weighted_p_value=('weighted_p_value', 'median'),
        median_unweighted_p_value=('unweighted_p_value', 'median'),
        mean_unweighted_coefficient=('unweighted_coefficient', 'mean'),
    ).reset_index()
    summary['mc_se_weighted_coefficient'] = summary['sd_weighted_coefficient'] / np.sqrt(summary['n_datasets'])
    return summary, rows


# ---------------------------------------------------------------------------
# Calibración de interceptos
# ---------------------------------------------------------------------------

def _pilot(task) -> Tuple[float, float]:
    spec, seed = task
    counts = generate_series(spec, seed).mean_counts()
    return counts['treatment'], counts['outcome']


def pilot_mean_counts(spec: DgpSpec, seed: int, replicates: int, threads: int = 1) -> Tuple[float, float]:
    """Conteos medios de tratamiento y resultado con números aleatorios comunes."""
    tasks = [(spec, derive_seed(seed, 'pilot', r)) for r in range(replicates)]
    means = np.array(map_tasks(_pilot, tasks, threads))
    return float(means[:, 0].mean()), float(means[:, 1].mean())


def _bisect(evaluate, target: float, center: float, tolerance: float, name: str,
            width: float = 4.0, max_steps: int = 40) -> float:
    lo, hi = center - width, center + width
    f_lo, f_hi = evaluate(lo), evaluate(hi)
    if not f_lo < target < f_hi:
        raise CalibrationError(
            f"El objetivo {target:g} para {name} no queda entre {f_lo:.4g} y {f_hi:.4g} en [{lo:.3f}, {hi:.3f}]"
        )
    mid = center
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        value = evaluate(mid)
        if abs(value - target) <= tolerance * target:
            return mid
        if value < target:
            lo = mid
        else:
            hi = mid
    return mid


def calibrate_intercepts(spec: DgpSpec, seed: int, grid: QuadratureGrid, targets=None, pilot_T: int = 200,
                         replicates: int = 20, tolerance: float = 0.05, rounds: int = 3,
                         threads: int = 1) -> DgpSpec:
    """
    ρ0 de los confusores en forma cerrada por cuadratura; α0 y γ0 por bisección
    alternada sobre series piloto. Si todas las pendientes son cero, el
    intercepto es log(m/|Ω|) exacto.
    """
    targets = targets or spec.targets
    for name in ('treatment_mean', 'outcome_mean', 'confounder_mean'):
        if not getattr(targets, name) > 0:
            raise CalibrationError(f"El objetivo {name} debe ser positivo")
    area = spec.window.area
    statics = static_covariates(spec)

    rho0 = []
    for j in range(2):
        slope = spec.covariates.rho1[j]
        mass = integrate_window(LogLinearIntensity(np.array([0.0, slope]), (ONE, statics['X1'])), grid)
        rho0.append(math.log(targets.confounder_mean / mass))
    spec = spec.with_intercepts(rho0=tuple(rho0))

    w, y = spec.treatment, spec.outcome
    w_free = not any(w.covariates) and w.lagged_treatment == 0 and w.lagged_outcome == 0
    y_free = (not any(y.covariates) and y.lagged_covariate_coefficient == 0 and y.recent_treatment == 0
              and y.lagged_outcome == 0)
    if w_free:
        spec = spec.with_intercepts(treatment=math.log(targets.treatment_mean / area))
    if y_free:
        spec = spec.with_intercepts(outcome=math.log(targets.outcome_mean / area))
    if w_free and y_free:
        return spec

    pilot = spec.with_T(pilot_T)
    for round_ in range(rounds):
        if not w_free:
            alpha0 = _bisect(
                lambda a: pilot_mean_counts(pilot.with_intercepts(treatment=a), seed, replicates, threads)[0],
                targets.treatment_mean, pilot.treatment.intercept, tolerance / 2, "dgp.treatment.intercept",
            )
            pilot = pilot.with_intercepts(treatment=alpha0)
        if not y_free:
            gamma0 = _bisect(
                lambda g: pilot_mean_counts(pilot.with_intercepts(outcome=g), seed, replicates, threads)[1],
                targets.outcome_mean, pilot.outcome.intercept, tolerance / 2, "dgp.outcome.intercept",
            )
            pilot = pilot.with_intercepts(outcome=gamma0)
        mean_w, mean_y = pilot_mean_counts(pilot, seed, replicates, threads)
        logger.info("Calibración ronda %d: %.3f tratamientos, %.3f resultados", round_ + 1, mean_w, mean_y)
        if abs(mean_w - targets.treatment_mean) <= tolerance * targets.treatment_mean \
                and abs(mean_y - targets.outcome_mean) <= tolerance * targets.outcome_mean:
            break
    return spec.with_intercepts(treatment=pilot.treatment.intercept, outcome=pilot.outcome.intercept)
