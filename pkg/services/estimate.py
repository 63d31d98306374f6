"""
Estimadores IPW y Hájek del conteo esperado de resultados en una región bajo
una secuencia de intervención, cota de varianza, contrastes e intervalos.

Todo el producto de cocientes de densidades se hace en escala log; el exp se
aplica al final de cada período.
"""
import logging
import math
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from models.estimate import ESTIMATORS, HAJEK_NOTE, EstimateResult, WeightSeries
from models.geometry import PointPattern, Region
from models.intervention import Intervention, InterventionSequence
from models.surface import KernelSpec, QuadratureGrid
from services import pointprocess
from services.geom import count_in_region
from services.interventions import as_process
from services.smooth import smoothed_region_integral
from utils.errors import (
    DegenerateWeightsError,
    DensityZeroError,
    DomainError,
    InsufficientDataError,
    PositivityViolationError,
)

logger = logging.getLogger(__name__)


def intervention_log_densities(intervention: Intervention, patterns: Sequence[PointPattern],
                               grid: QuadratureGrid) -> np.ndarray:
    """log f_h(w_j) para cada patrón; -inf donde h se anula en algún punto."""
    process = as_process(intervention, grid.window, grid)
    integral = pointprocess.expected_count(process, grid)
    out = np.empty(len(patterns))
    for j, pattern in enumerate(patterns):
        try:
            out[j] = pointprocess.log_density(process, pattern, grid, integral=integral)
        except DensityZeroError:
            out[j] = -math.inf
    return out


def estimation_periods(n_periods: int, start: int, M: int) -> np.ndarray:
    """Períodos t con t-M+1 >= start; rechaza series con T < M + 1."""
    T = n_periods - start
    if M < 1:
        raise DomainError(f"M debe ser >= 1 (recibido {M})")
    if T < M + 1:
        raise InsufficientDataError(f"Se necesitan al menos M+1 = {M + 1} períodos observados (hay {T})")
    return np.arange(start + M - 1, n_periods)


def weight_series(sequence: InterventionSequence, treatments: Sequence[PointPattern],
                  log_propensities: Sequence[float], grid: QuadratureGrid, start: int = 0,
                  numerator_shift: float = 0.0, denominator_shift: float = 0.0) -> WeightSeries:
    """
    ℓ_t = Σ_{k=0}^{M-1} [log f_{h_{k+1}}(W_{t-k}) - log p_{t-k}(W_{t-k})].

    `log_propensities` se alinea con `treatments`; sólo se leen los períodos
    >= start. Los desplazamientos existen para verificar que una constante
    común en numerador y denominador no cambia nada.
    """
    n = len(treatments)
    log_p = np.asarray(log_propensities, dtype=float)
    if len(log_p) != n:
        raise DomainError("Se necesita un log-propensity por período de la serie")
    M = sequence.M
    periods = estimation_periods(n, start, M)

    observed = slice(start, n)
    bad = ~np.isfinite(log_p[observed])
    if bad.any():
        period = start + int(np.flatnonzero(bad)[0])
        raise PositivityViolationError(
            f"Propensity nulo o no finito en el período {period}: falla la positividad", period=period
        )

    cache: Dict[int, np.ndarray] = {}
    numer = np.zeros((M, n))
    for k, intervention in enumerate(sequence.interventions):
        key = id(intervention)
        if key not in cache:
            values = np.full(n, np.nan)
            values[observed] = intervention_log_densities(intervention, treatments[observed], grid)
            cache[key] = values
        numer[k] = cache[key]

    log_w = np.zeros(len(periods))
    for i, t in enumerate(periods):
        acc = 0.0
        for k in range(M):
            acc += (numer[k, t - k] + numerator_shift) - (log_p[t - k] + denominator_shift)
        log_w[i] = acc
    if np.any(np.isnan(log_w)) or np.any(log_w == math.inf):
        period = int(periods[np.flatnonzero(np.isnan(log_w) | (log_w == math.inf))[0]])
        raise PositivityViolationError(f"Log-peso no finito en el período {period}", period=period)

    series = WeightSeries(periods, log_w, M)
    logger.debug(
        "Pesos %s: ESS %.1f de %d, peso normalizado máximo %.3f",
        sequence.label, series.effective_sample_size(), series.n_terms, series.max_normalized_weight(),
    )
    return series


def region_outcomes(outcomes: Sequence[PointPattern], periods: Sequence[int], kernel: KernelSpec,
                    region: Region, use_counts: bool = False) -> np.ndarray:
    """G_t: integral del resultado suavizado en B (o el conteo observado)."""
    if use_counts:
        return np.array([count_in_region(outcomes[t], region) for t in periods], dtype=float)
    return np.array([smoothed_region_integral(outcomes[t], kernel, region) for t in periods])


def period_estimate(log_weight: float, outcome: PointPattern, kernel: KernelSpec, region: Region,
                    use_counts: bool = False, period: Optional[int] = None) -> float:
    """exp(ℓ_t) * ∫_B Ŷ_t."""
    if not (np.isfinite(log_weight) or log_weight == -math.inf):
        raise PositivityViolationError(f"Log-peso no finito en el período {period}", period=period)
    value = count_in_region(outcome, region) if use_counts else smoothed_region_integral(outcome, kernel, region)
    if value == 0 or log_weight == -math.inf:
        return 0.0
    return math.exp(log_weight) * value


def ipw_average(estimates: Sequence[float]) -> float:
    values = np.asarray(estimates, dtype=float)
    if values.size == 0:
        raise InsufficientDataError("No hay períodos para promediar")
    return float(np.sum(values) / values.size)


def hajek_average(estimates: Sequence[float], log_weights: Sequence[float]) -> float:
    """
    Σ exp(ℓ_t) G_t / Σ exp(ℓ_t), con `estimates` = G_t sin ponderar. Queda
    siempre dentro de [min G_t, max G_t].
    """
    g = np.asarray(estimates, dtype=float)
    w = _normalized(log_weights)
    return float(np.sum(w * g) / np.sum(w))


def _normalized(log_weights: Sequence[float]) -> np.ndarray:
    log_w = np.asarray(log_weights, dtype=float)
    top = np.max(log_w) if log_w.size else -math.inf
    if not np.isfinite(top):
        raise DegenerateWeightsError("Todos los pesos son cero: el estimador de Hájek no está definido")
    return np.exp(log_w - top)


def contributions(g: np.ndarray, log_weights: np.ndarray, estimator: str) -> np.ndarray:
    """
    Aportes por período cuyo promedio es el estimador: exp(ℓ_t) G_t para IPW y
    n w̃_t G_t / Σ w̃ para Hájek.
    """
    if estimator == 'ipw':
        with np.errstate(over='ignore', invalid='ignore'):
            values = np.exp(log_weights) * g
        return np.where(g == 0, 0.0, values)
    if estimator == 'hajek':
        w = _normalized(log_weights)
        return len(g) * w * g / np.sum(w)
    raise DomainError(f"Estimador desconocido '{estimator}' (opciones: {', '.join(ESTIMATORS)})")


def variance_bound(period_estimates: Sequence[float], M: int, T: int, estimator: str = 'ipw',
                   log_weights: Optional[Sequence[float]] = None) -> float:
    """
    IPW: v̂* = promedio de Ŷ_t^2 sobre los T-M+1 términos; devuelve v̂*/T.
    Hájek: la misma cota multiplicada por [(T-M+1)/Σ exp(ℓ_t)]^2, con
    `period_estimates` = aportes IPW y `log_weights` los ℓ_t.
    """
    values = np.asarray(period_estimates, dtype=float)
    n_terms = T - M + 1
    if values.size != n_terms:
        raise DomainError(f"Se esperaban T-M+1 = {n_terms} aportes (recibidos {values.size})")
    if estimator == 'ipw':
        return float(np.sum(values ** 2) / n_terms / T)
    if estimator != 'hajek':
        raise DomainError(f"Estimador desconocido '{estimator}' (opciones: {', '.join(ESTIMATORS)})")
    if log_weights is None:
        raise DomainError("La cota de Hájek necesita los log-pesos")
    log_w = np.asarray(log_weights, dtype=float)
    if not np.isfinite(np.max(log_w)):
        raise DegenerateWeightsError("Todos los pesos son cero: el estimador de Hájek no está definido")
    factor = n_terms * math.exp(-logsumexp(log_w))
    return float(np.sum((values * factor) ** 2) / n_terms / T)


def confidence_interval(estimate: float, bound: float, level: float = 0.95):
    """estimate ± z_{(1+level)/2} sqrt(bound)."""
    if bound < 0:
        raise DomainError(f"La cota de varianza debe ser no negativa (recibido {bound})")
    if not 0 < level < 1:
        raise DomainError(f"El nivel debe estar en (0, 1) (recibido {level})")
    half = float(norm.ppf(0.5 + level / 2.0)) * math.sqrt(bound)
    return (estimate - half, estimate + half)


def two_sided_p_value(estimate: float, bound: float) -> float:
    if bound <= 0:
        return 1.0 if estimate == 0 else 0.0
    return float(2.0 * norm.sf(abs(estimate) / math.sqrt(bound)))


def estimate_outcome(weights: WeightSeries, outcomes: Sequence[PointPattern], kernel: KernelSpec,
                     region: Region, estimator: str = 'hajek', level: float = 0.95, use_counts: bool = False,
                     descriptor: Optional[dict] = None) -> EstimateResult:
    """Estimación puntual, cota de varianza e intervalo para un (B, F_h̄, M, estimador)."""
    if estimator not in ESTIMATORS:
        raise DomainError(f"Estimador desconocido '{estimator}' (opciones: {', '.join(ESTIMATORS)})")
    M = weights.M
    T = weights.n_terms + M - 1
    g = region_outcomes(outcomes, weights.periods, kernel, region, use_counts)
    contrib = contributions(g, weights.log_weights, estimator)
    if estimator == 'ipw':
        point = ipw_average(contrib)
        bound = variance_bound(contrib, M, T, 'ipw')
    else:
        point = hajek_average(g, weights.log_weights)
        # la cota de Hájek no cambia si todos los ℓ_t se desplazan igual
        shifted = weights.log_weights - np.max(weights.log_weights)
        bound = variance_bound(contributions(g, shifted, 'ipw'), M, T, 'hajek', shifted)
    lower, upper = confidence_interval(point, bound, level)

    desc = {
        'region': region.label,
        'M': M,
        'estimator': estimator,
        'smoothing': 'counts' if use_counts else kernel.bandwidth,
    }
    desc.update(descriptor or {})
    return EstimateResult(
        descriptor=desc,
        estimate=point,
        variance_bound=bound,
        level=level,
        lower=lower,
        upper=upper,
        contributions=contrib,
        T=T,
        weights=weights,
        note=HAJEK_NOTE if estimator == 'hajek' else "",
        extras={'region_outcomes': g.tolist()},
    )


def effect_contrast(first: EstimateResult, second: EstimateResult, level: Optional[float] = None) -> EstimateResult:
    """τ̂ = N̂_2 - N̂_1; la cota usa τ̂_t = diferencia de los aportes por período."""
    for key in ('region', 'M', 'estimator', 'smoothing'):
        if first.descriptor.get(key) != second.descriptor.get(key):
            raise DomainError(f"Los resultados no son comparables: difieren en '{key}'")
    if first.T != second.T or first.contributions.size != second.contributions.size:
        raise DomainError("Los resultados no son comparables: difieren en T")
    if first.weights is not None and second.weights is not None \
            and not np.array_equal(first.weights.periods, second.weights.periods):
        raise DomainError("Los resultados no provienen de la misma serie observada")

    level = first.level if level is None else level
    tau_t = second.contributions - first.contributions
    point = second.estimate - first.estimate
    # τ̂_t ya llevan el escalado de cada estimador
    bound = variance_bound(tau_t, first.T - tau_t.size + 1, first.T, 'ipw')
    lower, upper = confidence_interval(point, bound, level)
    desc = {k: v for k, v in first.descriptor.items() if k not in ('intervention', 'propensity', 'name')}
    desc['intervention'] = f"{second.descriptor.get('intervention', '?')} - {first.descriptor.get('intervention', '?')}"
    if 'name' in first.descriptor and 'name' in second.descriptor:
        desc['name'] = f"{second.descriptor['name']} - {first.descriptor['name']}"
    if 'propensity' in first.descriptor:
        desc['propensity'] = first.descriptor['propensity']
    desc['kind'] = 'contrast'
    return EstimateResult(
        descriptor=desc,
        estimate=point,
        variance_bound=bound,
        level=level,
        lower=lower,
        upper=upper,
        contributions=tau_t,
        T=first.T,
        p_value=two_sided_p_value(point, bound),
        note=first.note,
    )
