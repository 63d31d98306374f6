"""
Modelo de propensity score como proceso de Poisson log-lineal: construcción de
features desde la historia, ajuste por Newton con step halving sobre la
verosimilitud discretizada en la retícula, log-densidades y diagnóstico de
balance.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from models.geometry import PointPattern, Window
from models.propensity import (
    BalanceReport,
    BalanceRow,
    FeatureSpec,
    FitDiagnostics,
    HistoryFrame,
    PropensityModel,
    parse_features,
)
from models.surface import ConstantSurface, LogLinearIntensity, QuadratureGrid, Surface
from services import pointprocess
from services.surfaces import decay_sum_surface, decay_surface
from utils.errors import (
    ConfigError,
    DegenerateWeightsError,
    DomainError,
    IllConditionedFitError,
    InsufficientDataError,
)

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-8
MAX_ITERATIONS = 100
MAX_HALVINGS = 40
DIVERGENCE_NORM = 50.0
# piso numérico: si el line search ya no mejora, se acepta un gradiente relativo pequeño
STALL_RELATIVE_TOL = 1e-6

ONE = ConstantSurface(1.0)


def feature_surface(spec: FeatureSpec, frame: HistoryFrame) -> Surface:
    if spec.kind == 'intercept':
        return ONE
    if spec.kind == 'covariate':
        try:
            return frame.covariates[spec.covariate]
        except KeyError:
            raise ConfigError(f"Covariable '{spec.covariate}' no disponible en el período {frame.period}", key="features")
    if spec.kind.endswith('_decay'):
        return decay_surface(frame.lagged(spec.source, spec.lag_from), spec.scale)
    patterns = [frame.lagged(spec.source, lag) for lag in range(spec.lag_from, spec.lag_to + 1)]
    return decay_sum_surface(patterns, spec.scale)


def frame_surfaces(frame: HistoryFrame) -> List[Surface]:
    return [feature_surface(spec, frame) for spec in frame.features]


def build_frames(treatments: Sequence[PointPattern], outcomes: Sequence[PointPattern],
                 covariates: Sequence[Dict[str, Surface]], features, start: Optional[int] = None,
                 stop: Optional[int] = None) -> List[HistoryFrame]:
    """
    Un HistoryFrame por período (índice de la serie) en [start, stop). Por
    defecto start = rezago máximo, así ningún período de ajuste depende de la
    convención de historia vacía.
    """
    specs = features if features and isinstance(features[0], FeatureSpec) else parse_features(features)
    n = len(treatments)
    if len(outcomes) != n or len(covariates) != n:
        raise DomainError("Tratamientos, resultados y covariables deben tener el mismo largo")
    max_lag = max((s.max_lag for s in specs), default=0)
    start = max_lag if start is None else start
    stop = n if stop is None else stop
    if not 0 <= start < stop <= n:
        raise InsufficientDataError(f"Rango de períodos vacío: [{start}, {stop}) con {n} períodos")

    empty = PointPattern.empty()
    frames = []
    for t in range(start, stop):
        lags_w = tuple(treatments[t - k] if t - k >= 0 else empty for k in range(1, max_lag + 1))
        lags_y = tuple(outcomes[t - k] if t - k >= 0 else empty for k in range(1, max_lag + 1))
        frames.append(HistoryFrame(t, specs, lags_w, lags_y, dict(covariates[t])))
    return frames


def model_intensity(model: PropensityModel, frame: HistoryFrame) -> LogLinearIntensity:
    if [f.name for f in frame.features] != model.feature_names:
        raise DomainError("El frame no corresponde a las features del modelo")
    return LogLinearIntensity(model.coefficients, tuple(frame_surfaces(frame)), tuple(model.feature_names))


class PropensityLikelihood:
    """
    Log-verosimilitud ponderada discretizada:

        Σ_t w_t [ |Ω| + Σ_{s en W_t} β·X_t(s) - Σ_nodos q·exp{β·X_t(nodo)} ]

    Las matrices de diseño por período se calculan una sola vez.
    """

    def __init__(self, frames: Sequence[HistoryFrame], treatments: Sequence[PointPattern],
                 grid: QuadratureGrid, weights: Optional[Sequence[float]] = None):
        if len(frames) < 1:
            raise InsufficientDataError("El ajuste necesita al menos un período")
        if len(frames) != len(treatments):
            raise DomainError("Se necesita un patrón de tratamiento por frame")
        if weights is None:
            weights = np.ones(len(frames))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(frames),) or not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise DomainError("Los pesos deben ser finitos, no negativos y uno por período")

        self.features = frames[0].features
        self.weights = weights
        node_blocks = []
        point_sum = np.zeros(len(self.features))
        n_points = 0.0
        for frame, pattern, w in zip(frames, treatments, weights):
            surfaces = frame_surfaces(frame)
            node_blocks.append(np.column_stack([s.evaluate(grid.nodes) for s in surfaces]))
            if len(pattern):
                at_points = np.column_stack([s.evaluate(pattern.points) for s in surfaces])
                point_sum += w * at_points.sum(axis=0)
                n_points += w * len(pattern)
        self.design = np.vstack(node_blocks)
        if not np.all(np.isfinite(self.design)):
            raise DomainError("Features no finitas en la retícula de ajuste")
        self.node_weights = np.concatenate([w * grid.weights for w in weights])
        self.point_sum = point_sum
        self.n_points = n_points
        self.constant = float(weights.sum() * grid.window.area)
        self.exposure = float(weights.sum() * grid.weights.sum())
        self.n_periods = len(frames)

    def _rates(self, beta: np.ndarray) -> Optional[np.ndarray]:
        eta = self.design @ beta
        if not np.all(eta < 700):
            return None
        return self.node_weights * np.exp(eta)

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        rates = self._rates(beta)
        if rates is None:
            return -math.inf
        return float(self.constant + self.point_sum @ beta - rates.sum())

    def score(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        rates = self._rates(beta)
        if rates is None:
            raise IllConditionedFitError("Intensidad desbordada al evaluar el score")
        return self.point_sum - self.design.T @ rates

    def information(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        rates = self._rates(beta)
        if rates is None:
            raise IllConditionedFitError("Intensidad desbordada al evaluar la información")
        info = (self.design * rates[:, None]).T @ self.design
        return 0.5 * (info + info.T)


def _runaway_feature(features, beta) -> str:
    return features[int(np.argmax(np.abs(beta)))].name


def _newton_direction(info: np.ndarray, grad: np.ndarray, features) -> np.ndarray:
    try:
        return linalg.solve(info, grad, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        eigvals, eigvecs = np.linalg.eigh(info)
        weakest = features[int(np.argmax(np.abs(eigvecs[:, 0])))].name
        raise IllConditionedFitError(
            f"Matriz de información singular (autovalor mínimo {eigvals[0]:.3g})", feature=weakest
        )


def fit(frames: Sequence[HistoryFrame], observed_treatments: Sequence[PointPattern], grid: QuadratureGrid,
        weights: Optional[Sequence[float]] = None) -> PropensityModel:
    """Máxima verosimilitud por Newton con step halving."""
    lik = PropensityLikelihood(frames, observed_treatments, grid, weights)
    features = lik.features
    if lik.n_points <= 0:
        raise InsufficientDataError("No hay puntos de tratamiento (ponderados) para ajustar el modelo")

    beta = np.zeros(len(features))
    names = [f.name for f in features]
    if 'intercept' in names:
        beta[names.index('intercept')] = math.log(lik.n_points / lik.exposure)

    value = lik.value(beta)
    path = [value]
    converged = False
    iterations = 0
    grad = lik.score(beta)
    for iterations in range(1, MAX_ITERATIONS + 1):
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < GRADIENT_TOL:
            converged = True
            iterations -= 1
            break
        info = lik.information(beta)
        direction = _newton_direction(info, grad, features)

        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            candidate = beta + step * direction
            cand_value = lik.value(candidate)
            if np.isfinite(cand_value) and cand_value >= value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = grad_norm < STALL_RELATIVE_TOL * max(1.0, lik.n_points)
            break

        beta, value = candidate, cand_value
        path.append(value)
        if np.linalg.norm(beta) > DIVERGENCE_NORM:
            feature = _runaway_feature(features, beta)
            raise IllConditionedFitError(
                f"El ajuste diverge (|β| = {np.linalg.norm(beta):.1f}); revisar separación en '{feature}'",
                feature=feature,
            )
        grad = lik.score(beta)
    else:
        converged = float(np.max(np.abs(grad))) < GRADIENT_TOL

    grad_norm = float(np.max(np.abs(lik.score(beta))))
    if not converged:
        logger.warning("El ajuste no convergió tras %d iteraciones (|score|max = %.3g)", iterations, grad_norm)

    diagnostics = FitDiagnostics(
        log_likelihood=value,
        iterations=iterations,
        converged=converged,
        gradient_norm=grad_norm,
        information=lik.information(beta),
        n_periods=lik.n_periods,
        n_points=lik.n_points,
        log_likelihood_path=tuple(path),
    )
    logger.info(
        "Propensity ajustado: %d períodos, %d iteraciones, loglik %.4f",
        lik.n_periods, iterations, value,
    )
    return PropensityModel(tuple(features), beta, diagnostics)


def fit_homogeneous(observed_treatments: Sequence[PointPattern], window: Window,
                    weights: Optional[Sequence[float]] = None) -> PropensityModel:
    """Modelo sin confusores (sólo intercepto), en forma cerrada."""
    if weights is None:
        weights = np.ones(len(observed_treatments))
    weights = np.asarray(weights, dtype=float)
    n = float(np.dot(weights, [len(p) for p in observed_treatments]))
    exposure = float(weights.sum() * window.area)
    if n <= 0 or exposure <= 0:
        raise InsufficientDataError("No hay puntos de tratamiento para el modelo homogéneo")
    beta0 = math.log(n / exposure)
    # ∫ exp(β0) sobre la exposición total es n en el óptimo
    diagnostics = FitDiagnostics(
        log_likelihood=exposure - n + n * beta0,
        iterations=0,
        converged=True,
        gradient_norm=0.0,
        information=np.array([[n]]),
        n_periods=len(observed_treatments),
        n_points=n,
    )
    return PropensityModel((FeatureSpec.parse('intercept'),), np.array([beta0]), diagnostics)


def log_propensity(model: PropensityModel, frame: HistoryFrame, pattern: PointPattern,
                   grid: QuadratureGrid) -> float:
    """log p_t(w) = log f(W_t = w | historia), vía la densidad de Poisson."""
    intensity = model_intensity(model, frame)
    process = pointprocess.from_intensity(intensity, grid.window, grid)
    return pointprocess.log_density(process, pattern, grid)


def log_propensities(model: PropensityModel, frames: Sequence[HistoryFrame],
                     patterns: Sequence[PointPattern], grid: QuadratureGrid) -> np.ndarray:
    return np.array([log_propensity(model, f, p, grid) for f, p in zip(frames, patterns)])


def homogeneous_log_propensities(model: PropensityModel, patterns: Sequence[PointPattern],
                                 window: Window) -> np.ndarray:
    """Log-densidades del modelo homogéneo sin construir frames."""
    rate = math.exp(float(model.coefficients[0]))
    counts = np.array([len(p) for p in patterns], dtype=float)
    return window.area - rate * window.area + counts * math.log(rate)


def truncated_weights(log_propensity_values: Sequence[float], quantile: float):
    """
    Pesos 1/p truncados arriba en el cuantil dado y normalizados a media 1.
    Devuelve (pesos, umbral en escala w/max(w), cantidad truncada).
    """
    if not 0 < quantile <= 1:
        raise DomainError(f"El cuantil de truncamiento debe estar en (0, 1] (recibido {quantile})")
    log_w = -np.asarray(log_propensity_values, dtype=float)
    if log_w.size == 0 or not np.all(np.isfinite(log_w)):
        raise DegenerateWeightsError("Pesos de balance no finitos o vacíos")
    w = np.exp(log_w - log_w.max())
    threshold = float(np.quantile(w, quantile, method="inverted_cdf")) if quantile < 1 else 1.0
    n_truncated = int(np.count_nonzero(w > threshold))
    if quantile < 1 and not np.any(w < threshold):
        raise DegenerateWeightsError("Todos los pesos quedan truncados")
    w = np.minimum(w, threshold)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("La suma de los pesos truncados es nula")
    return w * (len(w) / total), threshold, n_truncated


def balance_check(model: PropensityModel, frames: Sequence[HistoryFrame],
                  observed_treatments: Sequence[PointPattern], grid: QuadratureGrid,
                  truncation_quantile: float = 0.9,
                  log_propensity_values: Optional[Sequence[float]] = None,
                  fit_grid: Optional[QuadratureGrid] = None) -> BalanceReport:
    """
    Reajusta la misma especificación sin pesos y con pesos 1/p truncados y
    compara coeficientes y p-valores de Wald. `log_propensity_values` permite
    usar el propensity verdadero en lugar del del modelo.
    """
    if log_propensity_values is None:
        log_propensity_values = log_propensities(model, frames, observed_treatments, grid)
    weights, threshold, n_truncated = truncated_weights(log_propensity_values, truncation_quantile)

    fit_grid = fit_grid or grid
    unweighted = fit(frames, observed_treatments, fit_grid)
    weighted = fit(frames, observed_treatments, fit_grid, weights=weights)
    p_unw = unweighted.wald_pvalues()
    p_w = weighted.wald_pvalues()
    rows = tuple(
        BalanceRow(
            feature=name,
            unweighted_coefficient=float(unweighted.coefficients[i]),
            unweighted_p_value=float(p_unw[i]),
            weighted_coefficient=float(weighted.coefficients[i]),
            weighted_p_value=float(p_w[i]),
        )
        for i, name in enumerate(unweighted.feature_names)
    )
    logger.info("Balance: %d períodos, %d pesos truncados (cuantil %.2f)", len(frames), n_truncated, truncation_quantile)
    return BalanceReport(rows, float(truncation_quantile), threshold, n_truncated)
