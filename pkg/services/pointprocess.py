"""
Muestreo y densidad de procesos de Poisson planos.

Las densidades se expresan en escala log respecto del proceso de Poisson de
intensidad 1 sobre la ventana:

    log f(w) = |Ω| - ∫_Ω λ + Σ_{s en w} log λ(s)
"""
import logging
import math
from typing import Optional

import numpy as np

from models.geometry import PointPattern, Window
from models.process import BOUND_SAFETY, Intensity, PoissonProcess
from models.surface import ConstantSurface, QuadratureGrid
from services.surfaces import integrate_window
from utils.errors import DensityZeroError, DomainError, PositivityViolationError, ThinningBoundError

logger = logging.getLogger(__name__)

MAX_BOUND_DOUBLINGS = 10


def _constant_rate(intensity: Intensity) -> Optional[float]:
    bounds = intensity.value_bounds()
    if bounds is not None and bounds[0] == bounds[1]:
        return float(bounds[0])
    return None


def homogeneous(rate: float, window: Window) -> PoissonProcess:
    if rate < 0:
        raise DomainError(f"La intensidad debe ser no negativa (recibido {rate})")
    return PoissonProcess(ConstantSurface(float(rate)), window, float(rate), float(rate))


def from_intensity(intensity: Intensity, window: Window, grid: QuadratureGrid,
                   bound: Optional[float] = None) -> PoissonProcess:
    """
    Arma el proceso con cota de thinning 1.05 * max en los nodos, o con la cota
    analítica `bound` (que debe dominar ese máximo).
    """
    rate = _constant_rate(intensity)
    if rate is not None:
        if rate < 0:
            raise DomainError(f"Intensidad negativa: {rate}")
        return PoissonProcess(intensity, window, rate, rate)

    node_values = intensity.evaluate(grid.nodes)
    if not np.all(np.isfinite(node_values)) or node_values.min() < 0:
        raise DomainError("La intensidad debe ser finita y no negativa en la ventana")
    node_max = float(node_values.max())
    if bound is None:
        bound = BOUND_SAFETY * node_max
    elif bound < node_max:
        raise DomainError(f"La cota {bound:.6g} no domina el máximo en los nodos ({node_max:.6g})")
    return PoissonProcess(intensity, window, float(bound))


def with_analytic_bound(intensity: Intensity, window: Window) -> PoissonProcess:
    """Proceso con la cota analítica de la intensidad (sin evaluar la retícula)."""
    rate = _constant_rate(intensity)
    if rate is not None:
        return homogeneous(rate, window)
    bounds = intensity.value_bounds()
    if bounds is None:
        raise DomainError("La intensidad no tiene cota analítica; usar from_intensity con una retícula")
    return PoissonProcess(intensity, window, float(bounds[1]))


def expected_count(process: PoissonProcess, grid: QuadratureGrid) -> float:
    """∫_Ω λ; exacto para procesos homogéneos."""
    if process.is_homogeneous:
        return process.rate * process.window.area
    return integrate_window(process.intensity, grid)


def _uniform_points(n: int, window: Window, rng: np.random.Generator) -> np.ndarray:
    b = window.bounds
    xs = rng.uniform(b.x0, b.x1, size=n)
    ys = rng.uniform(b.y0, b.y1, size=n)
    return np.column_stack([xs, ys])


def sample(process: PoissonProcess, rng: np.random.Generator, timestamp: int = 0) -> PointPattern:
    """Homogéneo: N ~ Poisson(h|Ω|) puntos uniformes. Si no, thinning desde la cota."""
    area = process.window.area
    if process.is_homogeneous:
        if process.rate == 0:
            return PointPattern.empty(timestamp)
        n = int(rng.poisson(process.rate * area))
        return PointPattern(_uniform_points(n, process.window, rng), timestamp)

    bound = process.upper_bound
    if bound == 0:
        return PointPattern.empty(timestamp)
    n = int(rng.poisson(bound * area))
    candidates = _uniform_points(n, process.window, rng)
    if n == 0:
        return PointPattern.empty(timestamp)
    values = process.intensity.evaluate(candidates)
    observed_max = float(values.max())
    if observed_max > bound:
        raise ThinningBoundError(
            f"λ = {observed_max:.6g} supera la cota de thinning {bound:.6g}", observed_max=observed_max
        )
    keep = rng.uniform(size=n) * bound < values
    return PointPattern(candidates[keep], timestamp)


def sample_with_retry(process: PoissonProcess, rng: np.random.Generator, timestamp: int = 0) -> PointPattern:
    """Como sample, pero si la cota se queda corta la duplica y vuelve a muestrear."""
    for _ in range(MAX_BOUND_DOUBLINGS):
        try:
            return sample(process, rng, timestamp)
        except ThinningBoundError as exc:
            new_bound = max(2 * process.upper_bound, BOUND_SAFETY * exc.observed_max)
            logger.warning(
                "Cota de thinning superada en t=%d (%.6g > %.6g); se reintenta con %.6g",
                timestamp, exc.observed_max, process.upper_bound, new_bound,
            )
            process = process.with_bound(new_bound)
    raise ThinningBoundError(f"La cota de thinning no converge tras {MAX_BOUND_DOUBLINGS} duplicaciones")


def log_density(process: PoissonProcess, pattern: PointPattern, grid: QuadratureGrid,
                integral: Optional[float] = None) -> float:
    """
    Log-densidad del patrón bajo el proceso. `integral` permite reutilizar ∫λ ya
    calculada para el mismo proceso y retícula.
    """
    if integral is None:
        integral = expected_count(process, grid)
    total = process.window.area - integral
    if len(pattern) == 0:
        return float(total)

    if process.is_homogeneous:
        if process.rate == 0:
            raise DensityZeroError("Intensidad nula con puntos observados", point=tuple(pattern.points[0]))
        return float(total + len(pattern) * math.log(process.rate))

    values = process.intensity.evaluate(pattern.points)
    zero = ~(values > 0)
    if zero.any():
        point = pattern.points[np.flatnonzero(zero)[0]]
        raise DensityZeroError(
            f"Intensidad nula en ({point[0]:.6g}, {point[1]:.6g})", point=(float(point[0]), float(point[1]))
        )
    return float(total + np.sum(np.log(values)))


def log_density_ratio(numerator: PoissonProcess, denominator: PoissonProcess, pattern: PointPattern,
                      grid: QuadratureGrid, period: Optional[int] = None) -> float:
    """log f_num(w) - log f_den(w); -inf si el numerador se anula."""
    try:
        den = log_density(denominator, pattern, grid)
    except DensityZeroError as exc:
        raise PositivityViolationError(f"Densidad del denominador nula: {exc}", period=period)
    try:
        num = log_density(numerator, pattern, grid)
    except DensityZeroError:
        return -math.inf
    return num - den
