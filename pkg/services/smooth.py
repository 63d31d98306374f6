"""
Suavizado gaussiano de patrones de resultados e integrales exactas sobre
regiones rectangulares.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtr

from models.geometry import PointPattern, Region, Window
from models.surface import KernelSpec, QuadratureGrid, SmoothedSurface
from services.surfaces import integrate_window
from utils.errors import DomainError, InsufficientDataError

logger = logging.getLogger(__name__)


def bandwidth_rule(T: int) -> float:
    """Desvío del kernel decreciente en T: 10 * T^(-2/3)."""
    if T < 1:
        raise DomainError(f"T debe ser >= 1 (recibido {T})")
    return 10.0 * float(T) ** (-2.0 / 3.0)


def _cdf_diff(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Φ(upper) - Φ(lower) sin cancelación en la cola derecha."""
    right = lower > 0
    return np.where(right, ndtr(-lower) - ndtr(-upper), ndtr(upper) - ndtr(lower))


def rectangle_masses(points: np.ndarray, bandwidths: Tuple[float, float], region: Region) -> np.ndarray:
    """Masa gaussiana de la región para cada punto (vector de largo n)."""
    sx, sy = bandwidths
    mass = np.zeros(len(points))
    if len(points) == 0:
        return mass
    px, py = points[:, 0], points[:, 1]
    for part in region.parts:
        mx = _cdf_diff((part.x1 - px) / sx, (part.x0 - px) / sx)
        my = _cdf_diff((part.y1 - py) / sy, (part.y0 - py) / sy)
        mass += mx * my
    return mass


def smoothed_region_integral(pattern: PointPattern, kernel: KernelSpec, region: Region) -> float:
    """∫_B del patrón suavizado, exacto por productos de diferencias de Φ."""
    if len(pattern) == 0:
        return 0.0
    b = kernel.bandwidth
    return float(np.sum(rectangle_masses(pattern.points, (b, b), region)))


def scott_bandwidth(pattern: PointPattern) -> Tuple[float, float]:
    """Regla de Scott bivariada por eje: n^(-1/6) * desvío muestral."""
    n = len(pattern)
    if n < 2:
        raise InsufficientDataError(f"La regla de Scott necesita al menos 2 puntos (hay {n})")
    sd = pattern.points.std(axis=0, ddof=1)
    if not np.all(sd > 0):
        raise InsufficientDataError("Desvío muestral nulo en algún eje: puntos coincidentes")
    factor = n ** (-1.0 / 6.0)
    return (float(factor * sd[0]), float(factor * sd[1]))


def smoothed_surface(pattern: PointPattern, kernel: KernelSpec, prefactor: float = 1.0) -> SmoothedSurface:
    b = kernel.bandwidth
    return SmoothedSurface(pattern, (b, b), float(prefactor))


def baseline_density(pattern: PointPattern, window: Window, grid: QuadratureGrid,
                     bandwidths: Optional[Tuple[float, float]] = None) -> SmoothedSurface:
    """φ0: patrón suavizado con Scott por eje, normalizado a integral 1 en la ventana."""
    pattern.validate_in(window)
    if bandwidths is None:
        bandwidths = scott_bandwidth(pattern)
    raw = SmoothedSurface(pattern, tuple(bandwidths))
    mass = integrate_window(raw, grid)
    if not mass > 0:
        raise InsufficientDataError("La densidad base no tiene masa dentro de la ventana")
    logger.info(
        "Densidad base: %d puntos, anchos (%.4f, %.4f), masa sin normalizar %.4f",
        len(pattern), bandwidths[0], bandwidths[1], mass,
    )
    return SmoothedSurface(pattern, tuple(bandwidths), 1.0, mass)
