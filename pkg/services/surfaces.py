"""
Construcción de superficies de covariables, integración por cuadratura y
exportación/importación de rasters.
"""
import logging
from typing import Iterable, Sequence, Union

import numpy as np

from models.geometry import PointPattern, Region, SegmentSet, Window
from models.surface import (
    CompositeSurface,
    ConstantSurface,
    DecaySumSurface,
    DecaySurface,
    GridSurface,
    LinearCombinationSurface,
    LogLinearIntensity,
    QuadratureGrid,
    Surface,
)
from utils import raster_io
from utils.errors import DomainError

logger = logging.getLogger(__name__)

Targets = Union[SegmentSet, PointPattern]
Evaluable = Union[Surface, LogLinearIntensity]


def decay_surface(targets: Targets, scale: float, amplitude: float = 1.0) -> Surface:
    """ω -> amplitude * exp(-scale * dist(ω, targets)); objetivos vacíos dan la superficie 0."""
    if not scale > 0:
        raise DomainError(f"La escala de decaimiento debe ser positiva (recibido {scale})")
    if len(targets) == 0:
        return ConstantSurface(0.0)
    return DecaySurface(targets, float(scale), float(amplitude))


def decay_sum_surface(patterns: Iterable[PointPattern], scale: float, amplitude: float = 1.0) -> Surface:
    """Σ_j Σ_{s en S_j} amplitude * exp(-scale * dist(s, ω)) sobre varios períodos."""
    if not scale > 0:
        raise DomainError(f"La escala de decaimiento debe ser positiva (recibido {scale})")
    chunks = [p.points for p in patterns if len(p)]
    if not chunks:
        return ConstantSurface(0.0)
    return DecaySumSurface(np.vstack(chunks), float(scale), float(amplitude))


def scaled_product(factors: Sequence[Surface], scale: float = 1.0) -> CompositeSurface:
    return CompositeSurface(tuple(factors), float(scale))


def linear_combination(terms: Sequence) -> LinearCombinationSurface:
    """terms: pares (coeficiente, superficie)."""
    return LinearCombinationSurface(tuple((float(c), s) for c, s in terms))


def log_linear(coefficients, features: Sequence[Surface], names: Sequence[str] = ()) -> LogLinearIntensity:
    return LogLinearIntensity(np.asarray(coefficients, dtype=float), tuple(features), tuple(names))


def region_weights(region: Region, grid: QuadratureGrid) -> np.ndarray:
    """Pesos de cuadratura con cero fuera de la región."""
    if region.window != grid.window and not grid.window.bounds.contains_rect(region.window.bounds):
        raise DomainError("La retícula no cubre la ventana de la región")
    return np.where(region.contains(grid.nodes), grid.weights, 0.0)


def integrate(surface: Evaluable, region: Region, grid: QuadratureGrid) -> float:
    """Σ_{nodos en la región} peso * valor (regla del punto medio)."""
    weights = region_weights(region, grid)
    inside = weights > 0
    if not inside.any():
        return 0.0
    values = surface.evaluate(grid.nodes[inside])
    return float(np.sum(weights[inside] * values))


def integrate_window(surface: Evaluable, grid: QuadratureGrid) -> float:
    return float(np.sum(grid.weights * surface.evaluate(grid.nodes)))


def rasterize(surface: Evaluable, grid: QuadratureGrid) -> GridSurface:
    """Congela una superficie en los nodos de la retícula."""
    values = surface.evaluate(grid.nodes).reshape(grid.ny, grid.nx)
    return GridSurface(values, grid.window)


def write_raster(surface: Evaluable, grid: QuadratureGrid, path: str) -> str:
    values = surface.evaluate(grid.nodes).reshape(grid.ny, grid.nx)
    return raster_io.write_grid(values, grid.window.bounds.to_list(), path)


def read_raster(path: str) -> GridSurface:
    values, bounds = raster_io.read_grid(path)
    surface = GridSurface(values, Window.from_list(bounds))
    logger.info("Raster %s cargado (%dx%d)", path, surface.nx, surface.ny)
    return surface
