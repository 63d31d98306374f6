"""
Superficies reales sobre la ventana, intensidades log-lineales y la retícula
de cuadratura que comparten el DGP, el propensity score y las intervenciones.

Todas las superficies evalúan de forma vectorizada sobre un arreglo (m, 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.distance import cdist

from models.geometry import PointPattern, Region, Window
from services.geom import distances_to_set
from utils.errors import DomainError

Bounds = Optional[Tuple[float, float]]

KIND_CONSTANT = "constant"
KIND_DECAY = "analytic-decay"
KIND_GAUSSIAN = "analytic-gaussian"
KIND_GRID = "grid-backed"
KIND_COMPOSITE = "composite"
KIND_SMOOTHED = "kernel-smoothed"
KIND_INDICATOR = "region-indicator"


def _as_xy(xy) -> np.ndarray:
    return np.atleast_2d(np.asarray(xy, dtype=float)).reshape(-1, 2)


class Surface:
    """Mapa determinista (x, y) -> real, total y finito sobre la ventana."""

    kind = "abstract"

    def evaluate(self, xy) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, xy) -> np.ndarray:
        return self.evaluate(_as_xy(xy))

    def value_bounds(self) -> Bounds:
        """Cota (inferior, superior) analítica, o None si no hay una barata."""
        return None

    def describe(self) -> dict:
        return {'kind': self.kind}


@dataclass(frozen=True, eq=False)
class ConstantSurface(Surface):
    value: float
    kind = KIND_CONSTANT

    def evaluate(self, xy) -> np.ndarray:
        return np.full(len(_as_xy(xy)), float(self.value))

    def value_bounds(self) -> Bounds:
        return (float(self.value), float(self.value))

    def describe(self) -> dict:
        return {'kind': self.kind, 'value': self.value}


@dataclass(frozen=True, eq=False)
class DecaySurface(Surface):
    """amplitude * exp(-scale * distancia al objetivo)."""

    targets: object
    scale: float
    amplitude: float = 1.0
    kind = KIND_DECAY

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        return self.amplitude * np.exp(-self.scale * distances_to_set(xy, self.targets))

    def value_bounds(self) -> Bounds:
        return (min(0.0, self.amplitude), max(0.0, self.amplitude))

    def describe(self) -> dict:
        n = len(self.targets)
        return {'kind': self.kind, 'scale': self.scale, 'amplitude': self.amplitude, 'targets': n}


@dataclass(frozen=True, eq=False)
class DecaySumSurface(Surface):
    """Suma sobre todos los puntos de varios patrones de amplitude*exp(-scale*dist)."""

    points: np.ndarray
    scale: float
    amplitude: float = 1.0
    kind = KIND_DECAY

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        if len(self.points) == 0:
            return np.zeros(len(xy))
        return self.amplitude * np.exp(-self.scale * cdist(xy, self.points)).sum(axis=1)

    def value_bounds(self) -> Bounds:
        top = self.amplitude * len(self.points)
        return (min(0.0, top), max(0.0, top))


@dataclass(frozen=True, eq=False)
class GaussianDensitySurface(Surface):
    """Densidad normal isotrópica centrada en `center` con precisión `precision`."""

    center: Tuple[float, float]
    precision: float
    kind = KIND_GAUSSIAN

    def __post_init__(self):
        if self.precision <= 0:
            raise DomainError("La precisión de la densidad focal debe ser positiva")

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        r2 = (xy[:, 0] - self.center[0]) ** 2 + (xy[:, 1] - self.center[1]) ** 2
        return self.precision / (2 * math.pi) * np.exp(-0.5 * self.precision * r2)

    def value_bounds(self) -> Bounds:
        return (0.0, self.precision / (2 * math.pi))

    def describe(self) -> dict:
        return {'kind': self.kind, 'center': list(self.center), 'precision': self.precision}


@dataclass(frozen=True, eq=False)
class GridSurface(Surface):
    """Superficie sobre nodos de retícula (centros de celda) con interpolación bilineal."""

    values: np.ndarray  # forma (ny, nx)
    window: Window
    kind = KIND_GRID

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 2:
            raise DomainError("La superficie de retícula necesita al menos 2x2 nodos")
        if not np.all(np.isfinite(values)):
            raise DomainError("Valores no finitos en la superficie de retícula")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def nx(self) -> int:
        return int(self.values.shape[1])

    @property
    def ny(self) -> int:
        return int(self.values.shape[0])

    def _axes(self):
        b = self.window.bounds
        dx = (b.x1 - b.x0) / self.nx
        dy = (b.y1 - b.y0) / self.ny
        xs = b.x0 + dx * (np.arange(self.nx) + 0.5)
        ys = b.y0 + dy * (np.arange(self.ny) + 0.5)
        return xs, ys

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        xs, ys = self._axes()
        interp = RegularGridInterpolator((ys, xs), self.values, method="linear")
        # fuera de la malla de nodos se congela el valor del borde
        q = np.column_stack([np.clip(xy[:, 1], ys[0], ys[-1]), np.clip(xy[:, 0], xs[0], xs[-1])])
        return interp(q)

    def value_bounds(self) -> Bounds:
        return (float(self.values.min()), float(self.values.max()))

    def describe(self) -> dict:
        return {'kind': self.kind, 'nx': self.nx, 'ny': self.ny, 'window': self.window.bounds.to_list()}


@dataclass(frozen=True, eq=False)
class RegionIndicatorSurface(Surface):
    region: Region
    inside: float
    outside: float
    kind = KIND_INDICATOR

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        return np.where(self.region.contains(xy), float(self.inside), float(self.outside))

    def value_bounds(self) -> Bounds:
        return (min(self.inside, self.outside), max(self.inside, self.outside))

    def describe(self) -> dict:
        return {'kind': self.kind, 'region': self.region.to_dict(), 'inside': self.inside, 'outside': self.outside}


def _product_bounds(a: Tuple[float, float], b: Tuple[float, float]) -> Tuple[float, float]:
    corners = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    return (min(corners), max(corners))


@dataclass(frozen=True, eq=False)
class CompositeSurface(Surface):
    """Producto escalado de superficies: scale * f_1 * ... * f_k."""

    factors: Tuple[Surface, ...]
    scale: float = 1.0
    kind = KIND_COMPOSITE

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        out = np.full(len(xy), float(self.scale))
        for f in self.factors:
            out = out * f.evaluate(xy)
        return out

    def value_bounds(self) -> Bounds:
        acc = (float(self.scale), float(self.scale))
        for f in self.factors:
            fb = f.value_bounds()
            if fb is None:
                return None
            acc = _product_bounds(acc, fb)
        return acc

    def describe(self) -> dict:
        return {'kind': self.kind, 'scale': self.scale, 'factors': [f.describe() for f in self.factors]}


@dataclass(frozen=True, eq=False)
class LinearCombinationSurface(Surface):
    """Σ_i c_i f_i."""

    terms: Tuple[Tuple[float, Surface], ...]
    kind = KIND_COMPOSITE

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        out = np.zeros(len(xy))
        for coef, f in self.terms:
            out = out + coef * f.evaluate(xy)
        return out

    def value_bounds(self) -> Bounds:
        lo = hi = 0.0
        for coef, f in self.terms:
            fb = f.value_bounds()
            if fb is None:
                return None
            a, b = coef * fb[0], coef * fb[1]
            lo += min(a, b)
            hi += max(a, b)
        return (lo, hi)


@dataclass(frozen=True, eq=False)
class SmoothedSurface(Surface):
    """
    prefactor/normalizer * Σ_s K(ω - s) con K gaussiana bivariada de desvíos
    (σx, σy). Con σx = σy = b es la versión suavizada del patrón de resultados.
    """

    pattern: PointPattern
    bandwidths: Tuple[float, float]
    prefactor: float = 1.0
    normalizer: float = 1.0
    kind = KIND_SMOOTHED

    def __post_init__(self):
        if min(self.bandwidths) <= 0:
            raise DomainError("El ancho de banda debe ser positivo")
        if self.normalizer <= 0:
            raise DomainError("El normalizador debe ser positivo")

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        if len(self.pattern) == 0:
            return np.zeros(len(xy))
        sx, sy = self.bandwidths
        pts = self.pattern.points
        zx = (xy[:, 0, None] - pts[None, :, 0]) / sx
        zy = (xy[:, 1, None] - pts[None, :, 1]) / sy
        dens = np.exp(-0.5 * (zx ** 2 + zy ** 2)).sum(axis=1) / (2 * math.pi * sx * sy)
        return self.prefactor / self.normalizer * dens

    def value_bounds(self) -> Bounds:
        sx, sy = self.bandwidths
        top = self.prefactor / self.normalizer * len(self.pattern) / (2 * math.pi * sx * sy)
        return (min(0.0, top), max(0.0, top))

    def describe(self) -> dict:
        return {
            'kind': self.kind,
            'bandwidths': list(self.bandwidths),
            'points': len(self.pattern),
            'prefactor': self.prefactor,
        }


@dataclass(frozen=True, eq=False)
class LogLinearIntensity:
    """λ(ω) = exp{β·X(ω)}; la primera feature suele ser la constante 1 (intercepto)."""

    coefficients: np.ndarray
    features: Tuple[Surface, ...]
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        beta = np.asarray(self.coefficients, dtype=float).ravel()
        if len(beta) != len(self.features):
            raise DomainError(
                f"Se esperaban {len(self.features)} coeficientes (recibidos {len(beta)})"
            )
        if not np.all(np.isfinite(beta)):
            raise DomainError("Coeficientes no finitos")
        beta = beta.copy()
        beta.setflags(write=False)
        object.__setattr__(self, 'coefficients', beta)
        if not self.names:
            object.__setattr__(self, 'names', tuple(f"f{i}" for i in range(len(beta))))

    kind = "log-linear"

    def design(self, xy) -> np.ndarray:
        xy = _as_xy(xy)
        if not self.features:
            return np.zeros((len(xy), 0))
        return np.column_stack([f.evaluate(xy) for f in self.features])

    def log_evaluate(self, xy) -> np.ndarray:
        return self.design(xy) @ self.coefficients

    def evaluate(self, xy) -> np.ndarray:
        return np.exp(self.log_evaluate(xy))

    def __call__(self, xy) -> np.ndarray:
        return self.evaluate(xy)

    def value_bounds(self) -> Bounds:
        total = 0.0
        low = 0.0
        for beta, f in zip(self.coefficients, self.features):
            fb = f.value_bounds()
            if fb is None:
                return None
            a, b = beta * fb[0], beta * fb[1]
            total += max(a, b)
            low += min(a, b)
        return (math.exp(low), math.exp(total))

    def describe(self) -> dict:
        return {'kind': self.kind, 'coefficients': dict(zip(self.names, self.coefficients.tolist()))}


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Retícula regular de puntos medios sobre la ventana; pesos = área de celda."""

    window: Window
    nx: int
    ny: int
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise DomainError("La retícula necesita al menos un nodo por eje")
        b = self.window.bounds
        dx = (b.x1 - b.x0) / self.nx
        dy = (b.y1 - b.y0) / self.ny
        xs = b.x0 + dx * (np.arange(self.nx) + 0.5)
        ys = b.y0 + dy * (np.arange(self.ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys)
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        weights = np.full(len(nodes), dx * dy)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def regular(cls, window: Window, n: int) -> "QuadratureGrid":
        return cls(window, n, n)

    @property
    def size(self) -> int:
        return int(len(self.weights))

    def describe(self) -> dict:
        return {'nx': self.nx, 'ny': self.ny, 'window': self.window.bounds.to_list()}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel gaussiano bivariado isotrópico; bandwidth es el desvío estándar."""

    bandwidth: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise DomainError(f"Familia de kernel no soportada: {self.family}")
        if not self.bandwidth > 0:
            raise DomainError(f"El ancho de banda debe ser positivo (recibido {self.bandwidth})")

    def to_dict(self):
        return {'family': self.family, 'bandwidth': self.bandwidth}
