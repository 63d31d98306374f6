"""
Constructores de intervenciones estocásticas (Poisson) y densidad de
secuencias de intervención.
"""
import logging
from typing import Sequence

import numpy as np

from models.geometry import PointPattern, Region, Window
from models.intervention import Intervention, InterventionSequence
from models.process import PoissonProcess
from models.surface import (
    CompositeSurface,
    ConstantSurface,
    GaussianDensitySurface,
    QuadratureGrid,
    RegionIndicatorSurface,
    Surface,
)
from services import pointprocess
from services.surfaces import integrate, integrate_window
from utils.errors import DegenerateInterventionError, DomainError

logger = logging.getLogger(__name__)

BASELINE_TOLERANCE = 1e-6


def homogeneous(h: float, window: Window) -> Intervention:
    if h < 0:
        raise DomainError(f"La intensidad h debe ser no negativa (recibido {h})")
    return Intervention(ConstantSurface(float(h)), float(h) * window.area, "homogeneous", {'h': float(h)})


def _check_baseline(baseline: Surface, grid: QuadratureGrid) -> float:
    mass = integrate_window(baseline, grid)
    if abs(mass - 1.0) > BASELINE_TOLERANCE:
        raise DomainError(f"La densidad base debe integrar 1 en la ventana (integral medida {mass:.8f})")
    return mass


def scaled_baseline(c: float, baseline: Surface, grid: QuadratureGrid) -> Intervention:
    """h = c * φ0; el conteo esperado es c."""
    if c < 0:
        raise DomainError(f"c debe ser no negativo (recibido {c})")
    _check_baseline(baseline, grid)
    if isinstance(baseline, ConstantSurface):
        return Intervention(ConstantSurface(c * baseline.value), float(c), "scaled_baseline", {'c': float(c)})
    return Intervention(CompositeSurface((baseline,), float(c)), float(c), "scaled_baseline", {'c': float(c)})


def focal(c: float, baseline: Surface, focal_point, precision: float, grid: QuadratureGrid) -> Intervention:
    """
    h_α = c_α φ0 d_α con d_α normal centrada en focal_point y precisión α;
    c_α se resuelve por cuadratura para que ∫ h_α = c. Con α = 0 coincide con
    scaled_baseline.
    """
    if not c > 0:
        raise DomainError(f"c debe ser positivo (recibido {c})")
    if precision < 0:
        raise DomainError(f"La precisión α debe ser no negativa (recibido {precision})")
    _check_baseline(baseline, grid)
    point = (float(focal_point[0]), float(focal_point[1]))
    params = {'c': float(c), 'focus': point, 'alpha': float(precision)}
    if precision == 0:
        return Intervention(CompositeSurface((baseline,), float(c)), float(c), "focal", params)

    focus = GaussianDensitySurface(point, float(precision))
    mass = integrate_window(CompositeSurface((baseline, focus)), grid)
    if not mass > 0:
        raise DegenerateInterventionError(
            f"La densidad base no tiene masa cerca del foco {point} con α={precision:g}"
        )
    intensity = CompositeSurface((baseline, focus), float(c) / mass)
    logger.debug("Intervención focal en %s: α=%g, c_α=%.6g", point, precision, c / mass)
    return Intervention(intensity, float(c), "focal", params)


def local(region: Region, c_inside: float, c_outside: float, baseline: Surface,
          grid: QuadratureGrid) -> Intervention:
    """
    Cambia la estrategia sólo dentro de la región: dentro h = c_in φ0 / m_in y
    fuera h = c_out φ0 / m_out, con m_* la masa de φ0 en cada parte.
    """
    if c_inside < 0 or c_outside < 0:
        raise DomainError("c_inside y c_outside deben ser no negativos")
    mass_in = integrate(baseline, region, grid)
    mass_total = integrate_window(baseline, grid)
    mass_out = mass_total - mass_in
    if not mass_in > 0:
        raise DegenerateInterventionError(f"La región '{region.label}' no tiene masa de la densidad base")
    if c_outside > 0 and not mass_out > 0:
        raise DegenerateInterventionError(f"El complemento de '{region.label}' no tiene masa de la densidad base")

    outside_factor = c_outside / mass_out if mass_out > 0 else 0.0
    factor = RegionIndicatorSurface(region, float(c_inside) / mass_in, outside_factor)
    params = {'region': region.label, 'c_inside': float(c_inside), 'c_outside': float(c_outside)}
    return Intervention(CompositeSurface((baseline, factor)), float(c_inside + c_outside), "local", params)


def iid_sequence(intervention: Intervention, M: int) -> InterventionSequence:
    """F_h^M."""
    if M < 1:
        raise DomainError(f"M debe ser >= 1 (recibido {M})")
    return InterventionSequence(tuple([intervention] * M))


def lagged_sequence(h0: Intervention, h1: Intervention, M: int) -> InterventionSequence:
    """F_{h0}^{M-1} x F_{h1}: h1 se aplica M-1 períodos antes de t, h0 en el resto."""
    if M < 1:
        raise DomainError(f"M debe ser >= 1 (recibido {M})")
    return InterventionSequence(tuple([h0] * (M - 1) + [h1]))


def staged_sequence(stages: Sequence[Intervention]) -> InterventionSequence:
    """Secuencia explícita, ordenada desde el período t hacia atrás."""
    return InterventionSequence(tuple(stages))


def as_process(intervention: Intervention, window: Window, grid: QuadratureGrid) -> PoissonProcess:
    return pointprocess.from_intensity(intervention.intensity, window, grid)


def sample(intervention: Intervention, window: Window, grid: QuadratureGrid,
           rng: np.random.Generator, timestamp: int = 0) -> PointPattern:
    return pointprocess.sample(as_process(intervention, window, grid), rng, timestamp)


def sequence_log_density(seq: InterventionSequence, patterns: Sequence[PointPattern], grid: QuadratureGrid) -> float:
    """Σ_j log f_{h_j}(w_j); patterns en el mismo orden que la secuencia."""
    if len(patterns) != seq.M:
        raise DomainError(f"Se esperaban {seq.M} patrones (recibidos {len(patterns)})")
    window = grid.window
    total = 0.0
    for intervention, pattern in zip(seq.interventions, patterns):
        total += pointprocess.log_density(as_process(intervention, window, grid), pattern, grid)
    return total
