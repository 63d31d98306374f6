from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from models.geometry import Window
from models.surface import LogLinearIntensity, Surface
from utils.errors import DomainError

Intensity = Union[Surface, LogLinearIntensity]

# factor sobre el máximo en los nodos de cuadratura para la cota de thinning
BOUND_SAFETY = 1.05


@dataclass(frozen=True, eq=False)
class PoissonProcess:
    """
    Proceso de Poisson sobre la ventana. `rate` no es None cuando la intensidad
    es constante y entonces el muestreo es exacto (sin thinning).
    """

    intensity: Intensity
    window: Window
    upper_bound: float
    rate: Optional[float] = None

    def __post_init__(self):
        if not self.upper_bound >= 0:
            raise DomainError(f"Cota de thinning inválida: {self.upper_bound}")
        if self.rate is not None and self.rate < 0:
            raise DomainError(f"Intensidad negativa: {self.rate}")

    @property
    def is_homogeneous(self) -> bool:
        return self.rate is not None

    def with_bound(self, bound: float) -> "PoissonProcess":
        return replace(self, upper_bound=float(bound))

    def describe(self) -> dict:
        return {
            'intensity': self.intensity.describe(),
            'upper_bound': self.upper_bound,
            'homogeneous': self.is_homogeneous,
        }
