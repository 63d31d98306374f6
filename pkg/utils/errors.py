"""
Jerarquía de errores del motor. Todas heredan de ValueError para conservar el
contrato de validación de siempre; cada clase declara el código de salida que
usa la CLI.
"""
from __future__ import annotations

from typing import Optional


class EngineError(ValueError):
    exit_code = 1


class DomainError(EngineError):
    """Geometría o parámetro fuera de dominio."""


class EmptyTargetError(DomainError):
    """Distancia pedida a un conjunto vacío; el llamador debe aplicar su convención."""


class InsufficientDataError(DomainError):
    pass


class DensityZeroError(EngineError):
    """La intensidad vale 0 en algún punto del patrón: densidad nula."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class PositivityViolationError(EngineError):
    exit_code = 3

    def __init__(self, message: str, period: Optional[int] = None):
        super().__init__(message)
        self.period = period


class ThinningBoundError(EngineError):
    """Interno: una intensidad realizada superó la cota de thinning."""

    def __init__(self, message: str, observed_max: float = 0.0):
        super().__init__(message)
        self.observed_max = observed_max


class IllConditionedFitError(EngineError):
    exit_code = 4

    def __init__(self, message: str, feature: Optional[str] = None):
        super().__init__(message)
        self.feature = feature


class DegenerateWeightsError(EngineError):
    pass


class DegenerateInterventionError(DomainError):
    pass


class CalibrationError(EngineError):
    pass


class ConfigError(EngineError):
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class DataError(EngineError):
    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(f"fila {row}: {message}" if row is not None else message)
        self.row = row
