from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

from models.surface import Surface
from utils.errors import DomainError


@dataclass(frozen=True, eq=False)
class Intervention:
    """Distribución de Poisson con intensidad h; expected_count = ∫_Ω h."""

    intensity: Surface
    expected_count: float
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.expected_count >= 0:
            raise DomainError(f"Conteo esperado inválido: {self.expected_count}")

    @property
    def is_null(self) -> bool:
        return self.expected_count == 0

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        args = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.kind}({args})"

    def to_dict(self):
        return {
            'kind': self.kind,
            'params': dict(self.params),
            'expected_count': self.expected_count,
            'label': self.label,
        }


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    if isinstance(value, (list, tuple)):
        return "(" + ",".join(_fmt(v) for v in value) + ")"
    return str(value)


@dataclass(frozen=True, eq=False)
class InterventionSequence:
    """
    (F_{h_1}, ..., F_{h_M}): el primer elemento corresponde al período t, el
    segundo a t-1 y así hacia atrás.
    """

    interventions: Tuple[Intervention, ...]

    def __post_init__(self):
        if len(self.interventions) < 1:
            raise DomainError("La secuencia de intervención necesita M >= 1")

    @property
    def M(self) -> int:
        return len(self.interventions)

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, lag: int) -> Intervention:
        return self.interventions[lag]

    @property
    def label(self) -> str:
        labels = [i.label for i in self.interventions]
        if len(set(labels)) == 1:
            return f"{labels[0]}^{self.M}"
        return " x ".join(reversed(labels))

    def to_dict(self):
        return {'M': self.M, 'label': self.label, 'periods': [i.to_dict() for i in self.interventions]}
