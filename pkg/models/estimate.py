from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

ESTIMATORS = ('ipw', 'hajek')

HAJEK_NOTE = (
    "Cota de Hájek: cota IPW escalada por [(T-M+1)/Σ exp(ℓ_t)]^2; "
    "heurística sin garantía asintótica formal"
)


@dataclass(frozen=True, eq=False)
class WeightSeries:
    """
    Log-pesos ℓ_t = Σ_{j=t-M+1}^{t} [log f_{h}(W_j) - log p_j(W_j)] para cada
    período de estimación t (índices de la serie, ascendentes).
    """

    periods: np.ndarray
    log_weights: np.ndarray
    M: int

    @property
    def n_terms(self) -> int:
        return int(len(self.periods))

    def normalized(self) -> np.ndarray:
        """exp(ℓ_t - max ℓ); todos cero si ningún peso es positivo."""
        top = np.max(self.log_weights) if self.n_terms else -np.inf
        if not np.isfinite(top):
            return np.zeros(self.n_terms)
        return np.exp(self.log_weights - top)

    def effective_sample_size(self) -> float:
        w = self.normalized()
        total = w.sum()
        if total == 0:
            return 0.0
        return float(total ** 2 / np.sum(w ** 2))

    def max_normalized_weight(self) -> float:
        w = self.normalized()
        total = w.sum()
        return float(w.max() / total) if total > 0 else 0.0

    def mean_weight(self) -> float:
        with np.errstate(over='ignore'):
            return float(np.mean(np.exp(self.log_weights)))

    def to_dict(self):
        return {
            'M': self.M,
            'n_terms': self.n_terms,
            'effective_sample_size': self.effective_sample_size(),
            'max_normalized_weight': self.max_normalized_weight(),
            'mean_weight': self.mean_weight(),
        }


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """
    Estimación del conteo esperado en B (o de un contraste). `variance_bound`
    es v̂*/T, la cota estimada de la varianza del promedio.
    """

    descriptor: Dict[str, Any]
    estimate: float
    variance_bound: float
    level: float
    lower: float
    upper: float
    contributions: np.ndarray
    T: int
    p_value: Optional[float] = None
    weights: Optional[WeightSeries] = None
    note: str = ""
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def estimator(self) -> str:
        return self.descriptor['estimator']

    @property
    def M(self) -> int:
        return int(self.descriptor['M'])

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.lower, self.upper)

    @property
    def standard_error(self) -> float:
        return float(np.sqrt(self.variance_bound))

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_row(self) -> Dict[str, Any]:
        row = {k: v for k, v in self.descriptor.items() if not isinstance(v, (dict, list))}
        row.update({
            'estimate': self.estimate,
            'variance_bound': self.variance_bound,
            'level': self.level,
            'lower': self.lower,
            'upper': self.upper,
            'T': self.T,
            'p_value': self.p_value,
        })
        if self.weights is not None:
            row['effective_sample_size'] = self.weights.effective_sample_size()
        return row

    def to_dict(self):
        data = {
            'descriptor': dict(self.descriptor),
            'estimate': self.estimate,
            'variance_bound': self.variance_bound,
            'confidence_interval': {'level': self.level, 'lower': self.lower, 'upper': self.upper},
            'T': self.T,
            'p_value': self.p_value,
            'contributions': self.contributions.tolist(),
        }
        if self.weights is not None:
            data['weights'] = self.weights.to_dict()
        if self.note:
            data['note'] = self.note
        if self.extras:
            data['extras'] = dict(self.extras)
        return data
