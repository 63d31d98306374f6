"""
Tipos del modelo de asignación del tratamiento: especificación de features,
historia previa a cada período, modelo ajustado y reporte de balance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from models.geometry import PointPattern
from models.surface import Surface
from utils.errors import ConfigError, DomainError

# escalas de decaimiento por defecto: exp(-2D) para el último período y
# exp(-D) para las sumas sobre ventanas de días
DEFAULT_DECAY_SCALE = 2.0
DEFAULT_SUM_SCALE = 1.0

FEATURE_KINDS = ('intercept', 'covariate', 'treatment_decay', 'outcome_decay', 'treatment_sum', 'outcome_sum')


@dataclass(frozen=True)
class FeatureSpec:
    """Una feature del modelo, identificada por su nombre de configuración."""

    name: str
    kind: str
    covariate: Optional[str] = None
    lag_from: int = 0
    lag_to: int = 0
    scale: float = 1.0

    @property
    def max_lag(self) -> int:
        return self.lag_to

    @property
    def source(self) -> Optional[str]:
        if self.kind.startswith('treatment'):
            return 'treatment'
        if self.kind.startswith('outcome'):
            return 'outcome'
        return None

    @classmethod
    def parse(cls, name: str) -> "FeatureSpec":
        """
        Vocabulario: intercept, covariate:<nombre>, treatment_decay:<lag>,
        outcome_decay:<lag>, treatment_sum:<a>-<b>, outcome_sum:<a>-<b>.
        Un sufijo @<escala> cambia la escala de decaimiento.
        """
        raw = name.strip()
        if raw == 'intercept':
            return cls(raw, 'intercept')
        kind, sep, arg = raw.partition(':')
        if not sep or kind not in FEATURE_KINDS or not arg:
            raise ConfigError(f"Feature desconocida '{name}'", key="features")
        if kind == 'covariate':
            return cls(raw, kind, covariate=arg)

        arg, _, scale_txt = arg.partition('@')
        try:
            if kind.endswith('_decay'):
                lag_from = lag_to = int(arg)
                scale = float(scale_txt) if scale_txt else DEFAULT_DECAY_SCALE
            else:
                a, _, b = arg.partition('-')
                lag_from, lag_to = int(a), int(b or a)
                scale = float(scale_txt) if scale_txt else DEFAULT_SUM_SCALE
        except ValueError:
            raise ConfigError(f"Rezagos inválidos en la feature '{name}'", key="features")
        if lag_from < 1 or lag_to < lag_from:
            raise ConfigError(f"Los rezagos de '{name}' deben cumplir 1 <= a <= b", key="features")
        if not scale > 0:
            raise ConfigError(f"La escala de '{name}' debe ser positiva", key="features")
        return cls(raw, kind, lag_from=lag_from, lag_to=lag_to, scale=scale)


def parse_features(names) -> Tuple[FeatureSpec, ...]:
    specs = tuple(FeatureSpec.parse(n) for n in names)
    if not specs:
        raise ConfigError("El modelo necesita al menos una feature", key="features")
    if len({s.name for s in specs}) != len(specs):
        raise ConfigError("Features repetidas", key="features")
    return specs


@dataclass(frozen=True, eq=False)
class HistoryFrame:
    """
    Todo lo observado antes de W_t: patrones rezagados (índice 0 = t-1) y las
    covariables del período t. Los rezagos anteriores al inicio de la serie
    quedan como patrones vacíos.
    """

    period: int
    features: Tuple[FeatureSpec, ...]
    lagged_treatments: Tuple[PointPattern, ...]
    lagged_outcomes: Tuple[PointPattern, ...]
    covariates: Dict[str, Surface] = field(default_factory=dict)

    @property
    def max_lag(self) -> int:
        return len(self.lagged_treatments)

    def lagged(self, source: str, lag: int) -> PointPattern:
        patterns = self.lagged_treatments if source == 'treatment' else self.lagged_outcomes
        if lag < 1 or lag > len(patterns):
            raise DomainError(f"El rezago {lag} no está disponible en el período {self.period}")
        return patterns[lag - 1]


@dataclass(frozen=True, eq=False)
class FitDiagnostics:
    log_likelihood: float
    iterations: int
    converged: bool
    gradient_norm: float
    information: np.ndarray
    n_periods: int
    n_points: float
    # log-verosimilitud después de cada paso de Newton aceptado
    log_likelihood_path: Tuple[float, ...] = ()

    def to_dict(self):
        return {
            'log_likelihood': self.log_likelihood,
            'iterations': self.iterations,
            'converged': self.converged,
            'gradient_norm': self.gradient_norm,
            'n_periods': self.n_periods,
            'n_points': self.n_points,
        }


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """λ_t(ω) = exp{β·X_t(ω)} con β ajustado por máxima verosimilitud."""

    features: Tuple[FeatureSpec, ...]
    coefficients: np.ndarray
    diagnostics: Optional[FitDiagnostics] = None

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def max_lag(self) -> int:
        return max((f.max_lag for f in self.features), default=0)

    def covariance(self) -> np.ndarray:
        if self.diagnostics is None:
            raise DomainError("El modelo no tiene información observada (no fue ajustado)")
        return np.linalg.inv(self.diagnostics.information)

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance()), 0.0, None))

    def wald_pvalues(self) -> np.ndarray:
        se = self.standard_errors()
        with np.errstate(divide='ignore', invalid='ignore'):
            z = np.where(se > 0, np.abs(self.coefficients) / se, np.inf)
        return 2.0 * norm.sf(z)

    def to_dict(self):
        data = {
            'features': self.feature_names,
            'coefficients': self.coefficients.tolist(),
        }
        if self.diagnostics is not None:
            data['standard_errors'] = self.standard_errors().tolist()
            data['p_values'] = self.wald_pvalues().tolist()
            data['information'] = self.diagnostics.information.tolist()
            data['diagnostics'] = self.diagnostics.to_dict()
        return data

    @classmethod
    def from_dict(cls, data) -> "PropensityModel":
        features = parse_features(data['features'])
        beta = np.asarray(data['coefficients'], dtype=float)
        if len(beta) != len(features):
            raise ConfigError("La cantidad de coeficientes no coincide con la de features", key="coefficients")
        diagnostics = None
        if 'information' in data:
            meta = data.get('diagnostics', {})
            diagnostics = FitDiagnostics(
                log_likelihood=float(meta.get('log_likelihood', np.nan)),
                iterations=int(meta.get('iterations', 0)),
                converged=bool(meta.get('converged', True)),
                gradient_norm=float(meta.get('gradient_norm', np.nan)),
                information=np.asarray(data['information'], dtype=float),
                n_periods=int(meta.get('n_periods', 0)),
                n_points=float(meta.get('n_points', 0)),
            )
        return cls(features, beta, diagnostics)


@dataclass(frozen=True)
class BalanceRow:
    feature: str
    unweighted_coefficient: float
    unweighted_p_value: float
    weighted_coefficient: float
    weighted_p_value: float

    def to_dict(self):
        return {
            'feature': self.feature,
            'unweighted_coefficient': self.unweighted_coefficient,
            'unweighted_p_value': self.unweighted_p_value,
            'weighted_coefficient': self.weighted_coefficient,
            'weighted_p_value': self.weighted_p_value,
        }


@dataclass(frozen=True)
class BalanceReport:
    rows: Tuple[BalanceRow, ...]
    truncation_quantile: float
    truncation_threshold: float
    n_truncated: int

    def row(self, feature: str) -> BalanceRow:
        for r in self.rows:
            if r.feature == feature:
                return r
        raise KeyError(feature)

    def to_dict(self):
        return {
            'truncation_quantile': self.truncation_quantile,
            'truncation_threshold': self.truncation_threshold,
            'n_truncated': self.n_truncated,
            'features': [r.to_dict() for r in self.rows],
        }
