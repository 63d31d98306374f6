"""
Especificación del proceso generador de datos (DGP) de la simulación y la
serie simulada que produce.
"""
from __future__ import annotations

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.geometry import Arc, PointPattern, Segment, SegmentSet, Window
from models.surface import ConstantSurface, Surface
from utils.config_schema import check_keys, get_number, get_numbers, get_str, section
from utils.errors import ConfigError

COVARIATE_NAMES = ('X1', 'X2', 'X3', 'X4')

# red de caminos de referencia: dos líneas que cruzan la ventana y un arco
DEFAULT_LINES = SegmentSet((Segment(0.0, 0.5, 1.0, 0.5), Segment(0.5, 0.0, 0.5, 1.0)))
DEFAULT_ARCS = SegmentSet((Arc(0.0, 0.0, 0.7, 0.0, math.pi / 2),))


@dataclass(frozen=True)
class CovariateSpec:
    x1_amplitude: float = 1.2
    x1_scale: float = 2.0
    x2_amplitude: float = 1.0
    x2_scale: float = 3.0
    # X3, X4 = exp(-scale * distancia al punto más cercano del proceso del período)
    confounder_scale: float = 2.0
    rho0: Tuple[float, float] = (1.40102, 0.93666)
    rho1: Tuple[float, float] = (1.0, 1.5)


@dataclass(frozen=True)
class TreatmentSpec:
    intercept: float = -0.64
    covariates: Tuple[float, ...] = (0.5, 0.5, 0.3, 0.3)
    lagged_treatment: float = 0.5
    lagged_outcome: float = 1.0


@dataclass(frozen=True)
class OutcomeSpec:
    intercept: float = 0.72
    covariates: Tuple[float, ...] = (0.5, 0.2, 0.3, 0.3)
    lagged_covariate: str = 'X2'
    lagged_covariate_coefficient: float = 0.3
    recent_treatment: float = 1.0
    recent_treatment_periods: int = 4
    lagged_outcome: float = 0.5


@dataclass(frozen=True)
class Targets:
    treatment_mean: float = 5.0
    outcome_mean: float = 21.0
    confounder_mean: float = 10.0


@dataclass(frozen=True, eq=False)
class DgpSpec:
    window: Window = field(default_factory=Window.unit_square)
    lines: SegmentSet = DEFAULT_LINES
    arcs: SegmentSet = DEFAULT_ARCS
    covariates: CovariateSpec = field(default_factory=CovariateSpec)
    treatment: TreatmentSpec = field(default_factory=TreatmentSpec)
    outcome: OutcomeSpec = field(default_factory=OutcomeSpec)
    T: int = 500
    burn_in: int = 10
    history_scale: float = 2.0
    targets: Targets = field(default_factory=Targets)
    source: str = ""

    @property
    def n_periods(self) -> int:
        return self.T + self.burn_in

    def with_T(self, T: int) -> "DgpSpec":
        return replace(self, T=int(T))

    def with_intercepts(self, treatment: Optional[float] = None, outcome: Optional[float] = None,
                        rho0: Optional[Tuple[float, float]] = None) -> "DgpSpec":
        spec = self
        if treatment is not None:
            spec = replace(spec, treatment=replace(spec.treatment, intercept=float(treatment)))
        if outcome is not None:
            spec = replace(spec, outcome=replace(spec.outcome, intercept=float(outcome)))
        if rho0 is not None:
            spec = replace(spec, covariates=replace(spec.covariates, rho0=tuple(float(r) for r in rho0)))
        return spec

    @classmethod
    def from_dict(cls, data, source: str = "") -> "DgpSpec":
        check_keys(data, ('window', 'roads', 'covariates', 'treatment', 'outcome', 'series', 'targets'), "dgp")

        window_data = section(data, 'window', 'dgp')
        check_keys(window_data, ('bounds',), 'dgp.window')
        window = Window.from_list(get_numbers(window_data, 'bounds', 'dgp.window', default=[0.0, 0.0, 1.0, 1.0], length=4))

        roads = section(data, 'roads', 'dgp', required=True)
        check_keys(roads, ('lines', 'arcs'), 'dgp.roads')
        lines = SegmentSet.from_dict({'lines': roads.get('lines', [])}).validate_in(window)
        arcs = SegmentSet.from_dict({'arcs': roads.get('arcs', [])}).validate_in(window)
        if len(lines) == 0 or len(arcs) == 0:
            raise ConfigError("Se necesita al menos una línea y un arco", key="dgp.roads")

        c = section(data, 'covariates', 'dgp')
        check_keys(c, CovariateSpec.__dataclass_fields__.keys(), 'dgp.covariates')
        d = CovariateSpec()
        covariates = CovariateSpec(
            x1_amplitude=get_number(c, 'x1_amplitude', 'dgp.covariates', d.x1_amplitude),
            x1_scale=get_number(c, 'x1_scale', 'dgp.covariates', d.x1_scale, positive=True),
            x2_amplitude=get_number(c, 'x2_amplitude', 'dgp.covariates', d.x2_amplitude),
            x2_scale=get_number(c, 'x2_scale', 'dgp.covariates', d.x2_scale, positive=True),
            confounder_scale=get_number(c, 'confounder_scale', 'dgp.covariates', d.confounder_scale, positive=True),
            rho0=tuple(get_numbers(c, 'rho0', 'dgp.covariates', d.rho0, length=2)),
            rho1=tuple(get_numbers(c, 'rho1', 'dgp.covariates', d.rho1, length=2)),
        )

        w = section(data, 'treatment', 'dgp')
        check_keys(w, TreatmentSpec.__dataclass_fields__.keys(), 'dgp.treatment')
        dw = TreatmentSpec()
        treatment = TreatmentSpec(
            intercept=get_number(w, 'intercept', 'dgp.treatment', dw.intercept),
            covariates=tuple(get_numbers(w, 'covariates', 'dgp.treatment', dw.covariates, length=4)),
            lagged_treatment=get_number(w, 'lagged_treatment', 'dgp.treatment', dw.lagged_treatment),
            lagged_outcome=get_number(w, 'lagged_outcome', 'dgp.treatment', dw.lagged_outcome),
        )

        y = section(data, 'outcome', 'dgp')
        check_keys(y, OutcomeSpec.__dataclass_fields__.keys(), 'dgp.outcome')
        dy = OutcomeSpec()
        outcome = OutcomeSpec(
            intercept=get_number(y, 'intercept', 'dgp.outcome', dy.intercept),
            covariates=tuple(get_numbers(y, 'covariates', 'dgp.outcome', dy.covariates, length=4)),
            lagged_covariate=get_str(y, 'lagged_covariate', 'dgp.outcome', dy.lagged_covariate, choices=COVARIATE_NAMES),
            lagged_covariate_coefficient=get_number(
                y, 'lagged_covariate_coefficient', 'dgp.outcome', dy.lagged_covariate_coefficient),
            recent_treatment=get_number(y, 'recent_treatment', 'dgp.outcome', dy.recent_treatment),
            recent_treatment_periods=get_number(
                y, 'recent_treatment_periods', 'dgp.outcome', dy.recent_treatment_periods, minimum=1, integer=True),
            lagged_outcome=get_number(y, 'lagged_outcome', 'dgp.outcome', dy.lagged_outcome),
        )

        s = section(data, 'series', 'dgp')
        check_keys(s, ('T', 'burn_in', 'history_scale'), 'dgp.series')
        t = section(data, 'targets', 'dgp')
        check_keys(t, Targets.__dataclass_fields__.keys(), 'dgp.targets')
        dt = Targets()
        targets = Targets(
            treatment_mean=get_number(t, 'treatment_mean', 'dgp.targets', dt.treatment_mean, positive=True),
            outcome_mean=get_number(t, 'outcome_mean', 'dgp.targets', dt.outcome_mean, positive=True),
            confounder_mean=get_number(t, 'confounder_mean', 'dgp.targets', dt.confounder_mean, positive=True),
        )
        return cls(
            window=window,
            lines=lines,
            arcs=arcs,
            covariates=covariates,
            treatment=treatment,
            outcome=outcome,
            T=get_number(s, 'T', 'dgp.series', 500, minimum=2, integer=True),
            burn_in=get_number(s, 'burn_in', 'dgp.series', 10, minimum=0, integer=True),
            history_scale=get_number(s, 'history_scale', 'dgp.series', 2.0, positive=True),
            targets=targets,
            source=source,
        )

    @classmethod
    def from_toml(cls, path: str) -> "DgpSpec":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"No existe el archivo {path}", key="dgp")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML inválido en {path}: {exc}", key="dgp")
        return cls.from_dict(data, source=path)

    def to_dict(self) -> dict:
        return {
            'window': {'bounds': self.window.bounds.to_list()},
            'roads': {'lines': self.lines.to_dict()['lines'], 'arcs': self.arcs.to_dict()['arcs']},
            'covariates': _plain(asdict(self.covariates)),
            'treatment': _plain(asdict(self.treatment)),
            'outcome': _plain(asdict(self.outcome)),
            'series': {'T': self.T, 'burn_in': self.burn_in, 'history_scale': self.history_scale},
            'targets': _plain(asdict(self.targets)),
        }

    def to_toml(self, header: str = "") -> str:
        """TOML equivalente a to_dict (sólo tablas de un nivel, números, textos y listas)."""
        lines: List[str] = [f"# {h}" if h else "#" for h in header.splitlines()] if header else []
        for name, table in self.to_dict().items():
            if lines:
                lines.append("")
            lines.append(f"[{name}]")
            for key, value in table.items():
                lines.append(f"{key} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"


def _plain(data: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


@dataclass(frozen=True, eq=False)
class SimulatedSeries:
    """
    Serie de burn_in + T períodos. Los primeros burn_in sólo aportan historia;
    la semilla regenera la serie bit a bit.
    """

    spec: DgpSpec
    seed: int
    treatments: Tuple[PointPattern, ...]
    outcomes: Tuple[PointPattern, ...]
    confounders: Tuple[Tuple[PointPattern, PointPattern], ...]
    static_covariates: Dict[str, Surface]
    dynamic_covariates: Tuple[Dict[str, Surface], ...]

    @property
    def n_periods(self) -> int:
        return len(self.treatments)

    @property
    def burn_in(self) -> int:
        return self.spec.burn_in

    @property
    def T(self) -> int:
        return self.n_periods - self.burn_in

    def covariates(self, t: int) -> Dict[str, Surface]:
        out = dict(self.static_covariates)
        out.update(self.dynamic_covariates[t])
        return out

    def lagged_covariate(self, t: int, name: str) -> Surface:
        """X_{t-1}; las covariables fijas no cambian y antes del inicio vale 0."""
        if name in self.static_covariates:
            return self.static_covariates[name]
        if t - 1 < 0:
            return ConstantSurface(0.0)
        return self.dynamic_covariates[t - 1][name]

    def all_covariates(self) -> List[Dict[str, Surface]]:
        return [self.covariates(t) for t in range(self.n_periods)]

    def mean_counts(self) -> Dict[str, float]:
        observed = slice(self.burn_in, self.n_periods)
        return {
            'treatment': float(np.mean([len(p) for p in self.treatments[observed]])),
            'outcome': float(np.mean([len(p) for p in self.outcomes[observed]])),
            'X3': float(np.mean([len(c[0]) for c in self.confounders[observed]])),
            'X4': float(np.mean([len(c[1]) for c in self.confounders[observed]])),
        }

    def to_frame(self) -> pd.DataFrame:
        """Filas t,x,y,type con t desde 1 (incluye los períodos de burn-in)."""
        rows = []
        for t in range(self.n_periods):
            for kind, pattern in (
                ('treatment', self.treatments[t]),
                ('outcome', self.outcomes[t]),
                ('X3', self.confounders[t][0]),
                ('X4', self.confounders[t][1]),
            ):
                for x, y in pattern.points:
                    rows.append((t + 1, x, y, kind))
        return pd.DataFrame(rows, columns=['t', 'x', 'y', 'type'])
