"""
Configuración de un escenario (un archivo TOML = un experimento).

`ScenarioConfig.from_dict` valida todo antes de calcular nada: claves
desconocidas, tipos, rangos y referencias cruzadas (regiones, intervenciones,
secuencias). `to_dict` devuelve la configuración resuelta que se guarda en el
manifest y alcanza para repetir la corrida.
"""
from __future__ import annotations

import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from utils.config_schema import check_keys, get_bool, get_number, get_numbers, get_str, section
from utils.errors import ConfigError

MODES = ('simulate', 'estimate', 'coverage', 'balance', 'truth-oracle')
INTERVENTION_KINDS = ('homogeneous', 'scaled_baseline', 'focal', 'local')
SEQUENCE_KINDS = ('staged', 'lagged')
BASELINES = ('uniform', 'observed')
WINDOW_REGION = 'window'

# valores por defecto que cambian con el perfil (desk | full)
PROFILE_DEFAULTS = {
    'desk': {'datasets': 50, 'R': 500, 'balance_datasets': 50, 'variance_R': 100},
    'full': {'datasets': 200, 'R': 1000, 'balance_datasets': 200, 'variance_R': 500},
}


def _resolve(path: str, base_dir: str) -> str:
    if path == 'default' or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


@dataclass(frozen=True)
class BaselineDecl:
    source: str = 'uniform'
    path: str = ''

    @classmethod
    def parse(cls, value, key: str, base_dir: str) -> "BaselineDecl":
        if value is None:
            return cls()
        if isinstance(value, str):
            if value not in BASELINES:
                raise ConfigError(f"Línea base '{value}' inválida (opciones: {', '.join(BASELINES)} o {{raster = ...}})",
                                  key=key)
            return cls(value)
        if isinstance(value, Mapping):
            check_keys(value, ('raster',), key)
            return cls('raster', _resolve(get_str(value, 'raster', key), base_dir))
        raise ConfigError("Se esperaba 'uniform', 'observed' o {raster = ...}", key=key)


@dataclass(frozen=True)
class InterventionDecl:
    name: str
    kind: str
    h: float = 0.0
    c: float = 1.0
    center: Tuple[float, float] = (0.5, 0.5)
    precision: float = 1.0
    region: str = ''
    c_inside: float = 1.0
    c_outside: float = 1.0
    baseline: BaselineDecl = field(default_factory=BaselineDecl)

    @classmethod
    def parse(cls, data: Mapping[str, Any], key: str, base_dir: str) -> "InterventionDecl":
        name = get_str(data, 'name', key)
        kind = get_str(data, 'kind', key, choices=INTERVENTION_KINDS)
        allowed = {
            'homogeneous': ('h',),
            'scaled_baseline': ('c', 'baseline'),
            'focal': ('c', 'center', 'precision', 'baseline'),
            'local': ('region', 'c_inside', 'c_outside', 'baseline'),
        }[kind]
        check_keys(data, ('name', 'kind', *allowed), key)
        if kind == 'homogeneous':
            return cls(name, kind, h=get_number(data, 'h', key, minimum=0.0))
        baseline = BaselineDecl.parse(data.get('baseline'), f"{key}.baseline", base_dir)
        if kind == 'scaled_baseline':
            return cls(name, kind, c=get_number(data, 'c', key, minimum=0.0), baseline=baseline)
        if kind == 'focal':
            return cls(
                name, kind,
                c=get_number(data, 'c', key, minimum=0.0),
                center=tuple(get_numbers(data, 'center', key, length=2)),
                precision=get_number(data, 'precision', key, positive=True),
                baseline=baseline,
            )
        return cls(
            name, kind,
            region=get_str(data, 'region', key),
            c_inside=get_number(data, 'c_inside', key, minimum=0.0),
            c_outside=get_number(data, 'c_outside', key, minimum=0.0, default=0.0),
            baseline=baseline,
        )


@dataclass(frozen=True)
class SequenceDecl:
    """Secuencia explícita; `stages` va del período t hacia atrás."""

    name: str
    kind: str
    stages: Tuple[str, ...] = ()
    h0: str = ''
    h1: str = ''
    M: int = 1

    @classmethod
    def parse(cls, data: Mapping[str, Any], key: str) -> "SequenceDecl":
        name = get_str(data, 'name', key)
        kind = get_str(data, 'kind', key, choices=SEQUENCE_KINDS)
        if kind == 'staged':
            check_keys(data, ('name', 'kind', 'stages'), key)
            stages = data.get('stages')
            if not isinstance(stages, list) or not stages or not all(isinstance(s, str) for s in stages):
                raise ConfigError("Se esperaba una lista no vacía de nombres de intervención", key=f"{key}.stages")
            return cls(name, kind, stages=tuple(stages), M=len(stages))
        check_keys(data, ('name', 'kind', 'h0', 'h1', 'M'), key)
        return cls(name, kind, h0=get_str(data, 'h0', key), h1=get_str(data, 'h1', key),
                   M=get_number(data, 'M', key, integer=True, minimum=1))

    def references(self) -> Tuple[str, ...]:
        return self.stages if self.kind == 'staged' else (self.h0, self.h1)


@dataclass(frozen=True)
class DataDecl:
    path: str
    window: Tuple[float, float, float, float]
    treatment_type: str = 'treatment'
    outcome_type: str = 'outcome'
    history_periods: int = 0
    dgp_spec: str = ''
    covariates: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @classmethod
    def parse(cls, data: Mapping[str, Any], base_dir: str) -> "DataDecl":
        key = 'data'
        check_keys(data, ('path', 'window', 'treatment_type', 'outcome_type', 'history_periods',
                          'dgp_spec', 'covariates'), key)
        covariates = {}
        for name, spec in section(data, 'covariates', key).items():
            ckey = f"{key}.covariates.{name}"
            if not isinstance(spec, Mapping):
                raise ConfigError("Se esperaba {raster = ...} o {type = ..., scale = ...}", key=ckey)
            if 'raster' in spec:
                check_keys(spec, ('raster',), ckey)
                covariates[name] = {'raster': _resolve(get_str(spec, 'raster', ckey), base_dir)}
            else:
                check_keys(spec, ('type', 'scale', 'amplitude'), ckey)
                covariates[name] = {
                    'type': get_str(spec, 'type', ckey),
                    'scale': get_number(spec, 'scale', ckey, positive=True, default=2.0),
                    'amplitude': get_number(spec, 'amplitude', ckey, default=1.0),
                }
        dgp = get_str(data, 'dgp_spec', key, default='')
        return cls(
            path=_resolve(get_str(data, 'path', key), base_dir),
            window=tuple(get_numbers(data, 'window', key, length=4, default=[0.0, 0.0, 1.0, 1.0])),
            treatment_type=get_str(data, 'treatment_type', key, default='treatment'),
            outcome_type=get_str(data, 'outcome_type', key, default='outcome'),
            history_periods=get_number(data, 'history_periods', key, integer=True, minimum=0, default=0),
            dgp_spec=_resolve(dgp, base_dir) if dgp else '',
            covariates=covariates,
        )


@dataclass(frozen=True)
class EstimateDecl:
    M: Tuple[int, ...] = (1,)
    regions: Tuple[str, ...] = (WINDOW_REGION,)
    interventions: Tuple[str, ...] = ()
    sequences: Tuple[str, ...] = ()
    estimators: Tuple[str, ...] = ('ipw', 'hajek')
    levels: Tuple[float, ...] = (0.95,)
    bandwidth: Optional[float] = None
    use_counts: bool = False
    contrasts: Tuple[Tuple[str, str], ...] = ()
    rasters: bool = False

    @classmethod
    def parse(cls, data: Mapping[str, Any]) -> "EstimateDecl":
        key = 'estimate'
        check_keys(data, ('M', 'regions', 'interventions', 'sequences', 'estimators', 'level', 'levels',
                          'bandwidth', 'use_counts', 'contrasts', 'rasters'), key)
        if 'level' in data and 'levels' in data:
            raise ConfigError("Usar 'level' o 'levels', no ambos", key=f"{key}.levels")
        if 'levels' in data:
            levels = get_numbers(data, 'levels', key)
        else:
            levels = [get_number(data, 'level', key, default=0.95)]
        for level in levels:
            if not 0 < level < 1:
                raise ConfigError(f"El nivel debe estar en (0, 1) (recibido {level})", key=f"{key}.levels")

        bandwidth = data.get('bandwidth', 'rule')
        if bandwidth == 'rule':
            bandwidth = None
        else:
            bandwidth = get_number(data, 'bandwidth', key, positive=True)

        contrasts = data.get('contrasts', [])
        if not isinstance(contrasts, list) or not all(
                isinstance(c, list) and len(c) == 2 and all(isinstance(n, str) for n in c) for c in contrasts):
            raise ConfigError("Se esperaba una lista de pares [primera, segunda]", key=f"{key}.contrasts")

        estimators = _names(data, 'estimators', key, ('ipw', 'hajek'))
        for name in estimators:
            if name not in ('ipw', 'hajek'):
                raise ConfigError(f"Estimador desconocido '{name}'", key=f"{key}.estimators")
        return cls(
            M=tuple(get_numbers(data, 'M', key, integer=True, positive=True, default=[1])),
            regions=_names(data, 'regions', key, (WINDOW_REGION,)),
            interventions=_names(data, 'interventions', key, ()),
            sequences=_names(data, 'sequences', key, ()),
            estimators=estimators,
            levels=tuple(levels),
            bandwidth=bandwidth,
            use_counts=get_bool(data, 'use_counts', key, default=False),
            contrasts=tuple((a, b) for a, b in contrasts),
            rasters=get_bool(data, 'rasters', key, default=False),
        )


def _names(data: Mapping[str, Any], name: str, prefix: str, default) -> Tuple[str, ...]:
    value = data.get(name, list(default))
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError("Se esperaba una lista de nombres", key=f"{prefix}.{name}")
    return tuple(value)


@dataclass(frozen=True)
class PropensityDecl:
    flavors: Tuple[str, ...] = ('estimated',)
    features: Tuple[str, ...] = ()
    truncation_quantile: float = 0.9

    @classmethod
    def parse(cls, data: Mapping[str, Any]) -> "PropensityDecl":
        key = 'propensity'
        check_keys(data, ('flavors', 'features', 'truncation_quantile'), key)
        flavors = _names(data, 'flavors', key, ('estimated',))
        for flavor in flavors:
            if flavor not in ('true', 'estimated', 'unadjusted'):
                raise ConfigError(f"Sabor desconocido '{flavor}' (opciones: true, estimated, unadjusted)",
                                  key=f"{key}.flavors")
        return cls(
            flavors=flavors,
            features=_names(data, 'features', key, ()),
            truncation_quantile=get_number(data, 'truncation_quantile', key, default=0.9,
                                           minimum=0.0, maximum=1.0),
        )


@dataclass(frozen=True)
class CoverageDecl:
    T: Tuple[int, ...] = (500,)
    datasets: int = 50
    R: int = 500
    true_variance: bool = False
    variance_R: int = 100
    variance_stride: int = 10
    period_stride: int = 1

    @classmethod
    def parse(cls, data: Mapping[str, Any], defaults: Dict[str, int], key: str = 'coverage') -> "CoverageDecl":
        check_keys(data, ('T', 'datasets', 'R', 'true_variance', 'variance_R', 'variance_stride',
                          'period_stride'), key)
        return cls(
            T=tuple(get_numbers(data, 'T', key, integer=True, positive=True, default=[500])),
            datasets=get_number(data, 'datasets', key, integer=True, minimum=1, default=defaults['datasets']),
            R=get_number(data, 'R', key, integer=True, minimum=1, default=defaults['R']),
            true_variance=get_bool(data, 'true_variance', key, default=False),
            variance_R=get_number(data, 'variance_R', key, integer=True, minimum=2, default=defaults['variance_R']),
            variance_stride=get_number(data, 'variance_stride', key, integer=True, minimum=1, default=10),
            period_stride=get_number(data, 'period_stride', key, integer=True, minimum=1, default=1),
        )


@dataclass(frozen=True)
class BalanceDecl:
    datasets: int = 50
    weights: str = 'true'

    @classmethod
    def parse(cls, data: Mapping[str, Any], defaults: Dict[str, int]) -> "BalanceDecl":
        key = 'balance'
        check_keys(data, ('datasets', 'weights'), key)
        return cls(
            datasets=get_number(data, 'datasets', key, integer=True, minimum=1,
                                default=defaults['balance_datasets']),
            weights=get_str(data, 'weights', key, default='true', choices=('true', 'estimated')),
        )


@dataclass(frozen=True)
class DgpDecl:
    spec: str = 'default'
    T: Optional[int] = None
    burn_in: Optional[int] = None

    @classmethod
    def parse(cls, data: Mapping[str, Any], base_dir: str) -> "DgpDecl":
        key = 'dgp'
        check_keys(data, ('spec', 'T', 'burn_in'), key)
        return cls(
            spec=_resolve(get_str(data, 'spec', key, default='default'), base_dir),
            T=get_number(data, 'T', key, integer=True, minimum=1, default=None),
            burn_in=get_number(data, 'burn_in', key, integer=True, minimum=0, default=None),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str
    seed: int
    profile: str = 'desk'
    threads: Optional[int] = None
    output_dir: str = ''
    dgp: DgpDecl = field(default_factory=DgpDecl)
    data: Optional[DataDecl] = None
    regions: Dict[str, List[List[float]]] = field(default_factory=dict)
    interventions: Tuple[InterventionDecl, ...] = ()
    sequences: Tuple[SequenceDecl, ...] = ()
    estimate: EstimateDecl = field(default_factory=EstimateDecl)
    propensity: PropensityDecl = field(default_factory=PropensityDecl)
    coverage: CoverageDecl = field(default_factory=CoverageDecl)
    balance: BalanceDecl = field(default_factory=BalanceDecl)
    source: str = ''

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: str = '.', profile: Optional[str] = None,
                  source: str = '', default_profile: str = 'desk') -> "ScenarioConfig":
        check_keys(data, ('mode', 'seed', 'profile', 'threads', 'output_dir', 'dgp', 'data', 'regions',
                          'interventions', 'sequences', 'estimate', 'propensity', 'coverage', 'oracle',
                          'balance'))
        mode = get_str(data, 'mode', choices=MODES)
        profile = profile or get_str(data, 'profile', default=default_profile, choices=tuple(PROFILE_DEFAULTS))
        defaults = PROFILE_DEFAULTS[profile]

        if 'coverage' in data and 'oracle' in data:
            raise ConfigError("Usar [coverage] o [oracle], no ambos", key='oracle')
        oracle_key = 'oracle' if 'oracle' in data else 'coverage'

        regions = {}
        for name, rects in section(data, 'regions').items():
            if name == WINDOW_REGION:
                raise ConfigError(f"'{WINDOW_REGION}' es un nombre reservado", key=f"regions.{name}")
            if not isinstance(rects, list) or not rects:
                raise ConfigError("Se esperaba una lista de rectángulos [x0, y0, x1, y1]", key=f"regions.{name}")
            wrapped = {str(i): r for i, r in enumerate(rects)}
            regions[name] = [get_numbers(wrapped, str(i), f"regions.{name}", length=4) for i in range(len(rects))]

        interventions = tuple(
            InterventionDecl.parse(item, f"interventions[{i}]", base_dir)
            for i, item in enumerate(_table_list(data, 'interventions'))
        )
        sequences = tuple(SequenceDecl.parse(item, f"sequences[{i}]")
                          for i, item in enumerate(_table_list(data, 'sequences')))

        data_decl = DataDecl.parse(data['data'], base_dir) if 'data' in data else None
        config = cls(
            mode=mode,
            seed=get_number(data, 'seed', integer=True, minimum=0),
            profile=profile,
            threads=get_number(data, 'threads', integer=True, minimum=1, default=None),
            output_dir=_resolve(get_str(data, 'output_dir', default=''), base_dir) if 'output_dir' in data else '',
            dgp=DgpDecl.parse(section(data, 'dgp'), base_dir),
            data=data_decl,
            regions=regions,
            interventions=interventions,
            sequences=sequences,
            estimate=EstimateDecl.parse(section(data, 'estimate')),
            propensity=PropensityDecl.parse(section(data, 'propensity')),
            coverage=CoverageDecl.parse(section(data, oracle_key), defaults, oracle_key),
            balance=BalanceDecl.parse(section(data, 'balance'), defaults),
            source=source,
        )
        config._check_references()
        return config

    @classmethod
    def from_toml(cls, path: str, profile: Optional[str] = None, default_profile: str = 'desk') -> "ScenarioConfig":
        try:
            with open(path, 'rb') as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"No existe el archivo de configuración {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML inválido en {path}: {exc}")
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)), profile, path, default_profile)

    def _check_references(self) -> None:
        names = [d.name for d in self.interventions] + [s.name for s in self.sequences]
        seen = set()
        for name in names:
            if name in seen:
                raise ConfigError(f"Nombre repetido '{name}'", key='interventions')
            seen.add(name)
        known_interventions = {d.name for d in self.interventions}
        known_regions = {WINDOW_REGION, *self.regions}

        for d in self.interventions:
            if d.kind == 'local' and d.region not in known_regions:
                raise ConfigError(f"Región desconocida '{d.region}'", key=f"interventions.{d.name}.region")
        for s in self.sequences:
            for ref in s.references():
                if ref not in known_interventions:
                    raise ConfigError(f"Intervención desconocida '{ref}'", key=f"sequences.{s.name}")
        for name in self.estimate.regions:
            if name not in known_regions:
                raise ConfigError(f"Región desconocida '{name}'", key='estimate.regions')
        for name in self.estimate.interventions:
            if name not in known_interventions:
                raise ConfigError(f"Intervención desconocida '{name}'", key='estimate.interventions')
        known_sequences = {s.name for s in self.sequences}
        for name in self.estimate.sequences:
            if name not in known_sequences:
                raise ConfigError(f"Secuencia desconocida '{name}'", key='estimate.sequences')
        for first, second in self.estimate.contrasts:
            for name in (first, second):
                if name not in seen:
                    raise ConfigError(f"Nombre desconocido '{name}'", key='estimate.contrasts')

        if self.mode in ('estimate', 'coverage', 'truth-oracle') and not self.interventions:
            raise ConfigError("Este modo necesita al menos una intervención", key='interventions')
        if self.mode == 'estimate' and self.data is not None and 'true' in self.propensity.flavors:
            raise ConfigError("El propensity verdadero sólo existe para series simuladas", key='propensity.flavors')

    @property
    def selected_interventions(self) -> Tuple[InterventionDecl, ...]:
        wanted = self.estimate.interventions
        return tuple(d for d in self.interventions if not wanted or d.name in wanted)

    @property
    def selected_sequences(self) -> Tuple[SequenceDecl, ...]:
        wanted = self.estimate.sequences
        return tuple(s for s in self.sequences if not wanted or s.name in wanted)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out.pop('source')
        return out


def _table_list(data: Mapping[str, Any], key: str) -> List[Mapping[str, Any]]:
    value = data.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, Mapping) for v in value):
        raise ConfigError("Se esperaba una lista de tablas ([[...]])", key=key)
    return value
