"""
Ejecución de escenarios: arma las piezas declaradas en el ScenarioConfig,
corre el modo pedido y escribe los artefactos en el directorio de salida
(results.csv, results.json, manifest.json y, según el modo, series.csv,
records.csv, data_quality.json y rasters/).
"""
import dataclasses
import hashlib
import json
import logging
import os
import platform
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from models.geometry import PointPattern, Region, Window, region_from_rects
from models.intervention import Intervention, InterventionSequence
from models.scenario import WINDOW_REGION, InterventionDecl, ScenarioConfig
from models.simulation import DgpSpec, SimulatedSeries
from models.surface import (CompositeSurface, ConstantSurface, KernelSpec, LinearCombinationSurface,
                            QuadratureGrid, Surface)
from services import estimate as estimators
from services import interventions as builders
from services import propensity, simstudy
from services.ingest import ingest_typed
from services.smooth import bandwidth_rule, baseline_density, smoothed_surface
from services.surfaces import decay_surface, integrate_window, read_raster, write_raster
from utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

ENGINE_VERSION = "1.0.0"
VERSIONED_PACKAGES = ('numpy', 'scipy', 'pandas', 'click', 'python-dotenv')


# ---------------------------------------------------------------------------
# Piezas
# ---------------------------------------------------------------------------

def load_dgp(config: ScenarioConfig) -> DgpSpec:
    path = Config.DEFAULT_DGP_SPEC if config.dgp.spec == 'default' else config.dgp.spec
    spec = DgpSpec.from_toml(path)
    if config.dgp.T is not None:
        spec = spec.with_T(config.dgp.T)
    if config.dgp.burn_in is not None:
        spec = dataclasses.replace(spec, burn_in=config.dgp.burn_in)
    return spec


def build_regions(config: ScenarioConfig, window: Window) -> Dict[str, Region]:
    regions = {WINDOW_REGION: Region.whole(window, WINDOW_REGION)}
    for name, rects in config.regions.items():
        try:
            regions[name] = region_from_rects(rects, window, name)
        except DomainError as exc:
            raise ConfigError(str(exc), key=f"regions.{name}")
    return regions


def _baseline(decl: InterventionDecl, window: Window, grid: QuadratureGrid,
              observed_treatments: Sequence[PointPattern]) -> Surface:
    source = decl.baseline.source
    if source == 'uniform':
        return ConstantSurface(1.0 / window.area)
    if source == 'observed':
        chunks = [p.points for p in observed_treatments if len(p)]
        if not chunks:
            raise ConfigError("No hay tratamientos observados para estimar la densidad base",
                              key=f"interventions.{decl.name}.baseline")
        return baseline_density(PointPattern(np.vstack(chunks)), window, grid)
    raster = read_raster(decl.baseline.path)
    mass = integrate_window(raster, grid)
    if not mass > 0:
        raise ConfigError("El raster de la densidad base no tiene masa", key=f"interventions.{decl.name}.baseline")
    return CompositeSurface((raster,), 1.0 / mass)


def build_interventions(config: ScenarioConfig, window: Window, grid: QuadratureGrid,
                        regions: Dict[str, Region],
                        observed_treatments: Sequence[PointPattern] = ()) -> Dict[str, Intervention]:
    out = {}
    for decl in config.interventions:
        key = f"interventions.{decl.name}"
        try:
            if decl.kind == 'homogeneous':
                out[decl.name] = builders.homogeneous(decl.h, window)
                continue
            baseline = _baseline(decl, window, grid, observed_treatments)
            if decl.kind == 'scaled_baseline':
                out[decl.name] = builders.scaled_baseline(decl.c, baseline, grid)
            elif decl.kind == 'focal':
                out[decl.name] = builders.focal(decl.c, baseline, decl.center, decl.precision, grid)
            else:
                out[decl.name] = builders.local(regions[decl.region], decl.c_inside, decl.c_outside, baseline, grid)
        except DomainError as exc:
            raise ConfigError(str(exc), key=key)
    return out


def build_sequences(config: ScenarioConfig, interventions: Dict[str, Intervention],
                    M_grid: Optional[Sequence[int]] = None) -> List[Tuple[str, InterventionSequence]]:
    """
    (nombre, secuencia): i.i.d. para cada intervención elegida y cada M, más las
    secuencias declaradas.
    """
    M_grid = M_grid if M_grid is not None else config.estimate.M
    out = []
    for decl in config.selected_interventions:
        for M in M_grid:
            out.append((decl.name, builders.iid_sequence(interventions[decl.name], M)))
    for decl in config.selected_sequences:
        if decl.kind == 'staged':
            seq = builders.staged_sequence([interventions[n] for n in decl.stages])
        else:
            seq = builders.lagged_sequence(interventions[decl.h0], interventions[decl.h1], decl.M)
        out.append((decl.name, seq))
    return out


def contrast_pairs(config: ScenarioConfig, named: List[Tuple[str, InterventionSequence]]) -> List[Tuple[int, int]]:
    """Índices (primera, segunda) en `named` para cada contraste y cada M compartido."""
    pairs = []
    for first, second in config.estimate.contrasts:
        for i, (name_i, seq_i) in enumerate(named):
            if name_i != first:
                continue
            for j, (name_j, seq_j) in enumerate(named):
                if name_j == second and seq_j.M == seq_i.M:
                    pairs.append((i, j))
    return pairs


def grids(window: Window) -> Tuple[QuadratureGrid, QuadratureGrid, QuadratureGrid]:
    """(retícula de densidades, de ajuste, de oráculos)."""
    return (
        QuadratureGrid.regular(window, Config.QUADRATURE_N),
        QuadratureGrid.regular(window, Config.FIT_GRID_N),
        QuadratureGrid.regular(window, Config.ORACLE_GRID_N),
    )


def _kernel(config: ScenarioConfig, T: int) -> KernelSpec:
    return KernelSpec(config.estimate.bandwidth or bandwidth_rule(T))


# ---------------------------------------------------------------------------
# Artefactos
# ---------------------------------------------------------------------------

def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"No serializable: {type(value).__name__}")


def write_json(path: str, payload: Any) -> str:
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default, allow_nan=True)
        fh.write('\n')
    return path


def config_hash(resolved: Dict[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(',', ':'), default=_json_default)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _versions() -> Dict[str, str]:
    out = {'engine': ENGINE_VERSION, 'python': platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = 'desconocida'
    return out


def write_manifest(out_dir: str, config: ScenarioConfig, threads: int, seeds: Dict[str, Any],
                   files: Sequence[str]) -> str:
    resolved = config.to_dict()
    payload = {
        'mode': config.mode,
        'config_path': config.source,
        'config_sha256': config_hash(resolved),
        'resolved_config': resolved,
        'seeds': seeds,
        'threads': threads,
        'grids': {'quadrature': Config.QUADRATURE_N, 'fit': Config.FIT_GRID_N, 'oracle': Config.ORACLE_GRID_N},
        'versions': _versions(),
        'files': sorted(os.path.basename(f) for f in files),
        'created_at': datetime.now(timezone.utc).isoformat(),
    }
    return write_json(os.path.join(out_dir, 'manifest.json'), payload)


def write_table(path: str, table: pd.DataFrame) -> str:
    table.to_csv(path, index=False, lineterminator='\n')
    return path


# ---------------------------------------------------------------------------
# Modos
# ---------------------------------------------------------------------------

def run_simulate(config: ScenarioConfig, out_dir: str, threads: int) -> List[str]:
    spec = load_dgp(config)
    series = simstudy.generate_series(spec, config.seed)
    rows = [
        {
            't': t + 1,
            'observed': t >= series.burn_in,
            'treatment': len(series.treatments[t]),
            'outcome': len(series.outcomes[t]),
            'X3': len(series.confounders[t][0]),
            'X4': len(series.confounders[t][1]),
        }
        for t in range(series.n_periods)
    ]
    counts = series.mean_counts()
    files = [
        write_table(os.path.join(out_dir, 'series.csv'), series.to_frame()),
        write_table(os.path.join(out_dir, 'results.csv'), pd.DataFrame(rows)),
        write_json(os.path.join(out_dir, 'results.json'), {
            'mean_counts': counts,
            'T': series.T,
            'burn_in': series.burn_in,
            'targets': dataclasses.asdict(spec.targets),
            'dgp': spec.to_dict(),
        }),
    ]
    logger.info("Serie escrita en %s: %.2f tratamientos y %.2f resultados por período",
                out_dir, counts['treatment'], counts['outcome'])
    return files


def _observed_series(config: ScenarioConfig, out_dir: str):
    """
    (tratamientos, resultados, covariables por período, inicio, ventana, serie
    simulada o None, archivos escritos).
    """
    if config.data is None:
        spec = load_dgp(config)
        series = simstudy.generate_series(spec, config.seed)
        return (series.treatments, series.outcomes, series.all_covariates(), series.burn_in,
                spec.window, series, [])

    decl = config.data
    try:
        window = Window.from_list(decl.window)
    except DomainError as exc:
        raise ConfigError(str(exc), key='data.window')
    pattern_types = [decl.treatment_type, decl.outcome_type]
    pattern_types += [c['type'] for c in decl.covariates.values() if 'type' in c and c['type'] not in pattern_types]
    typed = ingest_typed(decl.path, window, pattern_types)
    treatments = typed[decl.treatment_type].patterns
    outcomes = typed[decl.outcome_type].patterns
    n = len(treatments)

    statics: Dict[str, Surface] = {}
    if decl.dgp_spec:
        statics.update(simstudy.static_covariates(DgpSpec.from_toml(decl.dgp_spec)))
    for name, source in decl.covariates.items():
        if 'raster' in source:
            statics[name] = read_raster(source['raster'])
    covariates = []
    for t in range(n):
        period = dict(statics)
        for name, source in decl.covariates.items():
            if 'type' in source:
                period[name] = decay_surface(typed[source['type']].patterns[t], source['scale'], source['amplitude'])
        covariates.append(period)

    quality = {name: s.quality.to_dict() for name, s in typed.items()}
    files = [write_json(os.path.join(out_dir, 'data_quality.json'), quality)]
    if decl.history_periods >= n:
        raise ConfigError(f"history_periods ({decl.history_periods}) deja sin períodos observados (hay {n})",
                          key='data.history_periods')
    return treatments, outcomes, covariates, decl.history_periods, window, None, files


def _default_features(covariates: Sequence[Dict[str, Surface]], series: Optional[SimulatedSeries]) -> Tuple[str, ...]:
    if series is not None:
        return simstudy.correct_features(series.spec)
    names = sorted(covariates[0]) if covariates else []
    return ('intercept', *(f'covariate:{n}' for n in names), 'treatment_decay:1', 'outcome_decay:1')


def run_estimate(config: ScenarioConfig, out_dir: str, threads: int) -> List[str]:
    treatments, outcomes, covariates, start, window, series, files = _observed_series(config, out_dir)
    grid, fit_grid, _ = grids(window)
    regions = build_regions(config, window)
    observed = treatments[start:]
    interventions = build_interventions(config, window, grid, regions, observed)
    named = build_sequences(config, interventions)
    T = len(treatments) - start
    kernel = _kernel(config, T)

    features = config.propensity.features or _default_features(covariates, series)
    log_props: Dict[str, np.ndarray] = {}
    payload: Dict[str, Any] = {'kernel': kernel.to_dict(), 'T': T}
    for flavor in config.propensity.flavors:
        values = np.full(len(treatments), np.nan)
        if flavor == 'true':
            if series is None:
                raise ConfigError("El propensity verdadero sólo existe para series simuladas", key='propensity.flavors')
            values = simstudy.true_log_propensities(series, grid)
        elif flavor == 'estimated':
            frames = propensity.build_frames(treatments, outcomes, covariates, features, start=start)
            model = propensity.fit(frames, observed, fit_grid)
            values[start:] = propensity.log_propensities(model, frames, observed, grid)
            report = propensity.balance_check(model, frames, observed, grid, config.propensity.truncation_quantile,
                                              log_propensity_values=values[start:], fit_grid=fit_grid)
            payload['propensity_model'] = model.to_dict()
            payload['balance'] = report.to_dict()
        else:
            model = propensity.fit_homogeneous(observed, window)
            values[start:] = propensity.homogeneous_log_propensities(model, observed, window)
            payload['unadjusted_model'] = model.to_dict()
        log_props[flavor] = values

    results = []
    by_key: Dict[Tuple[int, str, str, str, float], Any] = {}
    for s, (name, sequence) in enumerate(named):
        for flavor, values in log_props.items():
            weights = estimators.weight_series(sequence, treatments, values, grid, start=start)
            for region_name in config.estimate.regions:
                for kind in config.estimate.estimators:
                    for level in config.estimate.levels:
                        result = estimators.estimate_outcome(
                            weights, outcomes, kernel, regions[region_name], kind, level,
                            config.estimate.use_counts,
                            descriptor={'intervention': sequence.label, 'name': name, 'propensity': flavor},
                        )
                        results.append(result)
                        by_key[(s, flavor, region_name, kind, level)] = result
            if config.estimate.rasters and 'hajek' in config.estimate.estimators:
                files.append(_write_weighted_raster(out_dir, name, sequence, flavor, weights, outcomes, kernel, grid))

    for i, j in contrast_pairs(config, named):
        for (s, flavor, region_name, kind, level), first in list(by_key.items()):
            if s != i:
                continue
            second = by_key[(j, flavor, region_name, kind, level)]
            results.append(estimators.effect_contrast(first, second))

    table = pd.DataFrame([r.to_row() for r in results])
    payload['results'] = [r.to_dict() for r in results]
    files.append(write_table(os.path.join(out_dir, 'results.csv'), table))
    files.append(write_json(os.path.join(out_dir, 'results.json'), payload))
    return files


def _write_weighted_raster(out_dir: str, name: str, sequence: InterventionSequence, flavor: str,
                           weights, outcomes: Sequence[PointPattern], kernel: KernelSpec,
                           grid: QuadratureGrid) -> str:
    """Intensidad estimada bajo la intervención: promedio de Hájek de las superficies suavizadas."""
    normalized = weights.normalized()
    total = normalized.sum()
    if total == 0:
        raise DomainError(f"Todos los pesos de {sequence.label} son nulos; no hay raster que escribir")
    terms = tuple((float(w / total), smoothed_surface(outcomes[t], kernel))
                  for w, t in zip(normalized, weights.periods) if w > 0)
    folder = os.path.join(out_dir, 'rasters')
    os.makedirs(folder, exist_ok=True)
    return write_raster(LinearCombinationSurface(terms), grid,
                        os.path.join(folder, f"{name}_M{sequence.M}_{flavor}.csv"))


def run_coverage(config: ScenarioConfig, out_dir: str, threads: int) -> List[str]:
    spec = load_dgp(config)
    grid, fit_grid, _ = grids(spec.window)
    regions = build_regions(config, spec.window)
    interventions = build_interventions(config, spec.window, grid, regions)
    named = build_sequences(config, interventions)
    c = config.coverage
    design = simstudy.CoverageDesign(
        sequences=tuple(seq for _, seq in named),
        regions=tuple(regions[n] for n in config.estimate.regions),
        T_grid=c.T,
        n_datasets=c.datasets,
        R=c.R,
        levels=config.estimate.levels,
        estimator_kinds=config.estimate.estimators,
        flavors=config.propensity.flavors,
        true_variance=c.true_variance,
        variance_R=c.variance_R,
        variance_stride=c.variance_stride,
        period_stride=c.period_stride,
        bandwidth=config.estimate.bandwidth,
        use_counts=config.estimate.use_counts,
        contrasts=tuple(contrast_pairs(config, named)),
    )
    table, records = simstudy.coverage_experiment(spec, design, config.seed, grid, fit_grid, threads)
    return [
        write_table(os.path.join(out_dir, 'results.csv'), table),
        write_table(os.path.join(out_dir, 'records.csv'), records),
        write_json(os.path.join(out_dir, 'results.json'), {'cells': table.to_dict(orient='records')}),
    ]


def run_balance(config: ScenarioConfig, out_dir: str, threads: int) -> List[str]:
    spec = load_dgp(config)
    grid, fit_grid, _ = grids(spec.window)
    summary, rows = simstudy.balance_experiment(
        spec, config.balance.datasets, config.seed, grid, fit_grid,
        config.propensity.truncation_quantile, config.balance.weights, threads,
    )
    return [
        write_table(os.path.join(out_dir, 'results.csv'), summary),
        write_table(os.path.join(out_dir, 'records.csv'), rows),
        write_json(os.path.join(out_dir, 'results.json'), {'features': summary.to_dict(orient='records')}),
    ]


def run_truth_oracle(config: ScenarioConfig, out_dir: str, threads: int) -> List[str]:
    spec = load_dgp(config)
    series = simstudy.generate_series(spec, config.seed)
    grid, _, oracle_grid = grids(spec.window)
    regions = build_regions(config, spec.window)
    interventions = build_interventions(config, spec.window, grid, regions, series.treatments[series.burn_in:])
    named = build_sequences(config, interventions)
    selected = [regions[n] for n in config.estimate.regions]
    c = config.coverage
    kernel = _kernel(config, series.T)

    rows = []
    oracles = {}
    for s, (name, sequence) in enumerate(named):
        truths = simstudy.mc_truth_oracles(series, sequence, selected, c.R, config.seed, grid,
                                           c.period_stride, threads)
        for region, oracle in zip(selected, truths):
            oracles[(s, region.label)] = oracle
            row = {'intervention': sequence.label, 'name': name, 'M': sequence.M, 'region': region.label,
                   'truth': oracle.average, 'truth_se': oracle.average_se, 'R': c.R}
            if c.true_variance:
                variance = simstudy.mc_variance_oracle(series, sequence, region, c.variance_R, config.seed, kernel,
                                                       oracle_grid, c.variance_stride,
                                                       use_counts=config.estimate.use_counts, threads=threads)
                row.update({'v': variance.v, 'v_star': variance.v_star})
            rows.append(row)

    for i, j in contrast_pairs(config, named):
        for region in selected:
            first, second = oracles[(i, region.label)], oracles[(j, region.label)]
            rows.append({
                'intervention': f"{named[j][1].label} - {named[i][1].label}",
                'name': f"{named[j][0]} - {named[i][0]}",
                'M': named[i][1].M,
                'region': region.label,
                'truth': second.average - first.average,
                'truth_se': float(np.hypot(first.average_se, second.average_se)),
                'R': c.R,
            })

    table = pd.DataFrame(rows)
    return [
        write_table(os.path.join(out_dir, 'results.csv'), table),
        write_json(os.path.join(out_dir, 'results.json'), {
            'oracles': [o.to_dict() | {'intervention': named[s][1].label} for (s, _), o in oracles.items()],
            'kernel': kernel.to_dict(),
            'mean_counts': series.mean_counts(),
        }),
    ]


RUNNERS = {
    'simulate': run_simulate,
    'estimate': run_estimate,
    'coverage': run_coverage,
    'balance': run_balance,
    'truth-oracle': run_truth_oracle,
}


def run_scenario(config: ScenarioConfig, out_dir: str, threads: int) -> Dict[str, Any]:
    """Corre el modo del escenario y devuelve {'out_dir', 'files'}."""
    os.makedirs(out_dir, exist_ok=True)
    logger.info("Escenario %s (%s) -> %s con %d procesos", config.source or '<dict>', config.mode, out_dir, threads)
    files = RUNNERS[config.mode](config, out_dir, threads)
    seeds = {'root': config.seed}
    files.append(write_manifest(out_dir, config, threads, seeds, files))
    return {'out_dir': out_dir, 'files': files}
