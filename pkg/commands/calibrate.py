"""
`calibrate <spec> --out <spec>`: recalibra los interceptos del DGP contra los
conteos objetivo del propio archivo y escribe el spec resultante.
"""
import click

from config import Config
from models.simulation import DgpSpec
from models.surface import QuadratureGrid
from services.simstudy import calibrate_intercepts, pilot_mean_counts
from utils.errors import EngineError
from utils.run_logging import log_run

HEADER = (
    "Especificación del DGP de simulación.\n"
    "Interceptos calibrados con `calibrate` (semilla {seed}, series piloto T={pilot_T}, {replicates} réplicas).\n"
    "Conteos medios piloto: {treatment:.3f} tratamientos, {outcome:.3f} resultados por período.\n"
    "Los rho0 de los confusores no tienen valor publicado: se fijan por cuadratura."
)


@click.command('calibrate')
@click.argument('spec_path', metavar='SPEC', type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='Spec calibrado.')
@click.option('--seed', type=int, default=2024, show_default=True)
@click.option('--pilot-t', 'pilot_T', type=click.IntRange(min=10), default=200, show_default=True)
@click.option('--replicates', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--tolerance', type=click.FloatRange(min=0.0, min_open=True), default=0.05, show_default=True)
@click.option('--threads', type=click.IntRange(min=1), default=None)
@click.pass_context
def calibrate_cmd(ctx, spec_path, out_path, seed, pilot_T, replicates, tolerance, threads):
    """Calibra los interceptos del spec SPEC."""
    threads = threads or Config.THREADS
    try:
        with log_run('calibrate', spec_path):
            spec = DgpSpec.from_toml(spec_path)
            grid = QuadratureGrid.regular(spec.window, Config.QUADRATURE_N)
            calibrated = calibrate_intercepts(spec, seed, grid, pilot_T=pilot_T, replicates=replicates,
                                              tolerance=tolerance, threads=threads)
            treatment, outcome = pilot_mean_counts(calibrated.with_T(pilot_T), seed, replicates, threads)
            header = HEADER.format(seed=seed, pilot_T=pilot_T, replicates=replicates,
                                   treatment=treatment, outcome=outcome)
            with open(out_path, 'w', encoding='utf-8') as fh:
                fh.write(calibrated.to_toml(header))
    except EngineError as exc:
        click.echo(f"Error: {exc}", err=True)
        ctx.exit(exc.exit_code)
    click.echo(
        f"Interceptos: treatment={calibrated.treatment.intercept:.5f}, outcome={calibrated.outcome.intercept:.5f}, "
        f"rho0={list(round(r, 5) for r in calibrated.covariates.rho0)} -> {out_path}"
    )
