"""
`run <config>`: ejecuta un escenario TOML y escribe sus artefactos.

Códigos de salida: 0 ok, 2 configuración o datos inválidos, 3 violación de
positividad, 4 ajuste mal condicionado, 1 cualquier otro error del motor.
"""
import os

import click

from config import Config
from models.scenario import ScenarioConfig
from services.scenarios import run_scenario
from utils.errors import EngineError
from utils.run_logging import log_run


def resolve_threads(cli_threads, config_threads) -> int:
    if cli_threads is not None:
        return cli_threads
    if config_threads is not None:
        return config_threads
    return Config.THREADS


def resolve_out_dir(cli_out, config: ScenarioConfig, path: str) -> str:
    if cli_out:
        return cli_out
    if config.output_dir:
        return config.output_dir
    name = os.path.splitext(os.path.basename(path))[0]
    return os.path.join(Config.OUTPUT_DIR, name)


@click.command('run')
@click.argument('config_path', metavar='CONFIG', type=click.Path(dir_okay=False))
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Procesos en paralelo (por defecto: config o THREADS).')
@click.option('--profile', type=click.Choice(['desk', 'full']), default=None,
              help='Perfil de tamaño para coverage/balance (por defecto: config o PROFILE).')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
              help='Directorio de salida.')
@click.pass_context
def run_cmd(ctx, config_path, threads, profile, out_dir):
    """Ejecuta el escenario CONFIG."""
    try:
        with log_run('run', config_path):
            config = ScenarioConfig.from_toml(config_path, profile=profile, default_profile=Config.PROFILE)
            threads = resolve_threads(threads, config.threads)
            outcome = run_scenario(config, resolve_out_dir(out_dir, config, config_path), threads)
    except EngineError as exc:
        click.echo(f"Error: {exc}", err=True)
        ctx.exit(exc.exit_code)
    click.echo(f"{config.mode}: {len(outcome['files'])} archivos en {outcome['out_dir']}")
