import click

from commands import register_commands
from config import Config
from utils.run_logging import configure_logging

configure_logging(Config.LOG_LEVEL)


@click.group(help="Motor de inferencia causal para patrones puntuales espacio-temporales.")
def cli():
    pass


# Registrar todos los comandos
register_commands(cli)

if __name__ == '__main__':
    cli()
