import click


def register_commands(cli: click.Group) -> None:
    from .run import run_cmd
    from .calibrate import calibrate_cmd

    cli.add_command(run_cmd)
    cli.add_command(calibrate_cmd)
