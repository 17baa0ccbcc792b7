import importlib
import os
import sys

import click

from app import create_app
from core.managers.error_handler_manager import EXIT_OK, EXIT_USAGE


class RasnetCLI(click.Group):
    def get_command(self, ctx, cmd_name):
        rv = super().get_command(ctx, cmd_name)
        if rv is None:
            click.echo(f"No such command '{cmd_name}'.")
            click.echo("Try 'rasnet --help' for a list of available commands.")
        return rv

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        """
        Run a command and exit with 0 on success, 1 on usage/config errors, 2 on runtime failures.

        The application context (config, logger, error policy) is created once and handed to
        every command as `ctx.obj`.
        """
        try:
            app = create_app()
        except ValueError as e:
            click.echo(click.style(f"Error: {e}", fg="red"), err=True)
            sys.exit(EXIT_USAGE)
        extra.setdefault("obj", app)

        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var, standalone_mode=False, **extra)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except Exception as e:
            sys.exit(app.error_handler.handle(e))

        code = rv if isinstance(rv, int) else EXIT_OK
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=RasnetCLI)
def cli():
    """Train, run and evaluate reverse-attention saliency networks."""


# Automatically discover and load commands
def load_commands(cli_group, commands_dir=os.path.join(os.path.dirname(__file__), "commands")):
    """
    Dynamically import all commands in the specified directory and add them to the CLI group.
    """
    commands_path = os.path.abspath(commands_dir)
    for file in sorted(os.listdir(commands_path)):
        if file.endswith(".py") and not file.startswith("__"):
            module_name = f"rasnet.commands.{file[:-3]}"
            module = importlib.import_module(module_name)
            for attr_name in dir(module):
                attr = getattr(module, attr_name)
                if isinstance(attr, click.Command):
                    cli_group.add_command(attr)


# Load commands dynamically
load_commands(cli)

if __name__ == "__main__":
    cli()
