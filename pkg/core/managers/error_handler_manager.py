import click

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ErrorHandlerManager:
    def __init__(self, app):
        self.app = app

    def exit_code_for(self, error: BaseException) -> int:
        # Bad flags, bad configs and inputs that fail validation are the operator's to fix
        if isinstance(error, (click.UsageError, click.BadParameter, ValueError)):
            return EXIT_USAGE
        if isinstance(error, click.ClickException):
            return EXIT_USAGE
        return EXIT_RUNTIME

    def handle(self, error: BaseException) -> int:
        code = self.exit_code_for(error)
        if code == EXIT_USAGE:
            self.app.logger.warning("Rejected: %s", str(error))
        else:
            self.app.logger.error("Runtime failure: %s", str(error), exc_info=error)

        if isinstance(error, click.ClickException):
            error.show()
        else:
            click.echo(click.style(f"Error: {error}", fg="red"), err=True)
        return code
