import click

from app.modules.network.services import NetworkService, analytic_param_count, param_count
from core.configuration.run_config import RunConfig

BYTES_PER_PARAM = 4


@click.command("param-count", help="Prints the parameter count and float32 size of the network in a run config.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Run config JSON.")
@click.option("--enumerate", "enumerate_", is_flag=True, help="Also build the network and count its parameter store.")
def param_count_command(config_path, enumerate_):
    spec = RunConfig.load(config_path).network
    count = analytic_param_count(spec)
    click.echo(f"Backbone: {spec.backbone}")
    click.echo(f"Parameters: {count}")
    click.echo(f"Size: {count * BYTES_PER_PARAM / 2**20:.2f} MB (float32)")

    if enumerate_:
        enumerated = param_count(NetworkService().build_network(spec, dtype="float32"))
        if enumerated != count:
            raise RuntimeError(f"Parameter store holds {enumerated} parameters, expected {count}")
        click.echo(f"Enumerated: {enumerated}")
