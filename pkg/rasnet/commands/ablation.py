import os

import click

from app.modules.dataset.services import DatasetService
from app.modules.training.services import AblationService
from core.configuration.run_config import RunConfig


def parse_depths(ctx, param, value):
    if not value:
        return None
    try:
        depths = tuple(int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter("expected a comma-separated list of integers, e.g. 1,2,3")
    if any(depth < 1 for depth in depths):
        raise click.BadParameter("residual depths must be >= 1")
    return depths


@click.command("ablation", help="Trains and evaluates the network with and without reverse attention under one seed.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Run config JSON.")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), help="Training dataset root.")
@click.option("--held-out", "held_out_dir", type=click.Path(file_okay=False), help="Held-out dataset root.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report and weights directory.")
@click.option("--depths", callback=parse_depths, help="Comma-separated residual depths to sweep, e.g. 1,2,3.")
@click.option("--iterations", type=int, help="Override training.max_iterations.")
@click.pass_obj
def ablation(app, config_path, data_dir, held_out_dir, out_dir, depths, iterations):
    config = RunConfig.load(config_path, default_precision=app.config["PRECISION"])
    config = config.with_overrides(training={"max_iterations": iterations})
    data_dir = data_dir or config.data.train_dir
    held_out_dir = held_out_dir or config.data.held_out_dir
    if not data_dir or not held_out_dir:
        raise click.UsageError("Ablation needs training and held-out data (--data/--held-out or the config's data section)")

    cfg = config.training
    dataset = DatasetService()
    train_samples = dataset.load_dataset(data_dir, augment=cfg.augment, dtype=cfg.dtype)
    held_out = dataset.load_dataset(held_out_dir, augment=False, dtype=cfg.dtype)

    service = AblationService()
    report = service.run(
        config.network, cfg, train_samples, held_out, depths=depths, beta2=config.evaluation.beta2, weights_dir=out_dir
    )
    path = service.save_report(report, os.path.join(out_dir, "ablation.json"))

    for variant in report.variants:
        click.echo(f"{variant.name:<16} max F {variant.max_f_measure:.4f}  MAE {variant.mae:.4f}")
    click.echo(click.style(f"Ablation report written to {path}", fg="green"))
