import os

import click

from app.modules.dataset.services import DatasetService
from app.modules.network.services import NetworkService
from app.modules.training.services import TrainingService
from core.configuration.run_config import RunConfig


def default_loss_log(weights_path):
    return f"{os.path.splitext(weights_path)[0]}_loss.csv"


@click.command("train", help="Trains a network from a run config and writes its weights and loss log.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Run config JSON.")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), help="Training dataset root (overrides data.train_dir).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Output RASW weight file.")
@click.option("--loss-log", type=click.Path(dir_okay=False), help="Loss CSV path [default: <out>_loss.csv].")
@click.option("--no-attention", is_flag=True, help="Disable reverse attention (ablation variant).")
@click.option("--iterations", type=int, help="Override training.max_iterations.")
@click.option("--seed", type=int, help="Override training.seed.")
@click.pass_obj
def train(app, config_path, data_dir, out_path, loss_log, no_attention, iterations, seed):
    config = RunConfig.load(config_path, default_precision=app.config["PRECISION"]).with_overrides(
        network={"attention_enabled": False if no_attention else None},
        training={"max_iterations": iterations, "seed": seed},
    )
    data_dir = data_dir or config.data.train_dir
    if not data_dir:
        raise click.UsageError("No training data: pass --data or set data.train_dir in the config")

    cfg = config.training
    samples = DatasetService().load_dataset(data_dir, augment=cfg.augment, dtype=cfg.dtype)
    network = NetworkService()
    model = network.build_network(config.network, seed=cfg.seed, dtype=cfg.dtype)

    training = TrainingService()
    result = training.train(model, samples, cfg)
    network.save_weights(model, out_path)
    loss_log = loss_log or default_loss_log(out_path)
    training.save_loss_log(result.log, loss_log)

    if result.log:
        click.echo(f"Loss {result.initial_loss:.4f} -> {result.final_loss:.4f} over {len(result.log)} iterations")
    click.echo(click.style(f"Weights written to {out_path}, loss log to {loss_log}", fg="green"))
