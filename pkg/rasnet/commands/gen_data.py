import click

from app.modules.dataset.models import SyntheticSpec
from app.modules.dataset.services import DatasetService


@click.command("gen-data", help="Generates a deterministic synthetic shape-segmentation dataset (images/ and masks/).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Dataset root to write.")
@click.option("--count", default=200, show_default=True, type=int, help="Number of image/mask pairs.")
@click.option("--size", default=64, show_default=True, type=int, help="Square image side; >= 64 and divisible by 32.")
@click.option("--seed", default=0, show_default=True, type=int, help="Generator seed.")
@click.option("--prefix", default="img", show_default=True, help="Filename stem prefix.")
def gen_data(out_dir, count, size, seed, prefix):
    spec = SyntheticSpec(count=count, size=size, seed=seed, stem_prefix=prefix)
    stems = DatasetService().generate_synthetic(spec, out_dir)
    click.echo(click.style(f"Wrote {len(stems)} pairs of {size}x{size} to {out_dir}", fg="green"))
