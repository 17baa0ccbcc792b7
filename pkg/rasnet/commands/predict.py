import os

import click

from app.modules.dataset.repositories import PGMRepository, PPMRepository
from app.modules.dataset.services import DatasetService
from app.modules.evaluation.models import SaliencyMap
from app.modules.network.services import NetworkService


def write_map(maps, probability, path):
    maps.save(SaliencyMap(probability.astype("float64")).to_uint8(), path)


@click.command("predict", help="Writes the saliency map of a PPM image (or of every PPM in a directory) as 8-bit PGM.")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="RASW weight file.")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True), help="PPM image or directory of PPMs.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output PGM (or directory for directory input).")
@click.option("--dump-sides", type=click.Path(file_okay=False), help="Also write every side-output map here.")
@click.option("--pad", is_flag=True, help="Reflect-pad inputs to a multiple of 32 and crop the maps back.")
def predict(model_path, image_path, out_path, dump_sides, pad):
    network = NetworkService()
    dataset = DatasetService()
    maps = PGMRepository()
    model = network.load_weights(model_path)

    if os.path.isdir(image_path):
        images = PPMRepository()
        stems = images.list_stems(image_path)
        jobs = [(stem, images.path_for(image_path, stem), maps.path_for(out_path, stem)) for stem in stems]
        if not jobs:
            raise click.UsageError(f"No .ppm images in {image_path}")
    else:
        stem = os.path.splitext(os.path.basename(image_path))[0]
        jobs = [(stem, image_path, out_path)]

    for stem, source, target in jobs:
        probabilities = network.predict(model, dataset.load_image(source, dtype=model.dtype), pad=pad)
        write_map(maps, probabilities["final"], target)
        if dump_sides:
            for name, probability in probabilities.items():
                if name != "final":
                    write_map(maps, probability, os.path.join(dump_sides, f"{stem}_{name}.pgm"))

    click.echo(click.style(f"Wrote {len(jobs)} saliency map(s) to {out_path}", fg="green"))
