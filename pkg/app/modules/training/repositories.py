import csv
import io
import os
from typing import List

from app.modules.network.models import Model
from app.modules.network.repositories import WeightRepository
from app.modules.training.models import AblationReport, LossRecord
from core.repositories.BaseRepository import BaseRepository
from core.serialisers.serializer import Serializer

LOSS_LOG_HEADER = ["iteration", "lr", "loss"]


class LossLogRepository(BaseRepository[List[LossRecord]]):
    """CSV loss log, one row per optimizer step."""

    extension = ".csv"

    def encode(self, records: List[LossRecord]) -> bytes:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(LOSS_LOG_HEADER)
        for record in records:
            writer.writerow([record.iteration, repr(float(record.lr)), repr(float(record.loss))])
        return buffer.getvalue().encode("utf-8")

    def decode(self, payload: bytes, source: str = "<bytes>") -> List[LossRecord]:
        rows = list(csv.reader(io.StringIO(payload.decode("utf-8"))))
        if not rows or rows[0] != LOSS_LOG_HEADER:
            raise ValueError(f"{source}: loss log must start with header {','.join(LOSS_LOG_HEADER)}")
        try:
            return [LossRecord(int(iteration), float(lr), float(loss)) for iteration, lr, loss in rows[1:]]
        except ValueError as e:
            raise ValueError(f"{source}: malformed loss log row ({e})") from e


class CheckpointRepository:
    def __init__(self):
        self.weights = WeightRepository()

    def checkpoint_path(self, directory: str, iteration: int) -> str:
        return os.path.join(directory, f"iter_{iteration:06d}{self.weights.extension}")

    def save_checkpoint(self, model: Model, directory: str, iteration: int) -> str:
        return self.weights.save(model, self.checkpoint_path(directory, iteration))

    def list_checkpoints(self, directory: str) -> List[str]:
        return [self.weights.path_for(directory, stem) for stem in self.weights.list_stems(directory) if stem.startswith("iter_")]


side_serializer = Serializer({"max_f_measure": "max_f_measure", "argmax_threshold": "argmax_threshold", "mae": "mae"})
variant_serializer = Serializer(
    {
        "name": "name",
        "attention_enabled": "attention_enabled",
        "residual_depth": "residual_depth",
        "final_loss": "final_loss",
        "max_f_measure": "max_f_measure",
        "mae": "mae",
        "sides": "sides",
    },
    related_serializers={"sides": side_serializer},
)
ablation_serializer = Serializer(
    {"seed": "seed", "reference_gain": "reference_gain", "attention_gain": "attention_gains", "variants": "variants"},
    related_serializers={"variants": variant_serializer},
)


class AblationRepository:
    def to_json(self, report: AblationReport) -> str:
        return ablation_serializer.to_json(report)

    def save_report(self, report: AblationReport, path: str) -> str:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(self.to_json(report))
        return path
