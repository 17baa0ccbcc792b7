import csv
import io
import os
from typing import List, Tuple

import numpy as np

from app.modules.dataset.repositories import PGMRepository
from app.modules.evaluation.models import EvalReport, PRCurve
from core.serialisers.serializer import Serializer


class OrphanFileError(ValueError):
    pass


report_serializer = Serializer(
    {
        "max_f_measure": "max_f_measure",
        "argmax_threshold": "argmax_threshold",
        "mae": "mae",
        "num_images": "num_images",
        "beta2": "beta2",
        "per_image_mae": "per_image_mae",
        "excluded": "excluded",
        "mode": "mode",
    }
)


class EvaluationRepository:
    def __init__(self):
        self.maps = PGMRepository()

    def mask_dir(self, gt_dir: str) -> str:
        # Accept a dataset root as well as a bare directory of masks
        nested = os.path.join(gt_dir, "masks")
        return nested if os.path.isdir(nested) else gt_dir

    def load_pairs(self, pred_dir: str, gt_dir: str) -> List[Tuple[str, np.ndarray, np.ndarray]]:
        mask_dir = self.mask_dir(gt_dir)
        pred_stems = set(self.maps.list_stems(pred_dir))
        gt_stems = set(self.maps.list_stems(mask_dir))
        if not pred_stems & gt_stems:
            raise OrphanFileError(f"No common stems between {pred_dir} and {mask_dir}")
        orphans = sorted(f"{pred_dir}/{s}.pgm" for s in pred_stems - gt_stems) + sorted(
            f"{mask_dir}/{s}.pgm" for s in gt_stems - pred_stems
        )
        if orphans:
            raise OrphanFileError(f"Unmatched files: {', '.join(orphans)}")
        return [
            (stem, self.maps.load(self.maps.path_for(pred_dir, stem)), self.maps.load(self.maps.path_for(mask_dir, stem)))
            for stem in sorted(pred_stems)
        ]

    def report_json(self, report: EvalReport) -> str:
        return report_serializer.to_json(report)

    def save_report(self, report: EvalReport, path: str) -> str:
        _write_text(path, self.report_json(report))
        return path

    def pr_csv(self, curve: PRCurve) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["threshold", "precision", "recall"])
        for threshold, precision, recall in curve.rows():
            writer.writerow([threshold, repr(precision), repr(recall)])
        return buffer.getvalue()

    def save_pr_csv(self, curve: PRCurve, path: str) -> str:
        _write_text(path, self.pr_csv(curve))
        return path


def _write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)
