import logging
from collections import OrderedDict
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.modules.evaluation.models import (
    DEFAULT_BETA2,
    NUM_THRESHOLDS,
    EvalReport,
    GroundTruthMask,
    PRCounts,
    PRCurve,
    SaliencyMap,
)
from app.modules.evaluation.repositories import EvaluationRepository
from app.modules.network.services import NetworkService
from core.services.BaseService import BaseService

logger = logging.getLogger(__name__)

THRESHOLDS = np.arange(NUM_THRESHOLDS, dtype=np.float64) / 255.0
MODES = ("aggregate", "per_image")

NamedPair = Tuple[str, SaliencyMap, GroundTruthMask]


def _check_dims(saliency: SaliencyMap, mask: GroundTruthMask):
    if saliency.shape != mask.shape:
        raise ValueError(f"Saliency map {saliency.shape} and mask {mask.shape} differ in size")


def pr_counts(saliency: SaliencyMap, mask: GroundTruthMask) -> PRCounts:
    """Confusion counts at all 256 thresholds from one pass of histogramming."""
    _check_dims(saliency, mask)
    # Number of thresholds each pixel clears: positive at t iff t < levels
    levels = np.searchsorted(THRESHOLDS, saliency.values.ravel(), side="right")
    truth = mask.values.ravel() == 1
    pos_hist = np.bincount(levels[truth], minlength=NUM_THRESHOLDS + 1)
    neg_hist = np.bincount(levels[~truth], minlength=NUM_THRESHOLDS + 1)
    tp = np.cumsum(pos_hist[::-1])[::-1][1:]
    fp = np.cumsum(neg_hist[::-1])[::-1][1:]
    fn = int(truth.sum()) - tp
    return PRCounts(tp.astype(np.int64), fp.astype(np.int64), fn.astype(np.int64))


def curve_from_counts(counts: PRCounts) -> PRCurve:
    predicted = counts.tp + counts.fp
    actual = counts.tp + counts.fn
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, counts.tp / np.maximum(predicted, 1), 1.0)
        recall = np.where(actual > 0, counts.tp / np.maximum(actual, 1), 0.0)
    return PRCurve(precision=precision, recall=recall)


def pr_curve(pairs: Sequence[Tuple[SaliencyMap, GroundTruthMask]], mode: str = "aggregate") -> PRCurve:
    """
    Precision/recall at thresholds t/255, t = 0..255.

    "aggregate" sums TP/FP/FN over the dataset before taking ratios; "per_image" averages
    the per-image curves. Masks without positive pixels are skipped.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown PR mode '{mode}', expected one of {MODES}")
    included = [(s, g) for s, g in pairs if g.positives > 0]
    if not included:
        raise ValueError("pr_curve needs at least one mask with positive pixels")
    all_counts = [pr_counts(s, g) for s, g in included]

    if mode == "aggregate":
        total = all_counts[0]
        for counts in all_counts[1:]:
            total = total + counts
        return curve_from_counts(total)

    curves = [curve_from_counts(counts) for counts in all_counts]
    return PRCurve(
        precision=np.mean([c.precision for c in curves], axis=0),
        recall=np.mean([c.recall for c in curves], axis=0),
    )


def f_measures(curve: PRCurve, beta2: float = DEFAULT_BETA2) -> np.ndarray:
    precision, recall = curve.precision, curve.recall
    denominator = beta2 * precision + recall
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(denominator > 0, (1 + beta2) * precision * recall / np.where(denominator > 0, denominator, 1.0), 0.0)
    return f


def max_f_measure(curve: PRCurve, beta2: float = DEFAULT_BETA2) -> Tuple[float, int]:
    """Max F over thresholds and the smallest threshold reaching it."""
    f = f_measures(curve, beta2)
    best = int(np.argmax(f))
    return float(f[best]), best


def mae(saliency: SaliencyMap, mask: GroundTruthMask) -> float:
    _check_dims(saliency, mask)
    return float(np.mean(np.abs(saliency.values - mask.values)))


class EvaluationService(BaseService):
    def __init__(self):
        super().__init__(EvaluationRepository())

    def evaluate_pairs(self, pairs: Sequence[NamedPair], beta2: float = DEFAULT_BETA2, mode: str = "aggregate") -> EvalReport:
        if not pairs:
            raise ValueError("Nothing to evaluate: no prediction/mask pairs")
        ordered = sorted(pairs, key=lambda pair: pair[0])
        excluded = [stem for stem, _, mask in ordered if mask.positives == 0]
        for stem in excluded:
            logger.warning("Excluding '%s' from the PR curve: ground truth has no positive pixels", stem)

        per_image_mae = OrderedDict((stem, mae(saliency, mask)) for stem, saliency, mask in ordered)
        curve = pr_curve([(saliency, mask) for _, saliency, mask in ordered], mode=mode)
        best_f, best_t = max_f_measure(curve, beta2)
        return EvalReport(
            max_f_measure=best_f,
            argmax_threshold=best_t,
            mae=float(np.mean(list(per_image_mae.values()))),
            num_images=len(ordered),
            beta2=beta2,
            curve=curve,
            per_image_mae=dict(per_image_mae),
            excluded=excluded,
            mode=mode,
        )

    def evaluate_dataset(self, pred_dir: str, gt_dir: str, beta2: float = DEFAULT_BETA2, mode: str = "aggregate") -> EvalReport:
        pairs = [
            (stem, SaliencyMap.from_uint8(prediction), GroundTruthMask.from_uint8(mask))
            for stem, prediction, mask in self.repository.load_pairs(pred_dir, gt_dir)
        ]
        report = self.evaluate_pairs(pairs, beta2=beta2, mode=mode)
        logger.info(
            "Evaluated %d images: max F %.4f at t=%d, MAE %.4f",
            report.num_images,
            report.max_f_measure,
            report.argmax_threshold,
            report.mae,
        )
        return report

    def evaluate_sides(self, model, samples, beta2: float = DEFAULT_BETA2, mode: str = "aggregate") -> Dict[str, EvalReport]:
        """One report per side-output (global, side5 .. side1) over in-memory samples."""
        network = NetworkService()
        per_side: Dict[str, List[NamedPair]] = OrderedDict()
        for sample in samples:
            maps = network.predict(model, sample.image)
            for name, probability in maps.items():
                if name == "final":
                    continue
                per_side.setdefault(name, []).append((sample.stem, SaliencyMap(probability.astype(np.float64)), sample.mask))
        return OrderedDict((name, self.evaluate_pairs(pairs, beta2=beta2, mode=mode)) for name, pairs in per_side.items())

    def write_report(self, report: EvalReport, report_path: str = None, pr_path: str = None):
        if report_path:
            self.repository.save_report(report, report_path)
        if pr_path:
            self.repository.save_pr_csv(report.curve, pr_path)
