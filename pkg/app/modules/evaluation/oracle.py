"""Straight nested-loop reference versions of the metrics, used to cross-check the vectorized ones."""

from typing import List, Sequence, Tuple

from app.modules.evaluation.models import NUM_THRESHOLDS, GroundTruthMask, SaliencyMap


def counts(saliency: SaliencyMap, mask: GroundTruthMask) -> List[Tuple[int, int, int]]:
    """(TP, FP, FN) for every threshold t, pixel positive iff S >= t / 255."""
    rows = []
    height, width = mask.shape
    for t in range(NUM_THRESHOLDS):
        threshold = t / 255.0
        tp = fp = fn = 0
        for y in range(height):
            for x in range(width):
                predicted = saliency.values[y, x] >= threshold
                actual = mask.values[y, x] == 1
                if predicted and actual:
                    tp += 1
                elif predicted:
                    fp += 1
                elif actual:
                    fn += 1
        rows.append((tp, fp, fn))
    return rows


def pr_curve(pairs: Sequence[Tuple[SaliencyMap, GroundTruthMask]]) -> List[Tuple[float, float]]:
    totals = [[0, 0, 0] for _ in range(NUM_THRESHOLDS)]
    for saliency, mask in pairs:
        if mask.positives == 0:
            continue
        for t, (tp, fp, fn) in enumerate(counts(saliency, mask)):
            totals[t][0] += tp
            totals[t][1] += fp
            totals[t][2] += fn
    curve = []
    for tp, fp, fn in totals:
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        curve.append((precision, recall))
    return curve


def max_f_measure(curve: Sequence[Tuple[float, float]], beta2: float = 0.3) -> Tuple[float, int]:
    best, best_t = 0.0, 0
    for t, (precision, recall) in enumerate(curve):
        denominator = beta2 * precision + recall
        f = (1 + beta2) * precision * recall / denominator if denominator else 0.0
        if f > best:
            best, best_t = f, t
    return best, best_t


def mae(saliency: SaliencyMap, mask: GroundTruthMask) -> float:
    height, width = mask.shape
    total = 0.0
    for y in range(height):
        for x in range(width):
            total += abs(float(saliency.values[y, x]) - float(mask.values[y, x]))
    return total / (height * width)
