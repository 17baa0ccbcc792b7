import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.modules.autodiff import functional as F
from app.modules.autodiff.models import Tensor, topological_order
from core.services.BaseService import BaseService

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
NONLINEAR_TOLERANCE = 1e-4
LINEAR_TOLERANCE = 1e-6

GraphFn = Callable[..., Tensor]


def _kink_signature(root: Tensor) -> Tuple[bytes, ...]:
    """Which side of every relu hinge and maxpool window winner the graph took."""
    parts = []
    for node in topological_order(root):
        if node.op == "relu":
            parts.append(np.packbits(node.parents[0].data > 0).tobytes())
        elif node.op == "maxpool2":
            x = node.parents[0].data
            n, c, h, w = x.shape
            blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
            parts.append(blocks.argmax(axis=-1).astype(np.uint8).tobytes())
    return tuple(parts)


def grad_check(
    fn: GraphFn,
    inputs: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    coordinates: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    skip_kinks: bool = False,
) -> float:
    """
    Compare backward() against central finite differences.

    Returns the max over checked coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    With `coordinates`, only that many randomly drawn entries per input are perturbed. With
    `skip_kinks`, a coordinate whose perturbation flips a relu or maxpool decision is not scored.
    """
    for tensor in inputs:
        tensor.data = np.ascontiguousarray(tensor.data, dtype=np.float64)
        tensor.requires_grad = True
        tensor.zero_grad()

    root = fn(*inputs)
    root.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    signature = _kink_signature(root) if skip_kinks else None

    worst = 0.0
    skipped = 0
    for tensor, grad in zip(inputs, analytic):
        flat = tensor.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        indices = np.arange(flat.size)
        if coordinates is not None and coordinates < flat.size:
            indices = (rng or np.random.default_rng(0)).choice(flat.size, size=coordinates, replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + step
            plus = fn(*inputs)
            flat[i] = original - step
            minus = fn(*inputs)
            flat[i] = original
            if skip_kinks and (_kink_signature(plus) != signature or _kink_signature(minus) != signature):
                skipped += 1
                continue
            numeric = (float(plus.data) - float(minus.data)) / (2 * step)
            error = abs(flat_grad[i] - numeric) / max(1e-8, abs(flat_grad[i]) + abs(numeric))
            worst = max(worst, error)

    if skipped:
        logger.debug("grad check skipped %d coordinates straddling a kink", skipped)
    for tensor in inputs:
        tensor.zero_grad()
    return worst


@dataclass
class GradCheckCase:
    name: str
    build: Callable[[np.random.Generator], Tuple[GraphFn, List[Tensor]]]
    tolerance: float = NONLINEAR_TOLERANCE
    step: float = DEFAULT_STEP
    coordinates: Optional[int] = None
    skip_kinks: bool = False


@dataclass
class GradCheckResult:
    name: str
    max_error: float
    tolerance: float
    seeds: int
    per_seed: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _away_from_zero(rng, shape, margin=0.1):
    values = rng.uniform(margin, 2.0, size=shape)
    return values * rng.choice([-1.0, 1.0], size=shape)


def _distinct(rng, shape):
    # Window maxima separated by far more than the finite-difference step
    return rng.permutation(np.prod(shape)).reshape(shape) * 0.05 + rng.uniform(0, 0.01, size=shape)


def primitive_cases() -> List[GradCheckCase]:
    def conv(rng):
        x = Tensor(rng.normal(size=(1, 2, 4, 4)))
        w = Tensor(rng.normal(size=(3, 2, 3, 3)))
        b = Tensor(rng.normal(size=(3,)))
        projection = rng.normal(size=(1, 3, 4, 4))
        return (lambda x, w, b: F.sum_all(F.mul(F.conv2d(x, w, b), Tensor(projection)))), [x, w, b]

    def conv_5x5(rng):
        x = Tensor(rng.normal(size=(1, 2, 3, 3)))
        w = Tensor(rng.normal(size=(2, 2, 5, 5)))
        b = Tensor(rng.normal(size=(2,)))
        projection = rng.normal(size=(1, 2, 3, 3))
        return (lambda x, w, b: F.sum_all(F.mul(F.conv2d(x, w, b), Tensor(projection)))), [x, w, b]

    def maxpool(rng):
        x = Tensor(_distinct(rng, (1, 2, 4, 4)))
        projection = rng.normal(size=(1, 2, 2, 2))
        return (lambda x: F.sum_all(F.mul(F.maxpool2(x), Tensor(projection)))), [x]

    def relu(rng):
        x = Tensor(_away_from_zero(rng, (1, 2, 3, 3)))
        projection = rng.normal(size=(1, 2, 3, 3))
        return (lambda x: F.sum_all(F.mul(F.relu(x), Tensor(projection)))), [x]

    def sigmoid(rng):
        x = Tensor(rng.normal(size=(1, 2, 3, 3)))
        projection = rng.normal(size=(1, 2, 3, 3))
        return (lambda x: F.sum_all(F.mul(F.sigmoid(x), Tensor(projection)))), [x]

    def add(rng):
        a = Tensor(rng.normal(size=(1, 2, 3, 3)))
        b = Tensor(rng.normal(size=(1, 2, 3, 3)))
        projection = rng.normal(size=(1, 2, 3, 3))
        return (lambda a, b: F.sum_all(F.mul(F.add(a, b), Tensor(projection)))), [a, b]

    def broadcast_mul(rng):
        a = Tensor(rng.normal(size=(1, 3, 3, 3)))
        b = Tensor(rng.normal(size=(1, 1, 3, 3)))
        projection = rng.normal(size=(1, 3, 3, 3))
        return (lambda a, b: F.sum_all(F.mul(F.mul(a, b), Tensor(projection)))), [a, b]

    def reverse(rng):
        x = Tensor(rng.normal(size=(1, 1, 3, 3)))
        projection = rng.normal(size=(1, 1, 3, 3))
        return (lambda x: F.sum_all(F.mul(F.reverse(x), Tensor(projection)))), [x]

    def upsample(rng):
        x = Tensor(rng.normal(size=(1, 1, 3, 3)))
        projection = rng.normal(size=(1, 1, 6, 6))
        return (lambda x: F.sum_all(F.mul(F.bilinear_upsample(x, 2), Tensor(projection)))), [x]

    def upsample_x8(rng):
        x = Tensor(rng.normal(size=(1, 2, 2, 2)))
        projection = rng.normal(size=(1, 2, 16, 16))
        return (lambda x: F.sum_all(F.mul(F.bilinear_upsample(x, 8), Tensor(projection)))), [x]

    def bce(balanced):
        def build(rng):
            logits = Tensor(rng.normal(scale=2.0, size=(1, 1, 4, 4)))
            target = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(np.float64)
            target[0, 0, 0, 0], target[0, 0, 0, 1] = 1.0, 0.0
            return (lambda logits: F.bce_from_logits(logits, Tensor(target), balanced=balanced)), [logits]

        return build

    return [
        GradCheckCase("conv2d", conv),
        GradCheckCase("conv2d_5x5", conv_5x5),
        GradCheckCase("maxpool2", maxpool),
        GradCheckCase("relu", relu),
        GradCheckCase("sigmoid", sigmoid),
        GradCheckCase("add", add, tolerance=LINEAR_TOLERANCE),
        GradCheckCase("mul_broadcast", broadcast_mul, tolerance=LINEAR_TOLERANCE),
        GradCheckCase("reverse", reverse, tolerance=LINEAR_TOLERANCE),
        GradCheckCase("bilinear_upsample", upsample, tolerance=LINEAR_TOLERANCE),
        GradCheckCase("bilinear_upsample_x8", upsample_x8, tolerance=LINEAR_TOLERANCE),
        GradCheckCase("bce_from_logits", bce(False)),
        GradCheckCase("bce_from_logits_balanced", bce(True)),
    ]


class GradCheckService(BaseService):
    def __init__(self):
        super().__init__()

    def check_case(self, case: GradCheckCase, seeds: int = 20, base_seed: int = 0) -> GradCheckResult:
        errors = []
        for seed in range(base_seed, base_seed + seeds):
            rng = np.random.default_rng(seed)
            fn, inputs = case.build(rng)
            error = grad_check(fn, inputs, step=case.step, coordinates=case.coordinates, rng=rng, skip_kinks=case.skip_kinks)
            errors.append(error)
        result = GradCheckResult(case.name, max(errors), case.tolerance, seeds, errors)
        logger.info("grad check %s: max relative error %.3e over %d seeds", case.name, result.max_error, seeds)
        return result

    def run_suite(self, cases: Sequence[GradCheckCase], seeds: int = 20) -> List[GradCheckResult]:
        return [self.check_case(case, seeds=seeds) for case in cases]
