import logging
import os
from collections import OrderedDict
from dataclasses import replace
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from app.modules.autodiff import functional as F
from app.modules.autodiff.models import ScalarLoss, ShapeError, Tensor
from app.modules.autodiff.services import GradCheckCase
from app.modules.dataset.models import Sample
from app.modules.evaluation.services import EvaluationService
from app.modules.network.models import Model, NetworkSpec, SidePredictions
from app.modules.network.services import NetworkService
from app.modules.training.models import (
    PLATEAU_THRESHOLD,
    AblationReport,
    AblationVariant,
    LossRecord,
    NonFiniteLossError,
    OptimizerState,
    TrainConfig,
    TrainResult,
)
from app.modules.training.repositories import AblationRepository, CheckpointRepository, LossLogRepository
from core.services.BaseService import BaseService

logger = logging.getLogger(__name__)


def side_losses(preds: SidePredictions, target: Tensor, balanced: bool = True) -> "OrderedDict[str, ScalarLoss]":
    """One BCE term per side-output, each computed on logits upsampled to the target's resolution."""
    terms = OrderedDict()
    for name, logits, stride in preds.ordered():
        full = logits if stride == 1 else F.bilinear_upsample(logits, stride)
        if full.shape != target.shape:
            raise ShapeError(f"{name} upsampled to {full.shape} does not match ground truth {target.shape}")
        terms[name] = F.bce_from_logits(full, target, balanced=balanced)
    return terms


def total_loss(preds: SidePredictions, target: Tensor, balanced: bool = True) -> ScalarLoss:
    """Equally weighted sum of the six side-output losses (global, side5 .. side1)."""
    return F.add_scalars(side_losses(preds, target, balanced).values())


def sgd_step(model: Model, state: OptimizerState, cfg: TrainConfig, grads: Optional[Dict[str, np.ndarray]] = None):
    """
    Momentum SGD on gradients accumulated over `cfg.iter_size` passes.

    g = accumulated / iter_size + weight_decay * w; v = momentum * v + g; w = w - lr * v.
    `grads` defaults to the parameters' own `.grad`; accumulators are reset afterwards.
    """
    for name, param in model.named_parameters():
        accumulated = grads.get(name) if grads is not None else param.grad
        if accumulated is None:
            accumulated = np.zeros_like(param.data)
        g = accumulated / cfg.iter_size + cfg.weight_decay * param.data
        velocity = state.velocity.get(name)
        if velocity is None:
            velocity = np.zeros_like(param.data)
        velocity = cfg.momentum * velocity + g
        state.velocity[name] = velocity
        param.data = param.data - state.lr * velocity
    model.zero_grad()
    state.iteration += 1


def lr_schedule(state: OptimizerState, cfg: TrainConfig) -> float:
    """
    Decay the learning rate when the loss flattens.

    Plateau: the mean of the last `plateau_window` losses improves by less than 1% on the
    window before it. Decays at most once per window.
    """
    window = cfg.plateau_window
    if len(state.losses) < 2 * window:
        return state.lr
    if state.last_decay is not None and state.iteration - state.last_decay < window:
        return state.lr

    previous = float(np.mean(state.losses[-2 * window : -window]))
    current = float(np.mean(state.losses[-window:]))
    improvement = (previous - current) / abs(previous) if previous else 0.0
    if improvement < PLATEAU_THRESHOLD:
        state.lr *= cfg.lr_decay_factor
        state.last_decay = state.iteration
        state.decay_events.append(state.iteration)
        logger.info("Loss plateau at iteration %d (%.2f%% improvement): lr -> %.3e", state.iteration, 100 * improvement, state.lr)
    return state.lr


def parameter_norms(model: Model) -> "OrderedDict[str, float]":
    return OrderedDict((name, float(np.linalg.norm(tensor.data))) for name, tensor in model.named_parameters())


def sample_stream(samples: Sequence[Sample], rng: np.random.Generator) -> Iterator[Sample]:
    """Endless epochs, each in a fresh seeded permutation."""
    while True:
        for index in rng.permutation(len(samples)):
            yield samples[int(index)]


class TrainingService(BaseService):
    def __init__(self):
        super().__init__(LossLogRepository())
        self.network = NetworkService()
        self.checkpoints = CheckpointRepository()

    def batch(self, stream: Iterator[Sample], batch_size: int, dtype):
        drawn = [next(stream) for _ in range(batch_size)]
        sizes = {sample.image.shape for sample in drawn}
        if len(sizes) > 1:
            raise ShapeError(f"batch_size {batch_size} needs equally sized images, got {sorted(sizes)}")
        image = np.concatenate([sample.image for sample in drawn]).astype(dtype)
        target = np.concatenate([sample.target(dtype) for sample in drawn])
        return Tensor(image), Tensor(target)

    def sample_loss(self, model: Model, sample: Sample, cfg: TrainConfig) -> float:
        dtype = model.dtype
        preds = self.network.forward(model, Tensor(sample.image.astype(dtype)))
        return total_loss(preds, Tensor(sample.target(dtype)), balanced=cfg.balanced_loss).value

    def train(self, model: Model, samples: Sequence[Sample], cfg: TrainConfig) -> TrainResult:
        """
        Run `cfg.max_iterations` optimizer steps, each accumulating `cfg.iter_size` forward/backward passes.

        Parameters are updated in place. The sample order, and with it every logged loss, is fixed by `cfg.seed`.
        """
        cfg.validate()
        if not samples:
            raise ValueError("Training needs a non-empty dataset")
        dtype = cfg.dtype
        for tensor in model.parameters():
            tensor.data = tensor.data.astype(dtype, copy=False)
            tensor.requires_grad = True

        rng = np.random.default_rng(cfg.seed)
        stream = sample_stream(samples, rng)
        state = OptimizerState.initial(model, cfg)
        log: List[LossRecord] = []
        model.zero_grad()
        logger.info(
            "Training %s network for %d iterations (iter_size %d, batch %d, lr %.3e, %d samples)",
            model.spec.backbone,
            cfg.max_iterations,
            cfg.iter_size,
            cfg.batch_size,
            cfg.learning_rate,
            len(samples),
        )

        for step in range(1, cfg.max_iterations + 1):
            accumulated = 0.0
            for _ in range(cfg.iter_size):
                image, target = self.batch(stream, cfg.batch_size, dtype)
                preds = self.network.forward(model, image, detach_attention=cfg.detach_attention)
                loss = total_loss(preds, target, balanced=cfg.balanced_loss)
                if not np.isfinite(loss.value):
                    raise NonFiniteLossError(step, loss.value, parameter_norms(model))
                loss.backward()
                accumulated += loss.value

            step_loss = accumulated / cfg.iter_size
            log.append(LossRecord(iteration=step, lr=state.lr, loss=step_loss))
            sgd_step(model, state, cfg)
            state.record(step_loss, cfg.plateau_window)
            lr_schedule(state, cfg)

            if cfg.log_interval and step % cfg.log_interval == 0:
                logger.info("iteration %d: loss %.6f, lr %.3e", step, step_loss, state.lr)
            if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
                path = self.checkpoints.save_checkpoint(model, cfg.checkpoint_dir, step)
                logger.info("Checkpoint written to %s", path)

        return TrainResult(model=model, log=log, state=state)

    def save_loss_log(self, log: List[LossRecord], path: str) -> str:
        return self.repository.save(log, path)

    def load_loss_log(self, path: str) -> List[LossRecord]:
        return self.repository.load(path)


def gradient_check_cases() -> List[GradCheckCase]:
    """Full network forward plus deep-supervision loss on a tiny spec, sampled coordinates."""
    checked = (
        "backbone.conv5_1.weight",
        "global.conv3.weight",
        "global.score.weight",
        "side3.reduce.weight",
        "side1.conv2.weight",
        "side1.score.weight",
        "side2.score.bias",
    )

    def full_graph(attention_enabled):
        def build(rng):
            spec = NetworkSpec.toy(
                stage_channels=(2, 2, 2, 2, 2), side_channels=2, global_channels=2, attention_enabled=attention_enabled
            )
            service = NetworkService()
            model = service.build_network(spec, seed=int(rng.integers(1 << 31)))
            for name, tensor in model.named_parameters():
                if name.endswith(".score.weight") or name.endswith(".score.bias"):
                    tensor.data = rng.normal(scale=0.3, size=tensor.shape)
            image = rng.normal(size=(1, 3, 32, 32))
            target = (rng.uniform(size=(1, 1, 32, 32)) > 0.7).astype(np.float64)
            inputs = [model[name] for name in checked]

            def fn(*_):
                preds = service.forward(model, Tensor(image))
                return total_loss(preds, Tensor(target), balanced=True)

            return fn, inputs

        return build

    return [
        GradCheckCase("forward_and_loss", full_graph(True), step=1e-4, coordinates=3, skip_kinks=True),
        GradCheckCase("forward_and_loss_no_attention", full_graph(False), step=1e-4, coordinates=3, skip_kinks=True),
    ]


class AblationService(BaseService):
    """Trains and evaluates the attention / no-attention variants (optionally over residual depths) under one seed."""

    def __init__(self):
        super().__init__(AblationRepository())
        self.network = NetworkService()
        self.training = TrainingService()
        self.evaluation = EvaluationService()

    def run_variant(self, spec: NetworkSpec, cfg: TrainConfig, train_samples, held_out, beta2: float, weights_dir=None):
        name = f"{'ras' if spec.attention_enabled else 'no_ra'}_depth{spec.residual_depth}"
        model = self.network.build_network(spec, seed=cfg.seed, dtype=cfg.dtype)
        result = self.training.train(model, train_samples, cfg)
        if weights_dir:
            self.network.save_weights(model, os.path.join(weights_dir, f"{name}.rasw"))
            self.training.save_loss_log(result.log, os.path.join(weights_dir, f"{name}_loss.csv"))

        sides = self.evaluation.evaluate_sides(model, held_out, beta2=beta2)
        variant = AblationVariant(
            name=name,
            attention_enabled=spec.attention_enabled,
            residual_depth=spec.residual_depth,
            final_loss=result.final_loss,
            report=sides["side1"],
            sides=dict(sides),
        )
        logger.info("Variant %s: max F %.4f, MAE %.4f", name, variant.max_f_measure, variant.mae)
        return variant

    def run(
        self,
        spec: NetworkSpec,
        cfg: TrainConfig,
        train_samples,
        held_out,
        depths: Optional[Sequence[int]] = None,
        beta2: float = 0.3,
        weights_dir: Optional[str] = None,
    ) -> AblationReport:
        variants = []
        for depth in depths or (spec.residual_depth,):
            for attention_enabled in (True, False):
                variant_spec = replace(spec, residual_depth=depth, attention_enabled=attention_enabled)
                variants.append(self.run_variant(variant_spec, cfg, train_samples, held_out, beta2, weights_dir))

        report = AblationReport(seed=cfg.seed, variants=variants)
        for depth, gain in report.attention_gains().items():
            logger.info(
                "Reverse attention gain at %s: max F %+.4f, MAE %+.4f (reference max F gain %.3f)",
                depth,
                gain["max_f_measure"],
                gain["mae"],
                report.reference_gain,
            )
        return report

    def save_report(self, report: AblationReport, path: str) -> str:
        return self.repository.save_report(report, path)
