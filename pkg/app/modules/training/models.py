from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.configuration.configuration import SUPPORTED_PRECISIONS
from core.managers.config_manager import ConfigValidationError

TOY_LEARNING_RATE = 1e-5
# Fine-tuning rate for a pretrained VGG-16 backbone
VGG16_LEARNING_RATE = 1e-8
PLATEAU_THRESHOLD = 0.01
# Average max-F gain of reverse attention on full-scale benchmarks; logged for reference only
REFERENCE_ATTENTION_GAIN = 0.014


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, loss: float, norms: Dict[str, float]):
        dump = ", ".join(f"{name}={norm:.4g}" for name, norm in norms.items())
        super().__init__(f"Non-finite loss {loss} at iteration {iteration}; parameter norms: {dump}")
        self.iteration = iteration
        self.loss = loss
        self.norms = norms


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = TOY_LEARNING_RATE
    momentum: float = 0.9
    weight_decay: float = 5e-4
    iter_size: int = 10
    batch_size: int = 1
    max_iterations: int = 10000
    lr_decay_factor: float = 0.1
    plateau_window: int = 100
    seed: int = 0
    balanced_loss: bool = True
    detach_attention: bool = False
    checkpoint_interval: int = 0
    checkpoint_dir: Optional[str] = None
    log_interval: int = 100
    augment: bool = True
    precision: str = "float64"

    @classmethod
    def for_backbone(cls, backbone: str, **overrides) -> "TrainConfig":
        rate = VGG16_LEARNING_RATE if backbone == "vgg16" else TOY_LEARNING_RATE
        overrides.setdefault("learning_rate", rate)
        return cls(**overrides)

    @classmethod
    def from_dict(cls, data: dict, backbone: str = "toy") -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigValidationError(f"Unknown training fields: {sorted(unknown)}")
        config = cls.for_backbone(backbone, **data)
        config.validate()
        return config

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def dtype(self):
        return SUPPORTED_PRECISIONS[self.precision]

    def validate(self):
        if not self.learning_rate > 0:
            raise ConfigValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.iter_size < 1:
            raise ConfigValidationError(f"iter_size must be >= 1, got {self.iter_size}")
        if self.batch_size < 1:
            raise ConfigValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 0:
            raise ConfigValidationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigValidationError(f"lr_decay_factor must lie in (0, 1], got {self.lr_decay_factor}")
        if self.plateau_window < 1:
            raise ConfigValidationError(f"plateau_window must be >= 1, got {self.plateau_window}")
        if self.checkpoint_interval < 0 or self.log_interval < 0:
            raise ConfigValidationError("checkpoint_interval and log_interval must be >= 0")
        if self.checkpoint_interval and not self.checkpoint_dir:
            raise ConfigValidationError("checkpoint_interval is set but checkpoint_dir is missing")
        if self.precision not in SUPPORTED_PRECISIONS:
            raise ConfigValidationError(f"precision must be one of {sorted(SUPPORTED_PRECISIONS)}, got '{self.precision}'")


@dataclass
class OptimizerState:
    """Momentum buffers and schedule bookkeeping carried across optimizer steps."""

    lr: float
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    losses: List[float] = field(default_factory=list)
    last_decay: Optional[int] = None
    decay_events: List[int] = field(default_factory=list)

    @classmethod
    def initial(cls, model, cfg: TrainConfig) -> "OptimizerState":
        velocity = {name: np.zeros_like(tensor.data) for name, tensor in model.named_parameters()}
        return cls(lr=cfg.learning_rate, velocity=velocity)

    def record(self, loss: float, window: int):
        self.losses.append(float(loss))
        # Only the two most recent windows feed the plateau test
        del self.losses[: -2 * window]


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    model: object
    log: List[LossRecord]
    state: OptimizerState

    @property
    def initial_loss(self) -> Optional[float]:
        return self.log[0].loss if self.log else None

    @property
    def final_loss(self) -> Optional[float]:
        return self.log[-1].loss if self.log else None


@dataclass
class AblationVariant:
    """One trained-and-evaluated network configuration of an ablation run."""

    name: str
    attention_enabled: bool
    residual_depth: int
    final_loss: Optional[float]
    report: object
    sides: Dict[str, object] = field(default_factory=dict)

    @property
    def max_f_measure(self) -> float:
        return self.report.max_f_measure

    @property
    def mae(self) -> float:
        return self.report.mae


@dataclass
class AblationReport:
    seed: int
    variants: List[AblationVariant]
    reference_gain: float = REFERENCE_ATTENTION_GAIN

    def variant(self, attention_enabled: bool, residual_depth: int) -> Optional[AblationVariant]:
        for variant in self.variants:
            if variant.attention_enabled == attention_enabled and variant.residual_depth == residual_depth:
                return variant
        return None

    def attention_gains(self) -> Dict[str, Dict[str, float]]:
        """Per residual depth: max F and MAE of the attention variant minus the variant without it."""
        gains = {}
        for depth in sorted({v.residual_depth for v in self.variants}):
            with_ra, without_ra = self.variant(True, depth), self.variant(False, depth)
            if with_ra is None or without_ra is None:
                continue
            gains[f"depth_{depth}"] = {
                "max_f_measure": with_ra.max_f_measure - without_ra.max_f_measure,
                "mae": with_ra.mae - without_ra.mae,
            }
        return gains
