import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

from jsonschema import Draft7Validator

from app.modules.network.models import BACKBONES, NetworkSpec
from app.modules.training.models import TrainConfig
from core.configuration.configuration import SUPPORTED_PRECISIONS
from core.managers.config_manager import ConfigValidationError

logger = logging.getLogger(__name__)

_positive_int = {"type": "integer", "minimum": 1}
_stage_list = {"type": "array", "items": _positive_int, "minItems": 5, "maxItems": 5}

RUN_CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backbone": {"enum": list(BACKBONES)},
                "stage_channels": _stage_list,
                "stage_convs": _stage_list,
                "residual_depth": _positive_int,
                "attention_enabled": {"type": "boolean"},
                "global_channels": _positive_int,
                "side_channels": _positive_int,
                "input_channels": _positive_int,
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "weight_decay": {"type": "number", "minimum": 0},
                "iter_size": _positive_int,
                "batch_size": _positive_int,
                "max_iterations": {"type": "integer", "minimum": 0},
                "lr_decay_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "plateau_window": _positive_int,
                "seed": {"type": "integer", "minimum": 0},
                "balanced_loss": {"type": "boolean"},
                "detach_attention": {"type": "boolean"},
                "checkpoint_interval": {"type": "integer", "minimum": 0},
                "checkpoint_dir": {"type": ["string", "null"]},
                "log_interval": {"type": "integer", "minimum": 0},
                "augment": {"type": "boolean"},
                "precision": {"enum": sorted(SUPPORTED_PRECISIONS)},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "train_dir": {"type": ["string", "null"]},
                "held_out_dir": {"type": ["string", "null"]},
                "pad": {"type": "boolean"},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta2": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"enum": ["aggregate", "per_image"]},
            },
        },
    },
}

_validator = Draft7Validator(RUN_CONFIG_SCHEMA)


@dataclass(frozen=True)
class DataConfig:
    train_dir: Optional[str] = None
    held_out_dir: Optional[str] = None
    pad: bool = False


@dataclass(frozen=True)
class EvaluationConfig:
    beta2: float = 0.3
    mode: str = "aggregate"


@dataclass(frozen=True)
class RunConfig:
    """A validated run: network shape, optimizer settings, data locations and metric options."""

    network: NetworkSpec = field(default_factory=NetworkSpec.toy)
    training: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, document: Dict[str, Any], default_precision: Optional[str] = None) -> "RunConfig":
        """`default_precision` applies when the training section leaves `precision` unset."""
        errors = sorted(_validator.iter_errors(document), key=lambda e: list(e.absolute_path))
        if errors:
            details = "; ".join(f"{'.'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors)
            raise ConfigValidationError(f"Invalid run config: {details}")

        network = NetworkSpec.from_dict(document.get("network", {}))
        training_doc = dict(document.get("training", {}))
        if default_precision:
            training_doc.setdefault("precision", default_precision)
        training = TrainConfig.from_dict(training_doc, backbone=network.backbone)
        return cls(
            network=network,
            training=training,
            data=DataConfig(**document.get("data", {})),
            evaluation=EvaluationConfig(**document.get("evaluation", {})),
        )

    @classmethod
    def load(cls, path: str, default_precision: Optional[str] = None) -> "RunConfig":
        try:
            with open(path, "r") as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigValidationError(f"{path}: not valid JSON ({e})") from e
        config = cls.from_dict(document, default_precision=default_precision)
        logger.info("Loaded run config %s (%s backbone)", path, config.network.backbone)
        return config

    def with_overrides(self, network: Optional[dict] = None, training: Optional[dict] = None) -> "RunConfig":
        """Apply command-line values on top of the file; None values leave the file setting in place."""
        network = {k: v for k, v in (network or {}).items() if v is not None}
        training = {k: v for k, v in (training or {}).items() if v is not None}
        spec = replace(self.network, **network)
        spec.validate()
        train = replace(self.training, **training)
        train.validate()
        return replace(self, network=spec, training=train)

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "training": self.training.to_dict(),
            "data": {"train_dir": self.data.train_dir, "held_out_dir": self.data.held_out_dir, "pad": self.data.pad},
            "evaluation": {"beta2": self.evaluation.beta2, "mode": self.evaluation.mode},
        }
