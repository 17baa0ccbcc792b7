from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, Optional, Tuple

from app.modules.autodiff.models import Tensor
from core.managers.config_manager import ConfigValidationError

BACKBONES = ("vgg16", "toy")
VGG16_STAGE_CHANNELS = (64, 128, 256, 512, 512)
VGG16_STAGE_CONVS = (2, 2, 3, 3, 3)
TOY_STAGE_CHANNELS = (16, 32, 64, 64, 64)
TOY_STAGE_CONVS = (1, 1, 1, 1, 1)
VGG16_GLOBAL_CHANNELS = 256
VGG16_SIDE_CHANNELS = 64
TOY_GLOBAL_CHANNELS = 32
TOY_SIDE_CHANNELS = 16
NUM_STAGES = 5
# Side i sits at stride 2 ** (i - 1); the global branch sits after pool5
SIDE_INDICES = (5, 4, 3, 2, 1)
GLOBAL_STRIDE = 32


@dataclass(frozen=True)
class NetworkSpec:
    backbone: str = "toy"
    stage_channels: Tuple[int, ...] = TOY_STAGE_CHANNELS
    stage_convs: Tuple[int, ...] = TOY_STAGE_CONVS
    residual_depth: int = 2
    attention_enabled: bool = True
    global_channels: int = TOY_GLOBAL_CHANNELS
    side_channels: int = TOY_SIDE_CHANNELS
    input_channels: int = 3

    @classmethod
    def vgg16(cls, **overrides) -> "NetworkSpec":
        overrides.setdefault("global_channels", VGG16_GLOBAL_CHANNELS)
        overrides.setdefault("side_channels", VGG16_SIDE_CHANNELS)
        return cls(backbone="vgg16", stage_channels=VGG16_STAGE_CHANNELS, stage_convs=VGG16_STAGE_CONVS, **overrides)

    @classmethod
    def toy(cls, **overrides) -> "NetworkSpec":
        return cls(backbone="toy", **overrides)

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        data = dict(data)
        backbone = data.get("backbone", "toy")
        if backbone == "vgg16":
            data.setdefault("stage_channels", VGG16_STAGE_CHANNELS)
            data.setdefault("stage_convs", VGG16_STAGE_CONVS)
            data.setdefault("global_channels", VGG16_GLOBAL_CHANNELS)
            data.setdefault("side_channels", VGG16_SIDE_CHANNELS)
        for key in ("stage_channels", "stage_convs"):
            if key in data:
                data[key] = tuple(int(v) for v in data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigValidationError(f"Unknown network fields: {sorted(unknown)}")
        spec = cls(**data)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        data = asdict(self)
        data["stage_channels"] = list(self.stage_channels)
        data["stage_convs"] = list(self.stage_convs)
        return data

    def validate(self):
        if self.backbone not in BACKBONES:
            raise ConfigValidationError(f"backbone must be one of {BACKBONES}, got '{self.backbone}'")
        if len(self.stage_channels) != NUM_STAGES or len(self.stage_convs) != NUM_STAGES:
            raise ConfigValidationError("stage_channels and stage_convs must list exactly 5 stages")
        if self.backbone == "vgg16" and (
            self.stage_channels != VGG16_STAGE_CHANNELS or self.stage_convs != VGG16_STAGE_CONVS
        ):
            raise ConfigValidationError("vgg16 backbone has fixed stage channels (64,128,256,512,512) and convs (2,2,3,3,3)")
        if any(c < 1 for c in self.stage_channels) or any(n < 1 for n in self.stage_convs):
            raise ConfigValidationError("stage channel and conv counts must be positive")
        if self.residual_depth < 1:
            raise ConfigValidationError(f"residual_depth must be >= 1, got {self.residual_depth}")
        if self.global_channels < 1 or self.side_channels < 1 or self.input_channels < 1:
            raise ConfigValidationError("global_channels, side_channels and input_channels must be positive")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    zero_init: bool = False

    @property
    def param_count(self) -> int:
        return self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels


class Model:
    """Ordered parameter store plus the NetworkSpec that determines its shapes."""

    def __init__(self, spec: NetworkSpec, params: Optional["OrderedDict[str, Tensor]"] = None):
        self.spec = spec
        self.params: "OrderedDict[str, Tensor]" = params if params is not None else OrderedDict()

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def parameters(self) -> Iterator[Tensor]:
        return iter(self.params.values())

    def weight(self, layer: str) -> Tensor:
        return self.params[f"{layer}.weight"]

    def bias(self, layer: str) -> Tensor:
        return self.params[f"{layer}.bias"]

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    @property
    def dtype(self):
        first = next(iter(self.params.values()))
        return first.dtype


@dataclass
class SidePredictions:
    """
    Pre-sigmoid logits of every side-output.

    `sides[i]` is S_i at stride 2 ** (i - 1); `attention[i]` is A_i (empty when attention is disabled).
    """

    s_global: Tensor
    sides: Dict[int, Tensor] = field(default_factory=dict)
    attention: Dict[int, Tensor] = field(default_factory=dict)

    @property
    def final(self) -> Tensor:
        return self.sides[1]

    def ordered(self) -> Iterator[Tuple[str, Tensor, int]]:
        """(name, logits, stride) from the global branch down to side 1."""
        yield "global", self.s_global, GLOBAL_STRIDE
        for i in SIDE_INDICES:
            yield f"side{i}", self.sides[i], 2 ** (i - 1)
