import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.modules.autodiff import functional as F
from app.modules.autodiff.models import ShapeError, Tensor
from app.modules.autodiff.services import GradCheckCase
from app.modules.dataset.services import crop_to, pad_to_multiple
from app.modules.network.models import GLOBAL_STRIDE, NUM_STAGES, SIDE_INDICES, LayerSpec, Model, NetworkSpec, SidePredictions
from app.modules.network.repositories import WeightRepository
from core.services.BaseService import BaseService

logger = logging.getLogger(__name__)

GLOBAL_KERNEL = 5
GLOBAL_CONVS = 3
SIDE_KERNEL = 3

Conv = Tuple[Tensor, Tensor]


def layer_specs(spec: NetworkSpec) -> List[LayerSpec]:
    """Every conv layer of the network in parameter-store order."""
    layers = []
    in_channels = spec.input_channels
    for stage in range(1, NUM_STAGES + 1):
        out_channels = spec.stage_channels[stage - 1]
        for k in range(1, spec.stage_convs[stage - 1] + 1):
            layers.append(LayerSpec(f"backbone.conv{stage}_{k}", in_channels, out_channels, 3))
            in_channels = out_channels

    top = spec.stage_channels[-1]
    g = spec.global_channels
    layers.append(LayerSpec("global.reduce", top, g, 1))
    for k in range(1, GLOBAL_CONVS + 1):
        layers.append(LayerSpec(f"global.conv{k}", g, g, GLOBAL_KERNEL))
    layers.append(LayerSpec("global.score", g, 1, 1, zero_init=True))

    c = spec.side_channels
    for i in SIDE_INDICES:
        layers.append(LayerSpec(f"side{i}.reduce", spec.stage_channels[i - 1], c, 1))
        for d in range(1, spec.residual_depth + 1):
            layers.append(LayerSpec(f"side{i}.conv{d}", c, c, SIDE_KERNEL))
        layers.append(LayerSpec(f"side{i}.score", c, 1, SIDE_KERNEL, zero_init=True))
    return layers


def analytic_param_count(spec: NetworkSpec) -> int:
    return sum(layer.param_count for layer in layer_specs(spec))


def param_count(model: Model) -> int:
    return sum(int(tensor.data.size) for tensor in model.parameters())


@dataclass
class SideBranch:
    reduce: Conv
    convs: List[Conv]
    score: Conv


def side_branch(model: Model, side: int) -> SideBranch:
    depth = model.spec.residual_depth
    return SideBranch(
        reduce=(model.weight(f"side{side}.reduce"), model.bias(f"side{side}.reduce")),
        convs=[(model.weight(f"side{side}.conv{d}"), model.bias(f"side{side}.conv{d}")) for d in range(1, depth + 1)],
        score=(model.weight(f"side{side}.score"), model.bias(f"side{side}.score")),
    )


def reverse_attention(s_next_up: Tensor) -> Tensor:
    """A = 1 - sigmoid(S), evaluated as sigmoid(-S) so that confident regions stay strictly above 0."""
    return F.sigmoid(F.negate(s_next_up))


def residual_unit(
    t: Tensor,
    s_next_up: Tensor,
    branch: SideBranch,
    attention_enabled: bool = True,
    detach_attention: bool = False,
) -> Tuple[Tensor, Optional[Tensor]]:
    """
    One side-output residual step: S_i = S_next_up + R_i.

    Returns S_i and the reverse attention map used to weight the side features (None without attention).
    """
    if t.shape[0] != s_next_up.shape[0] or t.shape[2:] != s_next_up.shape[2:] or s_next_up.shape[1] != 1:
        raise ShapeError(f"residual_unit: side feature {t.shape} does not match upsampled prediction {s_next_up.shape}")

    features = F.conv2d(t, *branch.reduce)
    attention = None
    if attention_enabled:
        guide = F.stop_gradient(s_next_up) if detach_attention else s_next_up
        attention = reverse_attention(guide)
        features = F.mul(features, attention)
    for weight, bias in branch.convs:
        features = F.relu(F.conv2d(features, weight, bias))
    residual = F.conv2d(features, *branch.score)
    return F.add(s_next_up, residual), attention


def required_padding(height: int, width: int, multiple: int = GLOBAL_STRIDE) -> Tuple[int, int]:
    return (-height) % multiple, (-width) % multiple


class NetworkService(BaseService):
    def __init__(self):
        super().__init__(WeightRepository())

    def build_network(self, spec: NetworkSpec, seed: int = 0, dtype=np.float64) -> Model:
        spec.validate()
        rng = np.random.default_rng(seed)
        params = OrderedDict()
        for layer in layer_specs(spec):
            shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            if layer.zero_init:
                weight = np.zeros(shape, dtype=dtype)
            else:
                fan_in = layer.in_channels * layer.kernel * layer.kernel
                weight = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
            params[f"{layer.name}.weight"] = Tensor(weight, requires_grad=True)
            params[f"{layer.name}.bias"] = Tensor(np.zeros(layer.out_channels, dtype=dtype), requires_grad=True)
        model = Model(spec, params)
        logger.info("Built %s network: %d parameters (seed %d)", spec.backbone, param_count(model), seed)
        return model

    def backbone(self, model: Model, image: Tensor) -> Tuple[Dict[int, Tensor], Tensor]:
        """Side taps per stage (last conv of each stage) and the pool5 output."""
        spec = model.spec
        taps = {}
        x = image
        for stage in range(1, NUM_STAGES + 1):
            if stage > 1:
                x = F.maxpool2(x)
            for k in range(1, spec.stage_convs[stage - 1] + 1):
                layer = f"backbone.conv{stage}_{k}"
                x = F.relu(F.conv2d(x, model.weight(layer), model.bias(layer)))
            taps[stage] = x
        return taps, F.maxpool2(x)

    def global_saliency(self, model: Model, pool5: Tensor) -> Tensor:
        x = F.conv2d(pool5, model.weight("global.reduce"), model.bias("global.reduce"))
        for k in range(1, GLOBAL_CONVS + 1):
            x = F.relu(F.conv2d(x, model.weight(f"global.conv{k}"), model.bias(f"global.conv{k}")))
        return F.conv2d(x, model.weight("global.score"), model.bias("global.score"))

    def validate_input(self, model: Model, image: Tensor):
        if image.data.ndim != 4:
            raise ShapeError(f"forward expects an (N, C, H, W) image, got shape {image.shape}")
        n, c, h, w = image.shape
        if c != model.spec.input_channels:
            raise ShapeError(f"forward expects {model.spec.input_channels} input channels, got {c}")
        pad_h, pad_w = required_padding(h, w)
        if pad_h or pad_w:
            raise ShapeError(
                f"input {h}x{w} is not divisible by {GLOBAL_STRIDE}: pad height by {pad_h} and width by {pad_w} "
                f"to reach {h + pad_h}x{w + pad_w}"
            )

    def forward(self, model: Model, image: Tensor, detach_attention: bool = False) -> SidePredictions:
        self.validate_input(model, image)
        taps, pool5 = self.backbone(model, image)
        s_global = self.global_saliency(model, pool5)

        preds = SidePredictions(s_global=s_global)
        deeper = s_global
        for i in SIDE_INDICES:
            s_next_up = F.bilinear_upsample(deeper, 2)
            s_i, attention = residual_unit(
                taps[i],
                s_next_up,
                side_branch(model, i),
                attention_enabled=model.spec.attention_enabled,
                detach_attention=detach_attention,
            )
            preds.sides[i] = s_i
            if attention is not None:
                preds.attention[i] = attention
            deeper = s_i
        return preds

    def side_probabilities(self, preds: SidePredictions) -> "OrderedDict[str, np.ndarray]":
        """sigmoid of every side-output at full input resolution, (N, H, W) each."""
        maps = OrderedDict()
        for name, logits, stride in preds.ordered():
            full = logits if stride == 1 else F.bilinear_upsample(logits, stride)
            maps[name] = F.sigmoid(full).data[:, 0]
        return maps

    def predict(self, model: Model, image: np.ndarray, pad: bool = False) -> "OrderedDict[str, np.ndarray]":
        """
        Full-resolution probability maps for one (3, H, W) or (1, 3, H, W) image.

        The final saliency map is under key "final" (sigmoid of side 1); with `pad`, the image is
        reflect-padded up to a multiple of 32 and every map is cropped back.
        """
        array = np.asarray(image, dtype=model.dtype)
        if array.ndim == 3:
            array = array[None]
        height, width = array.shape[2:]
        if pad:
            array = pad_to_multiple(array, GLOBAL_STRIDE)
        preds = self.forward(model, Tensor(array))
        maps = self.side_probabilities(preds)
        maps["final"] = maps["side1"]
        return OrderedDict((name, crop_to(prob[0], height, width)) for name, prob in maps.items())

    def save_weights(self, model: Model, path: str) -> str:
        self.repository.save(model, path)
        logger.info("Saved %d tensors to %s", len(model.params), path)
        return path

    def load_weights(self, path: str) -> Model:
        model = self.repository.load(path)
        self.check_layout(model)
        return model

    def check_layout(self, model: Model):
        expected = OrderedDict()
        for layer in layer_specs(model.spec):
            expected[f"{layer.name}.weight"] = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            expected[f"{layer.name}.bias"] = (layer.out_channels,)
        actual = OrderedDict((name, tensor.shape) for name, tensor in model.named_parameters())
        if list(actual) != list(expected):
            missing = sorted(set(expected) - set(actual))
            extra = sorted(set(actual) - set(expected))
            raise ValueError(f"Parameter store does not match its NetworkSpec: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if actual[name] != shape:
                raise ValueError(f"Parameter '{name}' has shape {actual[name]}, spec requires {shape}")


def gradient_check_cases() -> List[GradCheckCase]:
    """Composite checks over a residual unit with randomized (non-zero) output layers."""

    def residual(attention_enabled):
        def build(rng):
            spec = NetworkSpec.toy(stage_channels=(2, 2, 2, 2, 2), side_channels=3, global_channels=2)
            model = NetworkService().build_network(spec, seed=int(rng.integers(1 << 31)))
            branch = side_branch(model, 3)
            for weight, bias in [branch.reduce, *branch.convs, branch.score]:
                weight.data = rng.normal(scale=0.5, size=weight.shape)
                bias.data = rng.normal(scale=0.1, size=bias.shape)
            t = Tensor(rng.normal(size=(1, 2, 4, 4)))
            s = Tensor(rng.normal(size=(1, 1, 4, 4)))
            projection = rng.normal(size=(1, 1, 4, 4))
            inputs = [t, s, branch.reduce[0], branch.convs[0][0], branch.score[0], branch.score[1]]

            def fn(t, s, *_):
                s_i, _attention = residual_unit(t, s, branch, attention_enabled=attention_enabled)
                return F.sum_all(F.mul(s_i, Tensor(projection)))

            return fn, inputs

        return build

    return [
        GradCheckCase("residual_unit", residual(True), step=1e-5, skip_kinks=True),
        GradCheckCase("residual_unit_no_attention", residual(False), step=1e-5, skip_kinks=True),
    ]
