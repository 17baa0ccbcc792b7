"""
Differentiable primitives over NCHW tensors.

Every op validates its operands, computes the forward result with numpy and records a
backward rule returning one gradient per parent (None for parents that need none).
"""

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.modules.autodiff.models import ScalarLoss, ShapeError, Tensor

UPSAMPLE_FACTORS = (2, 4, 8, 16, 32)


def _require_4d(x: Tensor, name: str):
    if x.data.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D (N, C, H, W) tensor, got shape {x.shape}")


# --------------------
# Convolution / pooling
# --------------------


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 convolution with zero "same" padding; odd kernels only."""
    _require_4d(x, "conv2d input")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d weight must be (K, C, kh, kw), got shape {weight.shape}")
    n, c, h, w = x.shape
    k, wc, kh, kw = weight.shape
    if wc != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c} channels, weight expects {wc}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel must be odd-sized, got {kh}x{kw}")
    if bias.shape != (k,):
        raise ShapeError(f"conv2d bias must have shape ({k},), got {bias.shape}")

    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))  # N, C, H, W, kh, kw
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # N, H, W, K
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.data[None, :, None, None]

    def backward(grad):
        grad_w = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        grad_b = grad.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        grad_x = None
        if x.requires_grad:
            grad_padded = np.pad(grad, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
            grad_windows = sliding_window_view(grad_padded, (kh, kw), axis=(2, 3))
            flipped = weight.data[:, :, ::-1, ::-1]
            grad_x = np.tensordot(grad_windows, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
            grad_x = np.ascontiguousarray(grad_x)
        return grad_x, grad_w, grad_b

    return Tensor.from_op(out, (x, weight, bias), backward, "conv2d")


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; ties route the gradient to the first cell in row-major order."""
    _require_4d(x, "maxpool2 input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")

    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward(grad):
        routed = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(routed, argmax[..., None], grad[..., None], axis=-1)
        routed = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (routed,)

    return Tensor.from_op(out, (x,), backward, "maxpool2")


# --------------------
# Elementwise
# --------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)

    def backward(grad):
        return (grad * mask,)

    return Tensor.from_op(out, (x,), backward, "relu")


def _stable_sigmoid(values: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(values))
    out = np.where(values >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    # Saturation would otherwise round to exactly 0 or 1
    finfo = np.finfo(values.dtype)
    return np.clip(out, finfo.tiny, np.nextafter(values.dtype.type(1), values.dtype.type(0))).astype(values.dtype)


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)

    def backward(grad):
        return (grad * out * (1.0 - out),)

    return Tensor.from_op(out, (x,), backward, "sigmoid")


def negate(x: Tensor) -> Tensor:
    def backward(grad):
        return (-grad,)

    return Tensor.from_op(-x.data, (x,), backward, "negate")


def reverse(x: Tensor) -> Tensor:
    """1 - x, elementwise."""

    def backward(grad):
        return (-grad,)

    return Tensor.from_op(1.0 - x.data, (x,), backward, "reverse")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")

    def backward(grad):
        return grad, grad

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; `b` may carry a single channel broadcast over the channels of `a`."""
    broadcast = False
    if a.shape != b.shape:
        if a.data.ndim == 4 and b.data.ndim == 4 and b.shape[1] == 1 and (a.shape[0], *a.shape[2:]) == (b.shape[0], *b.shape[2:]):
            broadcast = True
        else:
            raise ShapeError(f"mul needs equal shapes or a 1-channel right operand, got {a.shape} and {b.shape}")

    def backward(grad):
        grad_a = grad * b.data if a.requires_grad else None
        grad_b = None
        if b.requires_grad:
            grad_b = grad * a.data
            if broadcast:
                grad_b = grad_b.sum(axis=1, keepdims=True)
        return grad_a, grad_b

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"Unknown elementwise kind '{kind}', expected 'add' or 'mul'")


def scale(x: Tensor, factor: float) -> Tensor:
    def backward(grad):
        return (grad * factor,)

    return Tensor.from_op(x.data * factor, (x,), backward, "scale")


def sum_all(x: Tensor) -> ScalarLoss:
    def backward(grad):
        return (np.broadcast_to(grad, x.shape).astype(x.dtype),)

    return ScalarLoss.from_op(np.asarray(x.data.sum()), (x,), backward, "sum")


def add_scalars(terms) -> ScalarLoss:
    terms = list(terms)
    if not terms:
        raise ShapeError("add_scalars needs at least one term")
    for term in terms:
        if term.data.size != 1:
            raise ShapeError(f"add_scalars expects scalar terms, got shape {term.shape}")

    total = terms[0].data.reshape(())
    for term in terms[1:]:
        total = total + term.data.reshape(())

    def backward(grad):
        return tuple(np.asarray(grad).reshape(t.shape) for t in terms)

    return ScalarLoss.from_op(np.asarray(total), terms, backward, "add_scalars")


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(x.data)


# --------------------
# Upsampling
# --------------------


@lru_cache(maxsize=64)
def interpolation_matrix(size: int, factor: int, dtype_name: str = "float64") -> np.ndarray:
    """
    (factor*size, size) matrix of half-pixel aligned linear interpolation weights.

    Output index i samples source coordinate (i + 0.5) / factor - 0.5, clamped to [0, size - 1].
    """
    dtype = np.dtype(dtype_name)
    out_size = size * factor
    matrix = np.zeros((out_size, size), dtype=dtype)
    src = (np.arange(out_size, dtype=np.float64) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, size - 1)
    lower = np.floor(src).astype(np.int64)
    upper = np.minimum(lower + 1, size - 1)
    frac = src - lower
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    matrix.setflags(write=False)
    return matrix


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Single-pass bilinear upsampling by a power-of-two factor."""
    _require_4d(x, "bilinear_upsample input")
    if factor not in UPSAMPLE_FACTORS:
        raise ShapeError(f"bilinear_upsample factor must be one of {UPSAMPLE_FACTORS}, got {factor}")
    _, _, h, w = x.shape
    rows = interpolation_matrix(h, factor, x.dtype.name)
    cols = interpolation_matrix(w, factor, x.dtype.name)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def backward(grad):
        return (np.matmul(np.matmul(rows.T, grad), cols),)

    return Tensor.from_op(out, (x,), backward, f"upsample_x{factor}")


# --------------------
# Loss
# --------------------


def _softplus(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, 0) + np.log1p(np.exp(-np.abs(values)))


def bce_from_logits(logits: Tensor, target: Tensor, balanced: bool = True) -> ScalarLoss:
    """
    Summed pixel-wise binary cross-entropy computed from logits.

    With `balanced`, each image weights its positive pixels by |G-|/|G| and its negative
    pixels by |G+|/|G|.
    """
    _require_4d(logits, "bce_from_logits logits")
    if logits.shape != target.shape or logits.shape[1] != 1:
        raise ShapeError(f"bce_from_logits needs matching (N, 1, H, W) logits and target, got {logits.shape} and {target.shape}")
    g = target.data
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("bce_from_logits target values must be 0 or 1")

    x = logits.data
    if balanced:
        pixels = g[0].size
        positives = g.sum(axis=(1, 2, 3), keepdims=True)
        pos_weight = (pixels - positives) / pixels
        neg_weight = positives / pixels
    else:
        pos_weight = neg_weight = 1.0

    # -ln p = softplus(-x), -ln(1 - p) = softplus(x)
    per_pixel = pos_weight * g * _softplus(-x) + neg_weight * (1.0 - g) * _softplus(x)
    total = np.asarray(per_pixel.sum(), dtype=x.dtype)

    def backward(grad):
        p = _stable_sigmoid(x)
        d_logits = pos_weight * g * (p - 1.0) + neg_weight * (1.0 - g) * p
        return (grad * d_logits).astype(x.dtype), None

    return ScalarLoss.from_op(total, (logits, target), backward, "bce_from_logits")
