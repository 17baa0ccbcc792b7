from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Operands of a tensor op have incompatible shapes."""


BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Dense array node of a reverse-mode computation graph.

    Leaves are created by the caller (parameters, inputs); interior nodes are created by
    the ops in `app.modules.autodiff.functional` and remember their parents together with
    a backward rule mapping the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data, dtype=dtype if dtype is not None else None)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardRule] = None
        self.op = "leaf"

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardRule, op: str) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out.op = op
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def parents(self) -> Tuple["Tensor", ...]:
        return self._parents

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def zero_grad(self):
        self.grad = None

    def assert_finite(self, name: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"{name} contains NaN or Inf values (shape {self.shape})")

    def backward(self):
        """
        Populate `.grad` of every requires_grad leaf reachable from this scalar.

        Leaf gradients accumulate across calls; call `zero_grad` on the leaves to reset.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            return

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}, requires_grad={self.requires_grad})"


class ScalarLoss(Tensor):
    """A 0-d tensor produced by a loss op; `value` is its float reading."""

    __slots__ = ()

    @property
    def value(self) -> float:
        return float(self.data)


def topological_order(root: Tensor) -> List[Tensor]:
    """Nodes reachable from `root`, parents before children, each exactly once."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order
