#
# coca3d.tensor.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import contextlib
import logging
import threading
import numpy as np
import scipy.special
from typing import Callable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union


__all__ = [
    "NonFiniteError",
    "Tensor",
    "Parameter",
    "no_grad",
    "is_grad_enabled",
    "branch_trace",
    "record_branch",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "relu",
    "gelu",
    "softplus",
    "smooth_l1",
    "sum",
    "mean",
    "max",
    "reshape",
    "transpose",
    "swapaxes",
    "broadcast_to",
    "getitem",
    "take",
    "concat",
    "stack",
    "softmax",
    "log_softmax",
    "layer_norm",
]


# Get the logger
logger = logging.getLogger(__name__)


# Per thread autograd state
_state = threading.local()


class NonFiniteError(FloatingPointError):
    """
    Raised when an operation produces a NaN or Inf value

    """

    pass


def is_grad_enabled() -> bool:
    """
    Returns:
        True if operations are currently being recorded

    """
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """
    Disable recording of operations within the context

    """
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextlib.contextmanager
def branch_trace():
    """
    Record the branch taken by every piecewise operation (relu, max and
    smooth_l1) evaluated within the context. The yielded list receives one
    bytes signature per operation, so two forward passes took the same
    branches iff their lists are equal.

    """
    previous = getattr(_state, "branches", None)
    _state.branches = []
    try:
        yield _state.branches
    finally:
        _state.branches = previous


def record_branch(pattern: np.ndarray):
    """
    Add a branch signature to the active trace (e.g. a discrete matching)

    """
    branches = getattr(_state, "branches", None)
    if branches is not None:
        branches.append(np.ascontiguousarray(pattern).tobytes())


def _check_finite(data: np.ndarray, op: str):
    """
    Raise if the array contains NaN or Inf

    """
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("Non-finite value produced by '%s'" % op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """
    Sum a gradient over the axes that were broadcast in the forward pass

    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor(object):
    """
    A dense array of 64 bit floats which records the operations applied to it
    so that gradients can be computed in reverse mode

    """

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward: Callable = None,
        op: str = "leaf",
    ):
        """
        Initialise the tensor

        Args:
            data: The array data
            requires_grad: Does the tensor require a gradient
            parents: The tensors this tensor was computed from
            backward: The function mapping the output gradient to parent gradients
            op: The name of the operation that produced the tensor

        """
        if op == "leaf":
            self.data = np.array(data, dtype=np.float64)
            _check_finite(self.data, op)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.op = op
        self._backward = backward
        if requires_grad and backward is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self, set_to_none: bool = False):
        """
        Reset the gradient. With set_to_none the gradient is dropped and only
        comes back if a later backward pass reaches this leaf.

        """
        if set_to_none:
            self.grad = None
        elif self.grad is not None:
            self.grad[...] = 0

    def backward(self):
        """
        Populate the gradient of every leaf that requires one

        The tensor must be a scalar. Gradients accumulate into the leaves so
        call zero_grad between steps.

        """
        if self.data.size != 1:
            raise ValueError(
                "backward requires a scalar loss, got shape %s" % (self.shape,)
            )
        if not self.requires_grad:
            return

        # Topological order of the recorded graph
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        # Replay the tape in reverse
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.array(grad, dtype=np.float64)
                else:
                    node.grad += grad
                continue
            for parent, parent_grad in zip(node.parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                _check_finite(parent_grad, "backward of %s" % node.op)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

    def __repr__(self) -> str:
        return "Tensor(shape=%s, op=%s, requires_grad=%s)" % (
            self.shape,
            self.op,
            self.requires_grad,
        )

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def max(self, axis: int = -1):
        return max(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def swapaxes(self, axis1: int, axis2: int):
        return swapaxes(self, axis1, axis2)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)


class Parameter(Tensor):
    """
    A named trainable leaf tensor which may be frozen

    """

    def __init__(self, data, name: str = "", frozen: bool = False):
        """
        Initialise the parameter

        Args:
            data: The initial value
            name: The dotted name of the parameter within its model
            frozen: Exclude the parameter from optimisation

        """
        super().__init__(data, requires_grad=not frozen)
        self.name = name
        self.frozen = frozen

    def freeze(self):
        """
        Freeze the parameter. Freezing twice has no further effect.

        """
        self.frozen = True
        self.requires_grad = False
        self.grad = None

    def __repr__(self) -> str:
        return "Parameter(name=%s, shape=%s, frozen=%s)" % (
            self.name,
            self.shape,
            self.frozen,
        )


def as_tensor(value: Union[Tensor, float, np.ndarray]) -> Tensor:
    """
    Wrap a constant as a tensor which does not require a gradient

    """
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(
    data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str
) -> Tensor:
    """
    Create the output of an operation, recording it if needed

    """
    _check_finite(data, op)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, False, (), None, op)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return (
            _unbroadcast(grad * b.data, a.shape),
            _unbroadcast(grad * a.data, b.shape),
        )

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return (
            _unbroadcast(grad / b.data, a.shape),
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    return _result(data, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda grad: (-grad,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        return (grad * exponent * a.data ** (exponent - 1),)

    return _result(a.data**exponent, (a,), backward, "power")


def matmul(a, b) -> Tensor:
    """
    Matrix product over the last two axes, broadcasting leading axes

    Args:
        a: The left operand (..., n, k)
        b: The right operand (..., k, m)

    Returns:
        The product (..., n, m)

    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError("matmul shape mismatch: %s x %s" % (a.shape, b.shape))

    def backward(grad):
        return (
            _unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape),
            _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape),
        )

    return _result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)
    return _result(data, (a,), lambda grad: (grad * data,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _result(data, (a,), lambda grad: (grad / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)

    def backward(grad):
        with np.errstate(divide="ignore"):
            return (grad * 0.5 / data,)

    return _result(data, (a,), backward, "sqrt")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    record_branch(mask)
    return _result(a.data * mask, (a,), lambda grad: (grad * mask,), "relu")


def gelu(a) -> Tensor:
    """
    Gaussian error linear unit (tanh approximation)

    """
    a = as_tensor(a)
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    t = np.tanh(c * (x + 0.044715 * x**3))

    def backward(grad):
        dt = (1 - t * t) * c * (1 + 3 * 0.044715 * x * x)
        return (grad * (0.5 * (1 + t) + 0.5 * x * dt),)

    return _result(0.5 * x * (1 + t), (a,), backward, "gelu")


def softplus(a) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        return (grad * scipy.special.expit(a.data),)

    return _result(np.logaddexp(0, a.data), (a,), backward, "softplus")


def smooth_l1(a) -> Tensor:
    """
    Elementwise Huber function with unit threshold

    """
    a = as_tensor(a)
    absolute = np.abs(a.data)
    inside = absolute < 1
    record_branch(inside)
    data = np.where(inside, 0.5 * a.data**2, absolute - 0.5)

    def backward(grad):
        return (grad * np.clip(a.data, -1, 1),)

    return _result(data, (a,), backward, "smooth_l1")


def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    total = sum(a, axis, keepdims)
    return total * (total.size / a.size)


def max(a, axis: int = -1) -> Tensor:
    """
    Maximum along one axis. The gradient flows to the first maximal entry.

    """
    a = as_tensor(a)
    index = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    record_branch(index)

    def backward(grad):
        result = np.zeros_like(a.data)
        np.put_along_axis(result, index, np.expand_dims(grad, axis), axis=axis)
        return (result,)

    data = np.squeeze(np.take_along_axis(a.data, index, axis=axis), axis=axis)
    return _result(data, (a,), backward, "max")


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    return _result(
        a.data.reshape(shape), (a,), lambda grad: (grad.reshape(a.shape),), "reshape"
    )


def transpose(a, axes: Optional[tuple] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(
        np.transpose(a.data, axes),
        (a,),
        lambda grad: (np.transpose(grad, inverse),),
        "transpose",
    )


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _result(
        np.swapaxes(a.data, axis1, axis2),
        (a,),
        lambda grad: (np.swapaxes(grad, axis1, axis2),),
        "swapaxes",
    )


def broadcast_to(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    return _result(
        np.broadcast_to(a.data, shape),
        (a,),
        lambda grad: (_unbroadcast(grad, a.shape),),
        "broadcast_to",
    )


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        result = np.zeros_like(a.data)
        np.add.at(result, index, grad)
        return (result,)

    return _result(a.data[index], (a,), backward, "getitem")


def take(a, indices) -> Tensor:
    """
    Gather rows along the first axis (an embedding lookup)

    """
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[0]):
        raise ValueError("take index out of range [0, %d)" % a.shape[0])

    def backward(grad):
        result = np.zeros_like(a.data)
        np.add.at(result, indices, grad)
        return (result,)

    return _result(a.data[indices], (a,), backward, "take")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, splits, axis=axis))

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        backward,
        "concat",
    )


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(grad):
        return tuple(np.take(grad, i, axis=axis) for i in range(len(tensors)))

    return _result(
        np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack"
    )


def softmax(a, axis: int = -1, mask: np.ndarray = None) -> Tensor:
    """
    Softmax along an axis with max subtraction

    Args:
        a: The input logits
        axis: The axis to normalise over
        mask: Optional boolean array, broadcastable to the input, which is
            True where an entry may receive probability. Masked entries get
            exactly zero probability and zero gradient.

    Returns:
        The probabilities

    """
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(mask, x.shape)
        if not np.all(np.any(mask, axis=axis)):
            raise ValueError("softmax row with every entry masked")
        x = np.where(mask, x, -np.inf)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def backward(grad):
        return (data * (grad - np.sum(grad * data, axis=axis, keepdims=True)),)

    return _result(data, (a,), backward, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    data = scipy.special.log_softmax(a.data, axis=axis)

    def backward(grad):
        return (grad - np.exp(data) * np.sum(grad, axis=axis, keepdims=True),)

    return _result(data, (a,), backward, "log_softmax")


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """
    Normalise the last axis to zero mean and unit variance, then apply the
    affine transform

    Args:
        a: The input
        gain: The per-feature gain
        bias: The per-feature bias
        eps: Added to the variance

    Returns:
        The normalised tensor

    """
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    if a.shape[-1] < 1:
        raise ValueError("layer_norm over an empty axis")
    n = a.shape[-1]
    centred = a.data - a.data.mean(axis=-1, keepdims=True)
    variance = np.mean(centred * centred, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_std = 1.0 / np.sqrt(variance + eps)
        normed = centred * inv_std
    data = normed * gain.data + bias.data

    def backward(grad):
        dnormed = grad * gain.data
        da = (inv_std / n) * (
            n * dnormed
            - dnormed.sum(axis=-1, keepdims=True)
            - normed * (dnormed * normed).sum(axis=-1, keepdims=True)
        )
        return (
            da,
            _unbroadcast(grad * normed, gain.shape),
            _unbroadcast(grad, bias.shape),
        )

    return _result(data, (a, gain, bias), backward, "layer_norm")
