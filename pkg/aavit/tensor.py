"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a row-major numpy buffer. Every operator below records
its inputs and a closure that pushes the output gradient back to them, so
calling ``backward()`` on a scalar sweeps the recorded graph in reverse
topological order. The graph lives for one forward/backward pass and is
dropped afterwards.

Only the operators the transformer needs exist here. Broadcasting is
limited to adding a vector to every row (``add_row``); everything else
requires identical shapes.
"""
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from aavit.errors import ContractError, DimensionError, NumericError, ParameterError

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))
LAYER_NORM_EPS = 1e-5


class Precision(str, Enum):
    """Scalar mode of a computation graph."""

    STANDARD = "standard"
    VERIFICATION = "verification"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.STANDARD else np.float64)

    @classmethod
    def of(cls, dtype: np.dtype) -> "Precision":
        return cls.VERIFICATION if np.dtype(dtype) == np.float64 else cls.STANDARD


def _ensure_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite value produced by {op}")


class Tensor:
    def __init__(
        self,
        data,
        requires_grad: bool = False,
        precision: Optional[Precision] = None,
    ):
        if precision is None:
            # float numpy buffers keep their width; anything else is standard
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                precision = Precision.of(data.dtype)
            else:
                precision = Precision.STANDARD
        self.data = np.array(data, dtype=precision.dtype)
        _ensure_finite(self.data, "tensor construction")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        _ensure_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def precision(self) -> Precision:
        return Precision.of(self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self) -> None:
        """Populate ``grad`` on every tensor this scalar depends on."""
        if self.data.size != 1 or self.data.ndim > 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            node._parents = ()
            node._backward = None


def _topological_order(root: Tensor) -> List[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _same_precision(*tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"mixed precisions in one graph: {sorted(str(d) for d in dtypes)}")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    _same_precision(a, b)
    out = Tensor._from_op(a.data + b.data, (a, b), "add")

    def _backward(g):
        a._accumulate(g)
        b._accumulate(g)
    out._backward = _backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    _same_precision(a, b)
    out = Tensor._from_op(a.data * b.data, (a, b), "mul")

    def _backward(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)
    out._backward = _backward
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    out = Tensor._from_op(x.data * x.data.dtype.type(factor), (x,), "scale")

    def _backward(g):
        x._accumulate(g * factor)
    out._backward = _backward
    return out


def add_row(x: Tensor, bias: Tensor) -> Tensor:
    """``x[..., j] + bias[j]`` for every row of ``x``."""
    if bias.data.ndim != 1 or x.data.ndim < 1 or bias.shape[0] != x.shape[-1]:
        raise DimensionError(f"add_row: cannot add {list(bias.shape)} to rows of {list(x.shape)}")
    _same_precision(x, bias)
    out = Tensor._from_op(x.data + bias.data, (x, bias), "add_row")

    def _backward(g):
        x._accumulate(g)
        bias._accumulate(g.reshape(-1, bias.shape[0]).sum(axis=0))
    out._backward = _backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {list(a.shape)} and {list(b.shape)} are not aligned")
    _same_precision(a, b)
    out = Tensor._from_op(a.data @ b.data, (a, b), "matmul")

    def _backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)
    out._backward = _backward
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {list(x.shape)}")
    out = Tensor._from_op(np.ascontiguousarray(x.data.T), (x,), "transpose")

    def _backward(g):
        x._accumulate(g.T)
    out._backward = _backward
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise DimensionError(f"reshape: cannot view {list(x.shape)} as {list(shape)}")
    out = Tensor._from_op(x.data.reshape(shape).copy(), (x,), "reshape")

    def _backward(g):
        x._accumulate(g.reshape(x.shape))
    out._backward = _backward
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(f"slice_cols: [{start}, {stop}) out of range for shape {list(x.shape)}")
    out = Tensor._from_op(x.data[:, start:stop].copy(), (x,), "slice_cols")

    def _backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        x._accumulate(full)
    out._backward = _backward
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts or any(p.data.ndim != 2 or p.shape[0] != parts[0].shape[0] for p in parts):
        raise DimensionError(f"concat_cols: incompatible shapes {[list(p.shape) for p in parts]}")
    _same_precision(*parts)
    out = Tensor._from_op(np.concatenate([p.data for p in parts], axis=1), parts, "concat_cols")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def _backward(g):
        for part, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            part._accumulate(g[:, lo:hi])
    out._backward = _backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor._from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,), "sum")

    def _backward(g):
        x._accumulate(np.full(x.shape, g, dtype=x.dtype))
    out._backward = _backward
    return out


def pick(x: Tensor, index: int) -> Tensor:
    """Scalar element ``x[index]`` of a vector."""
    if x.data.ndim != 1:
        raise DimensionError(f"pick: expected a vector, got shape {list(x.shape)}")
    if not 0 <= index < x.shape[0]:
        raise ParameterError(f"pick: index {index} out of range for length {x.shape[0]}")
    out = Tensor._from_op(np.asarray(x.data[index], dtype=x.dtype), (x,), "pick")

    def _backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        x._accumulate(full)
    out._backward = _backward
    return out


def mean_last(x: Tensor) -> Tensor:
    """Mean over the last axis, keeping it with extent 1."""
    d = x.shape[-1]
    out = Tensor._from_op(x.data.mean(axis=-1, keepdims=True), (x,), "mean_last")

    def _backward(g):
        x._accumulate(np.broadcast_to(g / d, x.shape))
    out._backward = _backward
    return out


def gelu(x: Tensor) -> Tensor:
    """tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    v = x.data
    t = np.tanh(SQRT_2_OVER_PI * (v + GELU_COEFF * v ** 3))
    out = Tensor._from_op(0.5 * v * (1.0 + t), (x,), "gelu")

    def _backward(g):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * v ** 2)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * du))
    out._backward = _backward
    return out


def softmax_rowwise(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._from_op(y, (x,), "softmax")

    def _backward(g):
        x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))
    out._backward = _backward
    return out


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - log_z
    out = Tensor._from_op(y, (x,), "log_softmax")

    def _backward(g):
        x._accumulate(g - np.exp(y) * g.sum(axis=-1, keepdims=True))
    out._backward = _backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Per-row normalisation with the biased (divide-by-d) variance."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: gain {list(gain.shape)} / bias {list(bias.shape)} do not match width {d}"
        )
    _same_precision(x, gain, bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    inv_std = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std
    out = Tensor._from_op(x_hat * gain.data + bias.data, (x, gain, bias), "layer_norm")

    def _backward(g):
        rows = g.reshape(-1, d)
        gain._accumulate((rows * x_hat.reshape(-1, d)).sum(axis=0))
        bias._accumulate(rows.sum(axis=0))
        dx_hat = g * gain.data
        x._accumulate(
            inv_std * (
                dx_hat
                - dx_hat.mean(axis=-1, keepdims=True)
                - x_hat * (dx_hat * x_hat).mean(axis=-1, keepdims=True)
            )
        )
    out._backward = _backward
    return out


def pooling_bins(length: int, out_size: int) -> List[Tuple[int, int]]:
    """Bin ``i`` covers ``[floor(i*L/P), ceil((i+1)*L/P))``."""
    if not 1 <= out_size <= length:
        raise ParameterError(f"adaptive pooling needs 1 <= P <= L, got P={out_size}, L={length}")
    return [
        ((i * length) // out_size, -((-(i + 1) * length) // out_size))
        for i in range(out_size)
    ]


def pooling_matrix(length: int, out_size: int, dtype=np.float64) -> np.ndarray:
    weights = np.zeros((length, out_size), dtype=dtype)
    for i, (start, stop) in enumerate(pooling_bins(length, out_size)):
        weights[start:stop, i] = 1.0 / (stop - start)
    return weights


def adaptive_avg_pool_1d(x: Tensor, out_size: int) -> Tensor:
    length = x.shape[-1]
    pooling_bins(length, out_size)
    if out_size == length:
        weights = np.eye(length, dtype=x.dtype)
    else:
        weights = pooling_matrix(length, out_size, dtype=x.dtype)
    pooled = (x.data.reshape(-1, length) @ weights).reshape(x.shape[:-1] + (out_size,))
    out = Tensor._from_op(pooled, (x,), "adaptive_avg_pool_1d")

    def _backward(g):
        x._accumulate((g.reshape(-1, out_size) @ weights.T).reshape(x.shape))
    out._backward = _backward
    return out
