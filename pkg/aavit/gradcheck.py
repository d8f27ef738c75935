"""Central-difference verification of the autodiff gradients."""
import logging
from typing import Callable, Dict, Iterable, Tuple

import numpy as np

from aavit.errors import ContractError
from aavit.tensor import Precision, Tensor

logger = logging.getLogger(__name__)

GraphBuilder = Callable[[Tensor], Tensor]


def numerical_gradient(f: GraphBuilder, theta: Tensor, h: float = 1e-5) -> np.ndarray:
    """(f(θ+h) - f(θ-h)) / 2h for every coordinate of ``theta``, in place."""
    grad = np.zeros_like(theta.data)
    flat = theta.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = f(theta).item()
        flat[i] = original - h
        lower = f(theta).item()
        flat[i] = original
        grad.flat[i] = (upper - lower) / (2.0 * h)
    return grad


def grad_check(f: GraphBuilder, theta: Tensor, h: float = 1e-5) -> float:
    """
    Max relative error between the autodiff and central-difference gradients.

    ``f`` rebuilds the graph from ``theta`` on every call and returns a
    scalar. The error per coordinate is |a - n| / max(1, |a|, |n|).
    """
    if theta.precision is not Precision.VERIFICATION:
        raise ContractError("grad_check needs verification (64-bit) precision")
    if not theta.requires_grad:
        raise ContractError("grad_check needs a tensor with requires_grad set")

    theta.zero_grad()
    f(theta).backward()
    analytic = theta.grad if theta.grad is not None else np.zeros_like(theta.data)
    analytic = analytic.copy()
    numeric = numerical_gradient(f, theta, h)

    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / scale).max())


def grad_check_named(
    loss: Callable[[], Tensor],
    named: Iterable[Tuple[str, Tensor]],
    h: float = 1e-5,
) -> Dict[str, float]:
    """Check every named tensor that feeds ``loss``; returns name -> max error."""
    errors = {}
    for name, tensor in named:
        errors[name] = grad_check(lambda _theta: loss(), tensor, h)
        logger.debug("grad_check %s: %.3e", name, errors[name])
    return errors
