from __future__ import annotations

from collections.abc import Callable

import numpy as np
from numpy.typing import ArrayLike

from src.numkit.nets import Array, DenseNet, NetGrads, flatten_params, unflatten_params

# Denominator floor: entries whose analytic and numeric values are both below
# it are compared on an absolute scale.
REL_FLOOR = 1e-5


def numerical_gradient(f: Callable[[Array], float], x: ArrayLike, h: float = 1e-5) -> Array:
    """Central differences of a scalar function of a flat vector."""

    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        old = x0[i]
        x0[i] = old + h
        f_plus = f(x0)
        x0[i] = old - h
        f_minus = f(x0)
        x0[i] = old
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: ArrayLike, numeric: ArrayLike, floor: float = REL_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))


def net_numerical_gradient(
    loss: Callable[[DenseNet], float], net: DenseNet, h: float = 1e-5
) -> Array:
    return numerical_gradient(lambda v: loss(unflatten_params(net, v)), flatten_params(net), h=h)


def gradient_check(
    loss: Callable[[DenseNet], float], analytic: NetGrads, net: DenseNet, h: float = 1e-5
) -> float:
    """Max relative error between `analytic` parameter gradients and central differences."""

    return relative_error(analytic.flat(), net_numerical_gradient(loss, net, h=h))
