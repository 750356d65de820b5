from __future__ import annotations

import numpy as np

from src.numkit.nets import Array, DenseNet, NetGrads


def clip_by_global_norm(grads: NetGrads, max_norm: float | None) -> NetGrads:
    if max_norm is None:
        return grads
    norm = float(np.linalg.norm(grads.flat()))
    if norm <= max_norm or norm == 0.0:
        return grads
    return grads.scaled(max_norm / norm)


def sgd_step(net: DenseNet, grads: NetGrads, lr: float) -> DenseNet:
    return net.replace(
        [w - lr * g for w, g in zip(net.weights, grads.weights)],
        [b - lr * g for b, g in zip(net.biases, grads.biases)],
    )


def polyak(target: DenseNet, online: DenseNet, rate: float) -> DenseNet:
    """target <- (1 - rate) * target + rate * online."""

    return target.replace(
        [(1.0 - rate) * t + rate * o for t, o in zip(target.weights, online.weights)],
        [(1.0 - rate) * t + rate * o for t, o in zip(target.biases, online.biases)],
    )


class Adam:
    """Adam with bias correction for a single DenseNet.

    One instance per network; the moment buffers follow the net's layer shapes.
    """

    def __init__(
        self,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        max_grad_norm: float | None = None,
    ) -> None:
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self._t = 0
        self._m: list[Array] | None = None
        self._v: list[Array] | None = None

    @property
    def steps(self) -> int:
        return self._t

    def step(self, net: DenseNet, grads: NetGrads) -> DenseNet:
        grads = clip_by_global_norm(grads, self.max_grad_norm)
        params = [p for pair in zip(net.weights, net.biases) for p in pair]
        gs = [g for pair in zip(grads.weights, grads.biases) for g in pair]
        if self._m is None or self._v is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]

        self._t += 1
        c1 = 1.0 - self.beta1**self._t
        c2 = 1.0 - self.beta2**self._t
        updated: list[Array] = []
        for i, (p, g) in enumerate(zip(params, gs)):
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / c1
            v_hat = self._v[i] / c2
            updated.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return net.replace(updated[0::2], updated[1::2])
