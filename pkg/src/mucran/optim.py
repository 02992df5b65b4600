"""SGD and Adam optimizers over Network parameters.

State (momentum / Adam moments) is created lazily per parameter and always
matches the parameter shape. A step updates every unfrozen layer, resets all
gradient accumulators, and invalidates the network's cached activations.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from .errors import ConfigError
from .nn import Array, Network


class Optimizer:
    kind = "base"

    def __init__(self, lr: float):
        if lr <= 0:
            raise ConfigError("learning rate must be positive")
        self.lr = float(lr)
        self.step_count = 0

    def _update(self, layer_idx: int, param_idx: int, param: Array, grad: Array) -> None:
        raise NotImplementedError

    def step(self, network: Network) -> None:
        self.step_count += 1
        for li, layer in enumerate(network.layers):
            if layer.frozen:
                continue
            for pi, (p, g) in enumerate(zip(layer.params(), layer.grads())):
                self._update(li, pi, p, g)
        network.zero_grad()
        network.invalidate()

    def state_arrays(self) -> Dict[Tuple[int, int], List[Array]]:
        """Per-(layer, param) state tensors, for checkpointing."""
        return {}


class SGD(Optimizer):
    kind = "sgd"

    def __init__(self, lr: float = 1e-3, momentum: float = 0.0):
        super().__init__(lr)
        if momentum < 0:
            raise ConfigError("momentum must be >= 0")
        self.momentum = float(momentum)
        self._velocity: Dict[Tuple[int, int], Array] = {}

    def _update(self, li: int, pi: int, p: Array, g: Array) -> None:
        if self.momentum == 0.0:
            p -= (self.lr * g).astype(p.dtype, copy=False)
            return
        v = self._velocity.get((li, pi))
        if v is None:
            v = np.zeros_like(p)
            self._velocity[(li, pi)] = v
        v *= self.momentum
        v += g
        p -= (self.lr * v).astype(p.dtype, copy=False)

    def state_arrays(self) -> Dict[Tuple[int, int], List[Array]]:
        return {k: [v] for k, v in self._velocity.items()}


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, lr: float = 1e-4, beta1: float = 0.5, beta2: float = 0.999,
                 eps: float = 1e-8):
        super().__init__(lr)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("adam betas must be in [0, 1)")
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._moments: Dict[Tuple[int, int], Tuple[Array, Array]] = {}

    def _update(self, li: int, pi: int, p: Array, g: Array) -> None:
        mv = self._moments.get((li, pi))
        if mv is None:
            mv = (np.zeros_like(p), np.zeros_like(p))
            self._moments[(li, pi)] = mv
        m, v = mv
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * np.square(g)
        t = self.step_count
        mhat = m / (1.0 - self.beta1 ** t)
        vhat = v / (1.0 - self.beta2 ** t)
        p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype, copy=False)

    def state_arrays(self) -> Dict[Tuple[int, int], List[Array]]:
        return {k: [m, v] for k, (m, v) in self._moments.items()}


def make_optimizer(kind: str, **kwargs) -> Optimizer:
    if kind == "sgd":
        return SGD(**kwargs)
    if kind == "adam":
        return Adam(**kwargs)
    raise ConfigError(f"unknown optimizer kind {kind!r}")
