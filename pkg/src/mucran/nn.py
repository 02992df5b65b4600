"""Minimal batched neural-net engine on numpy: dense and strided 3-D convolution
layers, a smooth leaky activation, row-segment softmax, and reverse-mode gradients.

Everything is float32 by default (float64 is supported for gradient checking).
Layers cache what they need during forward and accumulate parameter gradients
during backward; a frozen layer still passes gradients through but accumulates
nothing. Sparse-gradient layers (ReLU, max pooling) are deliberately not
constructible.
"""

from __future__ import annotations

from contextlib import contextmanager
from itertools import product
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, InputError, NumericError, UsageError

Array = np.ndarray

# Layer kinds that rely on sparse gradients and are banned from the engine.
DISALLOWED_KINDS = frozenset({"relu", "rectifier", "max-pool", "maxpool", "max_pool"})


def require_finite(arr: Array, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


def glorot_uniform(rng: Optional[np.random.Generator], shape: Tuple[int, ...],
                   fan_in: int, fan_out: int, dtype) -> Array:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); zeros when no rng is given."""
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: Array) -> Array:
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


class Layer:
    """Base layer: batched forward/backward with gradient accumulation."""

    kind: str = "base"

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.frozen = False
        self._cache = None

    # Parameter-carrying layers override these three.
    def params(self) -> List[Array]:
        return []

    def grads(self) -> List[Array]:
        return []

    def config(self) -> dict:
        return {}

    def zero_grad(self) -> None:
        for g in self.grads():
            g.fill(0.0)

    def invalidate(self) -> None:
        self._cache = None

    def forward(self, x: Array) -> Array:
        raise NotImplementedError

    def backward(self, gy: Array) -> Array:
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise UsageError(
                f"{type(self).__name__}.backward called without a forward pass "
                "since the last parameter change"
            )
        return self._cache


class Dense(Layer):
    """Affine layer; trailing input dims are flattened."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        super().__init__(dtype)
        if in_features <= 0 or out_features <= 0:
            raise ConfigError("dense layer needs positive feature counts")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = glorot_uniform(rng, (out_features, in_features),
                                     in_features, out_features, self.dtype)
        self.bias = np.zeros(out_features, dtype=self.dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)

    def params(self) -> List[Array]:
        return [self.weight, self.bias]

    def grads(self) -> List[Array]:
        return [self.gweight, self.gbias]

    def config(self) -> dict:
        return {"in_features": self.in_features, "out_features": self.out_features}

    def forward(self, x: Array) -> Array:
        x = np.asarray(x, dtype=self.dtype)
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_features:
            raise InputError(
                f"dense layer expects {self.in_features} features, got {flat.shape[1]}"
            )
        self._cache = (flat, x.shape)
        return flat @ self.weight.T + self.bias

    def backward(self, gy: Array) -> Array:
        flat, xshape = self._need_cache()
        gy = np.asarray(gy, dtype=self.dtype)
        if not self.frozen:
            self.gweight += gy.T @ flat
            self.gbias += gy.sum(axis=0)
        return (gy @ self.weight).reshape(xshape)


class Conv3dStrided(Layer):
    """3-D convolution with stride (default 2) standing in for pooling."""

    kind = "conv-strided"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 2, padding: int = 1,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        super().__init__(dtype)
        if min(in_channels, out_channels, kernel, stride) <= 0 or padding < 0:
            raise ConfigError("conv layer needs positive channels/kernel/stride")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        k3 = kernel ** 3
        self.weight = glorot_uniform(
            rng, (out_channels, in_channels, kernel, kernel, kernel),
            in_channels * k3, out_channels * k3, self.dtype)
        self.bias = np.zeros(out_channels, dtype=self.dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)

    def params(self) -> List[Array]:
        return [self.weight, self.bias]

    def grads(self) -> List[Array]:
        return [self.gweight, self.gbias]

    def config(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
        }

    def out_dims(self, dims: Sequence[int]) -> Tuple[int, ...]:
        k, s, p = self.kernel, self.stride, self.padding
        out = tuple((d + 2 * p - k) // s + 1 for d in dims)
        if min(out) < 1:
            raise ConfigError(f"conv reduces dims {tuple(dims)} below 1")
        return out

    def _windows(self, xp: Array) -> Array:
        win = sliding_window_view(xp, (self.kernel,) * 3, axis=(2, 3, 4))
        s = self.stride
        return win[:, :, ::s, ::s, ::s]

    def forward(self, x: Array) -> Array:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 5 or x.shape[1] != self.in_channels:
            raise InputError(
                f"conv expects (batch, {self.in_channels}, d, h, w), got {x.shape}"
            )
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
        win = self._windows(xp)
        y = np.einsum("bcdhwxyz,ocxyz->bodhw", win, self.weight, optimize=True)
        y += self.bias.reshape(1, -1, 1, 1, 1)
        self._cache = (xp, x.shape)
        return y

    def backward(self, gy: Array) -> Array:
        xp, xshape = self._need_cache()
        gy = np.asarray(gy, dtype=self.dtype)
        if not self.frozen:
            win = self._windows(xp)
            self.gweight += np.einsum("bcdhwxyz,bodhw->ocxyz", win, gy, optimize=True)
            self.gbias += gy.sum(axis=(0, 2, 3, 4))
        s, p = self.stride, self.padding
        do, ho, wo = gy.shape[2:]
        gxp = np.zeros_like(xp)
        for kx, ky, kz in product(range(self.kernel), repeat=3):
            t = np.einsum("bodhw,oc->bcdhw", gy, self.weight[:, :, kx, ky, kz],
                          optimize=True)
            gxp[:, :, kx:kx + s * do:s, ky:ky + s * ho:s, kz:kz + s * wo:s] += t
        _, _, d, h, w = xshape
        return gxp[:, :, p:p + d, p:p + h, p:p + w]


class SmoothLeaky(Layer):
    """Smooth activation with asymptotic slope `slope` for x -> -inf and 1 for x -> +inf.

    f(x) = slope*x + (1-slope)*softplus(x); the gradient is everywhere dense,
    unlike ReLU-family activations.
    """

    kind = "activation"

    def __init__(self, slope: float = 0.2, dtype=np.float32):
        super().__init__(dtype)
        if not 0.0 < slope < 1.0:
            raise ConfigError("activation slope must be in (0, 1)")
        self.slope = float(slope)

    def config(self) -> dict:
        return {"slope": self.slope}

    def forward(self, x: Array) -> Array:
        x = np.asarray(x, dtype=self.dtype)
        self._cache = x
        return self.slope * x + (1.0 - self.slope) * _softplus(x)

    def backward(self, gy: Array) -> Array:
        x = self._need_cache()
        return np.asarray(gy, dtype=self.dtype) * (
            self.slope + (1.0 - self.slope) * _sigmoid(x))


class SoftmaxRows(Layer):
    """Independent softmax over consecutive segments (rows) of the last axis."""

    kind = "softmax-row"

    def __init__(self, arities: Sequence[int], dtype=np.float32):
        super().__init__(dtype)
        arities = tuple(int(a) for a in arities)
        if not arities or min(arities) < 2:
            raise ConfigError("softmax rows need at least one segment of arity >= 2")
        self.arities = arities
        offs = np.cumsum((0,) + arities)
        self.segments = [(int(offs[i]), int(offs[i + 1])) for i in range(len(arities))]
        self.width = int(offs[-1])

    def config(self) -> dict:
        return {"arities": list(self.arities)}

    def forward(self, x: Array) -> Array:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.width:
            raise InputError(f"softmax-row expects width {self.width}, got {x.shape[-1]}")
        y = np.empty_like(x)
        for a, b in self.segments:
            z = x[:, a:b]
            e = np.exp(z - z.max(axis=1, keepdims=True))
            y[:, a:b] = e / e.sum(axis=1, keepdims=True)
        self._cache = y
        return y

    def backward(self, gy: Array) -> Array:
        y = self._need_cache()
        gy = np.asarray(gy, dtype=self.dtype)
        gx = np.empty_like(gy)
        for a, b in self.segments:
            p, g = y[:, a:b], gy[:, a:b]
            gx[:, a:b] = p * (g - (g * p).sum(axis=1, keepdims=True))
        return gx


LAYER_KINDS = {
    Dense.kind: Dense,
    Conv3dStrided.kind: Conv3dStrided,
    SmoothLeaky.kind: SmoothLeaky,
    SoftmaxRows.kind: SoftmaxRows,
}


def make_layer(kind: str, dtype=np.float32, **config) -> Layer:
    """Construct a layer by kind name; sparse-gradient kinds are rejected."""
    if kind.lower() in DISALLOWED_KINDS:
        raise ConfigError(
            f"layer kind {kind!r} has sparse gradients and cannot be constructed"
        )
    cls = LAYER_KINDS.get(kind)
    if cls is None:
        raise ConfigError(f"unknown layer kind {kind!r}")
    return cls(dtype=dtype, **config)


class Network:
    """A plain stack of layers with cached activations for reverse mode.

    Single-writer: forward/backward/optimizer steps on one instance must be
    serialized by the caller. Distinct instances share nothing.
    """

    def __init__(self, layers: Sequence[Layer], input_shape: Optional[Tuple[int, ...]] = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self._forwarded = False

    def forward(self, x: Array) -> Array:
        x = np.asarray(x)
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise InputError(
                f"network expects input shape {self.input_shape} per sample, "
                f"got {tuple(x.shape[1:])}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        require_finite(x, "forward output")
        self._forwarded = True
        return x

    def backward(self, gy: Array) -> Array:
        if not self._forwarded:
            raise UsageError("backward called without a forward pass "
                             "since the last parameter change")
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        require_finite(gy, "input gradient")
        for layer in self.layers:
            for g in layer.grads():
                require_finite(g, f"{type(layer).__name__} parameter gradient")
        return gy

    def params(self) -> List[Array]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> List[Array]:
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def set_frozen(self, flag: bool) -> None:
        for layer in self.layers:
            layer.frozen = flag

    def invalidate(self) -> None:
        """Mark cached activations stale after a parameter change."""
        self._forwarded = False
        for layer in self.layers:
            layer.invalidate()

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


@contextmanager
def frozen(*networks: Network) -> Iterator[None]:
    """Temporarily freeze every layer of the given networks."""
    saved = [[layer.frozen for layer in net.layers] for net in networks]
    for net in networks:
        net.set_frozen(True)
    try:
        yield
    finally:
        for net, flags in zip(networks, saved):
            for layer, flag in zip(net.layers, flags):
                layer.frozen = flag
